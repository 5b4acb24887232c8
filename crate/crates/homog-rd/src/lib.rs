//! Numerical homogenization of periodic reaction-diffusion equations.
//!
//! The object of study is the oscillating problem
//!
//! ```text
//!   rho(x/e) du_e/dt = Div a(x, t, x/e, t/e^k, Du_e) + (1/e) g(x/e, t/e^k, u_e)
//! ```
//!
//! on a box Q with homogeneous Dirichlet data, where the coefficients are
//! 1-periodic in the fast variables y = x/e and tau = t/e^k. As e -> 0 the
//! solutions converge to the solution of an effective equation
//!
//! ```text
//!   du0/dt = Div q(x, t, u0, Du0) + q0(x, t, u0, Du0)
//! ```
//!
//! whose coefficients are averages of cell-problem correctors. The shape of
//! the cell problem depends on the exponent k: elliptic in y with tau frozen
//! for 0 < k < 2, a tau-periodic parabolic problem for k = 2, and elliptic
//! with tau-averaged coefficients for k > 2.
//!
//! The crate provides the full numerical pipeline:
//!
//! * [`coefficients`]: coefficient laws, builtin registry, structural
//!   validation of the standing assumptions,
//! * [`torus`]: spectral calculus on the periodicity cell (gradients,
//!   divergence, Poisson solves, quadrature, the reaction potential),
//! * [`cell`]: corrector solvers for all three regimes,
//! * [`effective`]: effective flux/reaction assembly, tabulation and
//!   interpolation,
//! * [`macroscale`]: finite-difference solver for the effective equation,
//! * [`dns`]: direct numerical simulation of the oscillating problem with
//!   energy and a-priori monitors,
//! * [`report`]: the e-ladder convergence study and its machine-readable
//!   report.
//!
//! Each capability has a runnable example under `examples/`; the `homog-rd`
//! binary exposes the same stages as subcommands.

// Numerical kernels below walk one shared node index across several strided
// arrays at once; iterator rewrites of those loops obscure the stencils.
#![allow(clippy::needless_range_loop)]

pub mod cell;
pub mod coefficients;
pub mod config;
pub mod dns;
pub mod effective;
pub mod error;
pub mod expr;
pub mod fd;
pub mod macroscale;
pub mod report;
pub mod torus;

pub use error::{Error, Result};
