//! Finite-difference solver for the effective (homogenized) equation.
//!
//! The macroscale problem on the box Q with homogeneous Dirichlet data is
//!
//! ```text
//!   rho_bar du0/dt = Div q(u0, Du0) + q0(u0, Du0),   u0(0, x) = u_init(x),
//! ```
//!
//! where `rho_bar` is the cell average of the density and (q, q0) come from
//! an [`EffectiveLaw`]. Space is discretized on a uniform node grid with
//! `macro_x` cells per axis: the divergence is conservative, differencing
//! face fluxes whose gradient argument is the central difference across the
//! face (plus averaged tangential central differences in 2d), and the
//! reaction argument uses nodal central differences. Time stepping is
//! implicit Euler with `macro_t` uniform steps; each step solves its
//! nonlinear system by the damped Newton driver of [`crate::fd`], whose
//! corrections use finite-difference Jacobian-vector products inside
//! BiCGStab. A step that fails to converge is retried on half the step
//! size, recursively, at most [`MAX_HALVINGS`] times before the run aborts
//! with a hard error; frames are always recorded at the nominal times.
//!
//! Boundary nodes are pinned to zero exactly, never solved for. In 1d the
//! residual couples three nodes and the Newton preconditioner is an exact
//! tridiagonal factorization; in 2d the tangential face terms widen the
//! stencil to the 9-point box and the preconditioner is ILU(0).
//!
//! [`uniqueness_probe`] reruns a solve with the initial datum and every
//! Newton initial guess perturbed by size eta and reports how far the two
//! trajectories separate. For scenarios with a unique, stably computed
//! solution the separation scales linearly in eta; the eta = 0 probe must
//! return exactly zero (the solver is deterministic).

use crate::coefficients::CoefficientSet;
use crate::config::ScenarioConfig;
use crate::effective::EffectiveLaw;
use crate::error::{Error, Result};
use crate::fd::{self, rms, NewtonOpts, Stencil};

/// Maximum number of recursive step halvings before a hard failure.
pub const MAX_HALVINGS: usize = 6;

/// Cell average of the density weight, the time coefficient of the
/// effective equation. Rectangle rule on the torus, exact for the band
/// limited weights the builtin laws use.
pub fn rho_bar(set: &CoefficientSet) -> f64 {
    if !set.density.y_dependent {
        return set.density.rho([0.0, 0.0]);
    }
    let n = if set.dimension == 1 { 512 } else { 128 };
    let mut sum = 0.0;
    if set.dimension == 1 {
        for i in 0..n {
            sum += set.density.rho([i as f64 / n as f64, 0.0]);
        }
        sum / n as f64
    } else {
        for j in 0..n {
            for i in 0..n {
                sum += set.density.rho([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        sum / (n * n) as f64
    }
}

/// Convergence accounting for one macro solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct MacroStats {
    /// Implicit Euler steps taken, substeps included.
    pub steps: usize,
    pub newton_iters: usize,
    pub krylov_iters: usize,
    /// Step-halving events (each halves one failed attempt).
    pub halvings: usize,
    pub max_newton_per_step: usize,
}

/// The macro trajectory: node values of every nominal time frame.
#[derive(Clone, Debug)]
pub struct MacroSolution {
    pub dim: usize,
    pub domain: [[f64; 2]; 2],
    /// Cells per axis; nodes per axis is nx + 1.
    pub nx: usize,
    /// Nominal time steps; frames.len() is nt + 1.
    pub nt: usize,
    pub t_final: f64,
    pub rho_bar: f64,
    /// Row-major node values (iy * (nx + 1) + ix in 2d), boundary included.
    pub frames: Vec<Vec<f64>>,
    pub stats: MacroStats,
}

impl MacroSolution {
    fn nodes_per_axis(&self) -> usize {
        self.nx + 1
    }

    /// Multilinear space-time interpolation of the trajectory; queries are
    /// clamped to the space-time cylinder.
    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        let (it, wt) = locate_uniform(t / self.t_final, self.nt);
        let a = self.eval_frame(it, x);
        let b = self.eval_frame(it + 1, x);
        a + wt * (b - a)
    }

    fn eval_frame(&self, it: usize, x: [f64; 2]) -> f64 {
        let f = &self.frames[it.min(self.nt)];
        let m = self.nodes_per_axis();
        let s0 = (x[0] - self.domain[0][0]) / (self.domain[0][1] - self.domain[0][0]);
        let (i0, w0) = locate_uniform(s0, self.nx);
        if self.dim == 1 {
            return f[i0] + w0 * (f[i0 + 1] - f[i0]);
        }
        let s1 = (x[1] - self.domain[1][0]) / (self.domain[1][1] - self.domain[1][0]);
        let (i1, w1) = locate_uniform(s1, self.nx);
        let v00 = f[i1 * m + i0];
        let v10 = f[i1 * m + i0 + 1];
        let v01 = f[(i1 + 1) * m + i0];
        let v11 = f[(i1 + 1) * m + i0 + 1];
        let lo = v00 + w0 * (v10 - v00);
        let hi = v01 + w0 * (v11 - v01);
        lo + w1 * (hi - lo)
    }

    /// Largest node magnitude over the whole trajectory.
    pub fn sup_abs(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Spatial L2 norm of one frame by the trapezoid rule (boundary nodes
    /// are zero, so this is the cell-volume weighted interior sum).
    pub fn l2_space(&self, frame: usize) -> f64 {
        let f = &self.frames[frame];
        let mut vol = (self.domain[0][1] - self.domain[0][0]) / self.nx as f64;
        if self.dim == 2 {
            vol *= (self.domain[1][1] - self.domain[1][0]) / self.nx as f64;
        }
        (f.iter().map(|v| v * v).sum::<f64>() * vol).sqrt()
    }
}

/// Fractional coordinate s in [0, 1] to (cell index, weight) on n cells.
fn locate_uniform(s: f64, n: usize) -> (usize, f64) {
    let c = (s.clamp(0.0, 1.0)) * n as f64;
    let i = (c.floor() as usize).min(n - 1);
    (i, c - i as f64)
}

struct MacroOp<'a> {
    law: &'a EffectiveLaw,
    dim: usize,
    domain: [[f64; 2]; 2],
    nx: usize,
    h: [f64; 2],
    rho_bar: f64,
    tol_macro: f64,
    stencil: Stencil,
}

impl<'a> MacroOp<'a> {
    fn new(cfg: &ScenarioConfig, set: &CoefficientSet, law: &'a EffectiveLaw) -> Result<Self> {
        let nx = cfg.grids.macro_x;
        if nx < 2 {
            return Err(Error::Config("grids.macro_x must be at least 2".into()));
        }
        let dim = set.dimension;
        let mut h = [0.0; 2];
        for i in 0..dim {
            h[i] = (cfg.domain[i][1] - cfg.domain[i][0]) / nx as f64;
        }
        let stencil =
            if dim == 1 { Stencil::line(nx - 1) } else { Stencil::grid9(nx - 1, nx - 1) };
        Ok(MacroOp {
            law,
            dim,
            domain: cfg.domain,
            nx,
            h,
            rho_bar: rho_bar(set),
            tol_macro: cfg.tol.macro_step,
            stencil,
        })
    }

    fn nodes(&self) -> usize {
        let m = self.nx + 1;
        if self.dim == 1 {
            m
        } else {
            m * m
        }
    }

    /// Scatter interior unknowns into a full node array with zero boundary.
    fn full(&self, w: &[f64]) -> Vec<f64> {
        let m = self.nx + 1;
        let mut u = vec![0.0; self.nodes()];
        if self.dim == 1 {
            u[1..self.nx].copy_from_slice(w);
        } else {
            for iy in 1..self.nx {
                for ix in 1..self.nx {
                    u[iy * m + ix] = w[(iy - 1) * (self.nx - 1) + (ix - 1)];
                }
            }
        }
        u
    }

    fn interior(&self, u: &[f64]) -> Vec<f64> {
        let m = self.nx + 1;
        if self.dim == 1 {
            u[1..self.nx].to_vec()
        } else {
            let mut w = Vec::with_capacity((self.nx - 1) * (self.nx - 1));
            for iy in 1..self.nx {
                for ix in 1..self.nx {
                    w.push(u[iy * m + ix]);
                }
            }
            w
        }
    }

    /// Implicit Euler residual on the interior unknowns.
    fn residual(&self, w: &[f64], uprev: &[f64], dt: f64) -> Result<Vec<f64>> {
        let u = self.full(w);
        if self.dim == 1 {
            self.residual_1d(&u, uprev, dt)
        } else {
            self.residual_2d(&u, uprev, dt)
        }
    }

    fn residual_1d(&self, u: &[f64], uprev: &[f64], dt: f64) -> Result<Vec<f64>> {
        let n = self.nx;
        let h = self.h[0];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let xi = (u[i + 1] - u[i]) / h;
            let r = 0.5 * (u[i] + u[i + 1]);
            q[i] = self.law.q(r, [xi, 0.0])?[0];
        }
        let mut out = vec![0.0; n - 1];
        for i in 1..n {
            let xc = (u[i + 1] - u[i - 1]) / (2.0 * h);
            let q0 = self.law.q0(u[i], [xc, 0.0])?;
            out[i - 1] =
                self.rho_bar * (u[i] - uprev[i]) / dt - (q[i] - q[i - 1]) / h - q0;
        }
        Ok(out)
    }

    fn residual_2d(&self, u: &[f64], uprev: &[f64], dt: f64) -> Result<Vec<f64>> {
        let n = self.nx;
        let m = n + 1;
        let (hx, hy) = (self.h[0], self.h[1]);
        let at = |ix: usize, iy: usize| u[iy * m + ix];

        // x faces (ix + 1/2, iy) for interior rows iy
        let mut qx = vec![0.0; n * (n - 1)];
        for iy in 1..n {
            for ix in 0..n {
                let xi1 = (at(ix + 1, iy) - at(ix, iy)) / hx;
                let xi2 = (at(ix, iy + 1) - at(ix, iy - 1) + at(ix + 1, iy + 1)
                    - at(ix + 1, iy - 1))
                    / (4.0 * hy);
                let r = 0.5 * (at(ix, iy) + at(ix + 1, iy));
                qx[(iy - 1) * n + ix] = self.law.q(r, [xi1, xi2])?[0];
            }
        }
        // y faces (ix, iy + 1/2) for interior columns ix
        let mut qy = vec![0.0; n * (n - 1)];
        for ix in 1..n {
            for iy in 0..n {
                let xi2 = (at(ix, iy + 1) - at(ix, iy)) / hy;
                let xi1 = (at(ix + 1, iy) - at(ix - 1, iy) + at(ix + 1, iy + 1)
                    - at(ix - 1, iy + 1))
                    / (4.0 * hx);
                let r = 0.5 * (at(ix, iy) + at(ix, iy + 1));
                qy[(ix - 1) * n + iy] = self.law.q(r, [xi1, xi2])?[1];
            }
        }

        let mut out = vec![0.0; (n - 1) * (n - 1)];
        for iy in 1..n {
            for ix in 1..n {
                let xc1 = (at(ix + 1, iy) - at(ix - 1, iy)) / (2.0 * hx);
                let xc2 = (at(ix, iy + 1) - at(ix, iy - 1)) / (2.0 * hy);
                let uc = at(ix, iy);
                let q0 = self.law.q0(uc, [xc1, xc2])?;
                let divx = (qx[(iy - 1) * n + ix] - qx[(iy - 1) * n + ix - 1]) / hx;
                let divy = (qy[(ix - 1) * n + iy] - qy[(ix - 1) * n + iy - 1]) / hy;
                out[(iy - 1) * (n - 1) + (ix - 1)] =
                    self.rho_bar * (uc - uprev[iy * m + ix]) / dt - divx - divy - q0;
            }
        }
        Ok(out)
    }

    /// One implicit Euler attempt from `wprev` over `dt`.
    fn take_step(
        &self,
        wprev: &[f64],
        dt: f64,
        bump: Option<&[f64]>,
        stats: &mut MacroStats,
    ) -> Result<Vec<f64>> {
        let uprev = self.full(wprev);
        let f = |w: &[f64]| self.residual(w, &uprev, dt);
        let mut w = wprev.to_vec();
        if let Some(b) = bump {
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi += bi;
            }
        }
        let scale = rms(&f(&w)?).max(1e-14);
        let opts = NewtonOpts {
            tol_abs: self.tol_macro * scale,
            max_iters: 30,
            max_line_search: 8,
            krylov_max: 500,
        };
        let st = fd::newton_krylov(&f, &mut w, &self.stencil, &opts)?;
        stats.steps += 1;
        stats.newton_iters += st.iters;
        stats.krylov_iters += st.krylov;
        stats.max_newton_per_step = stats.max_newton_per_step.max(st.iters);
        Ok(w)
    }

    /// Advance over `dt`, halving recursively on step failure.
    fn advance(
        &self,
        w: &mut Vec<f64>,
        dt: f64,
        depth: usize,
        bump: Option<&[f64]>,
        stats: &mut MacroStats,
    ) -> Result<()> {
        match self.take_step(w, dt, bump, stats) {
            Ok(next) => {
                *w = next;
                Ok(())
            }
            Err(Error::StepFailed(msg)) => {
                if depth < MAX_HALVINGS {
                    stats.halvings += 1;
                    self.advance(w, 0.5 * dt, depth + 1, bump, stats)?;
                    self.advance(w, 0.5 * dt, depth + 1, bump, stats)
                } else {
                    Err(Error::StepFailed(format!(
                        "macro step failed after {MAX_HALVINGS} halvings: {msg}"
                    )))
                }
            }
            Err(e) => Err(e),
        }
    }
}

/// Solve the effective equation on the scenario's macro grid.
pub fn solve(
    cfg: &ScenarioConfig,
    set: &CoefficientSet,
    law: &EffectiveLaw,
) -> Result<MacroSolution> {
    solve_inner(cfg, set, law, 0.0)
}

fn solve_inner(
    cfg: &ScenarioConfig,
    set: &CoefficientSet,
    law: &EffectiveLaw,
    eta: f64,
) -> Result<MacroSolution> {
    let op = MacroOp::new(cfg, set, law)?;
    let nt = cfg.grids.macro_t;
    let dt = cfg.t_final / nt as f64;
    let mut stats = MacroStats::default();

    // initial datum on the nodes, boundary ring pinned to zero
    let mut u0 = vec![0.0; op.nodes()];
    let m = op.nx + 1;
    if op.dim == 1 {
        for (i, v) in u0.iter_mut().enumerate().take(op.nx).skip(1) {
            let x = op.domain[0][0] + i as f64 * op.h[0];
            *v = set.initial.u0([x, 0.0]);
        }
    } else {
        for iy in 1..op.nx {
            for ix in 1..op.nx {
                let x = [
                    op.domain[0][0] + ix as f64 * op.h[0],
                    op.domain[1][0] + iy as f64 * op.h[1],
                ];
                u0[iy * m + ix] = set.initial.u0(x);
            }
        }
    }
    if eta != 0.0 {
        perturb(&mut u0, op.dim, op.nx, eta, 1.0);
    }

    let bump = if eta != 0.0 {
        let mut b = vec![0.0; op.nodes()];
        perturb(&mut b, op.dim, op.nx, eta, 2.0);
        Some(op.interior(&b))
    } else {
        None
    };

    let mut frames = Vec::with_capacity(nt + 1);
    frames.push(u0.clone());
    let mut w = op.interior(&u0);
    for _ in 0..nt {
        op.advance(&mut w, dt, 0, bump.as_deref(), &mut stats)?;
        frames.push(op.full(&w));
    }

    Ok(MacroSolution {
        dim: op.dim,
        domain: op.domain,
        nx: op.nx,
        nt,
        t_final: cfg.t_final,
        rho_bar: op.rho_bar,
        frames,
        stats,
    })
}

/// Add `eta sin(freq pi s1) (sin(freq pi s2))` to a node array; vanishes on
/// the boundary ring for integer freq.
fn perturb(u: &mut [f64], dim: usize, nx: usize, eta: f64, freq: f64) {
    let m = nx + 1;
    if dim == 1 {
        for (i, v) in u.iter_mut().enumerate() {
            let s = i as f64 / nx as f64;
            *v += eta * (freq * std::f64::consts::PI * s).sin();
        }
    } else {
        for iy in 0..m {
            for ix in 0..m {
                let s1 = ix as f64 / nx as f64;
                let s2 = iy as f64 / nx as f64;
                u[iy * m + ix] += eta
                    * (freq * std::f64::consts::PI * s1).sin()
                    * (freq * std::f64::consts::PI * s2).sin();
            }
        }
    }
}

/// Result of a uniqueness probe at perturbation size eta.
#[derive(Clone, Copy, Debug)]
pub struct UniquenessProbe {
    pub eta: f64,
    /// sup over frames of the rms node distance between the runs.
    pub divergence: f64,
    /// divergence / eta (0 when eta = 0).
    pub ratio: f64,
}

/// Rerun the macro solve with the initial datum and every Newton initial
/// guess perturbed by size eta and measure the trajectory separation. For a
/// well-posed scenario the separation is O(eta); eta = 0 must give exactly
/// zero because the solve is deterministic.
pub fn uniqueness_probe(
    cfg: &ScenarioConfig,
    set: &CoefficientSet,
    law: &EffectiveLaw,
    eta: f64,
) -> Result<UniquenessProbe> {
    let base = solve_inner(cfg, set, law, 0.0)?;
    let pert = solve_inner(cfg, set, law, eta)?;
    let mut divergence = 0.0f64;
    for (a, b) in base.frames.iter().zip(&pert.frames) {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        divergence = divergence.max(rms(&d));
    }
    let ratio = if eta != 0.0 { divergence / eta } else { 0.0 };
    Ok(UniquenessProbe { eta, divergence, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup(src: &str) -> (ScenarioConfig, CoefficientSet, EffectiveLaw) {
        let cfg = ScenarioConfig::parse(src).unwrap();
        let set = crate::coefficients::build(&cfg).unwrap();
        let law = crate::effective::build(&cfg, &set, None).unwrap();
        (cfg, set, law)
    }

    /// Discrete Dirichlet Laplacian eigenvalue of the first sine mode.
    fn lambda_h(h: f64, len: f64) -> f64 {
        2.0 / (h * h) * (1.0 - (PI * h / len).cos())
    }

    #[test]
    fn heat_mode_decays_at_the_discrete_rate() {
        // cos1d flux has bhat = sqrt(3); with rho = 1 and g = 0 the first
        // sine mode is an exact eigenvector of the conservative scheme, so
        // every implicit Euler step multiplies it by 1/(1 + dt bhat
        // lambda_h) exactly.
        let (cfg, set, law) = setup(
            "id = \"t\"\ndimension = 1\nT = 0.05\n[flux]\nid = \"cos1d\"\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 256\nmacro_x = 64\nmacro_t = 20\n",
        );
        let bhat = law.q(0.0, [1.0, 0.0]).unwrap()[0];
        assert!((bhat - 3.0f64.sqrt()).abs() < 1e-9, "bhat = {bhat}");

        let sol = solve(&cfg, &set, &law).unwrap();
        assert_eq!(sol.frames.len(), 21);
        assert_eq!(sol.stats.halvings, 0);
        let dt = cfg.t_final / 20.0;
        let c = 1.0 / (1.0 + dt * bhat * lambda_h(sol.domain_h(), 1.0));
        for j in 0..20 {
            for i in 1..sol.nx {
                let want = c * sol.frames[j][i];
                assert!(
                    (sol.frames[j + 1][i] - want).abs() < 5e-8,
                    "step {j} node {i}: {} vs {want}",
                    sol.frames[j + 1][i]
                );
            }
        }
        // energy decays monotonically
        for j in 0..20 {
            assert!(sol.l2_space(j + 1) < sol.l2_space(j));
        }
    }

    #[test]
    fn plap_macro_converges_and_preserves_symmetry() {
        let (cfg, set, law) = setup(
            "id = \"t\"\ndimension = 1\np = 4.0\nk = 1.0\nT = 0.02\n[flux]\nid = \"plap\"\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 32\nmacro_x = 32\nmacro_t = 10\n[tables]\nr = [0.0, 0.0, 1]\nxi = [-4.0, 4.0, 33]\n",
        );
        let sol = solve(&cfg, &set, &law).unwrap();
        assert_eq!(sol.stats.halvings, 0);
        assert!(sol.stats.max_newton_per_step <= 12, "{:?}", sol.stats);
        for j in 0..10 {
            assert!(sol.l2_space(j + 1) < sol.l2_space(j), "energy rose at step {j}");
        }
        assert!(sol.sup_abs() <= 1.0 + 1e-12);
        // sin(pi x) initial datum is symmetric about the midpoint and the
        // scheme preserves the symmetry
        let last = &sol.frames[10];
        for i in 0..=sol.nx {
            let d = (last[i] - last[sol.nx - i]).abs();
            assert!(d < 1e-9, "asymmetry {d:.3e} at node {i}");
        }
    }

    #[test]
    fn two_d_separable_mode_decays_at_the_discrete_rate() {
        // diag flux: bhat = diag(sqrt(3), sqrt(8)); the product sine mode
        // stays an exact discrete eigenvector because the off-diagonal
        // couplings vanish.
        let (cfg, set, law) = setup(
            "id = \"t\"\ndimension = 2\nT = 0.02\n[flux]\nid = \"diag\"\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 64\nmacro_x = 20\nmacro_t = 8\n",
        );
        let b1 = law.q(0.0, [1.0, 0.0]).unwrap()[0];
        let b2 = law.q(0.0, [0.0, 1.0]).unwrap()[1];
        assert!((b1 - 3.0f64.sqrt()).abs() < 1e-6, "b1 = {b1}");
        assert!((b2 - 8.0f64.sqrt()).abs() < 1e-6, "b2 = {b2}");

        let sol = solve(&cfg, &set, &law).unwrap();
        let h = sol.domain_h();
        let dt = cfg.t_final / 8.0;
        let c = 1.0 / (1.0 + dt * (b1 * lambda_h(h, 1.0) + b2 * lambda_h(h, 1.0)));
        let m = sol.nx + 1;
        for j in 0..8 {
            let mid = sol.nx / 2;
            let idx = mid * m + mid;
            let want = c * sol.frames[j][idx];
            assert!(
                (sol.frames[j + 1][idx] - want).abs() < 5e-7,
                "step {j}: {} vs {want}",
                sol.frames[j + 1][idx]
            );
        }
    }

    #[test]
    fn uniqueness_probe_scales_linearly_and_vanishes_at_zero() {
        let (cfg, set, law) = setup(
            "id = \"t\"\ndimension = 1\nk = 1.0\nT = 0.02\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 64\nmacro_x = 32\nmacro_t = 8\n",
        );
        let zero = uniqueness_probe(&cfg, &set, &law, 0.0).unwrap();
        assert_eq!(zero.divergence, 0.0, "deterministic solves must agree bitwise");

        let p1 = uniqueness_probe(&cfg, &set, &law, 2e-4).unwrap();
        let p2 = uniqueness_probe(&cfg, &set, &law, 1e-4).unwrap();
        assert!(p1.divergence > 0.0);
        let drift = (p1.ratio / p2.ratio - 1.0).abs();
        assert!(drift < 0.01, "ratio drifts {drift:.3e} under halving");
    }

    #[test]
    fn interpolation_reproduces_nodes_and_clamps() {
        let (cfg, set, law) = setup(
            "id = \"t\"\ndimension = 1\nT = 0.05\n[flux]\nid = \"cos1d\"\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 32\nmacro_x = 16\nmacro_t = 4\n",
        );
        let sol = solve(&cfg, &set, &law).unwrap();
        let dt = cfg.t_final / 4.0;
        let h = sol.domain_h();
        for j in 0..=4 {
            for i in 0..=16 {
                let v = sol.eval(j as f64 * dt, [i as f64 * h, 0.0]);
                assert!((v - sol.frames[j][i]).abs() < 1e-14);
            }
        }
        // out-of-cylinder queries clamp
        assert_eq!(sol.eval(-1.0, [0.5, 0.0]), sol.eval(0.0, [0.5, 0.0]));
        assert_eq!(sol.eval(9.0, [0.5, 0.0]), sol.eval(cfg.t_final, [0.5, 0.0]));
    }

    impl MacroSolution {
        fn domain_h(&self) -> f64 {
            (self.domain[0][1] - self.domain[0][0]) / self.nx as f64
        }
    }
}
