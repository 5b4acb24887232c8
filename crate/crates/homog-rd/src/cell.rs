//! Cell problems: the corrector pi(y, tau; x, t, r, xi) in all three
//! regimes.
//!
//! For a frozen macro state (x, t, r, xi) the corrector solves
//!
//! ```text
//!   sub (0 < k < 2):  div_y a(y, tau, xi + D_y pi) + g(y, tau, r) = 0   per tau slice
//!   critical (k = 2): rho dpi/dtau = div_y a(y, tau, xi + D_y pi) + g(y, tau, r),  tau-periodic
//!   super (k > 2):    div_y abar(y, xi + D_y pi) + gbar(y, r) = 0,  abar/gbar tau-averaged
//! ```
//!
//! normalized by a vanishing rho-weighted mean (per slice where slices
//! decouple, globally for the coupled tau-periodic orbit).
//!
//! The spatial solver is damped Newton: residuals use the true flux, the
//! tangent uses the delta-regularized Jacobian (see
//! [`crate::coefficients::DELTA_REG`]), inner systems are solved matrix-free
//! by preconditioned CG with a constant-coefficient spectral inverse, and an
//! Armijo backtracking line search guards each update. If the line search
//! stalls the solver falls back to Picard (secant modulus) iterations and
//! then retries Newton; only after both phases stall twice does it give up.
//!
//! The tau-periodic problem is solved by a period map: implicit Euler steps
//! march one period and the start value is iterated to the fixed point,
//! which the monotone mass term makes a contraction. Tau-independent data
//! makes the fixed point coincide with the elliptic solution, which is the
//! regression anchor used by the tests.

use crate::coefficients::{CoeffArgs, CoefficientSet, FluxKind, FluxLaw, Regime};
use std::f64::consts::PI;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::torus::{self, div_y, grad_y, Field, TorusGrid, VecField};

/// Macro state frozen during a cell solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct CellParams {
    pub x: [f64; 2],
    pub t: f64,
    pub r: f64,
    pub xi: [f64; 2],
}

/// One cell problem: coefficients, grid, frozen macro state, tolerances.
#[derive(Clone, Copy)]
pub struct CellInput<'a> {
    pub set: &'a CoefficientSet,
    pub grid: TorusGrid,
    pub params: CellParams,
    pub tol: Tolerances,
}

impl<'a> CellInput<'a> {
    pub fn new(set: &'a CoefficientSet, grid: TorusGrid, params: CellParams, tol: Tolerances) -> Self {
        CellInput { set, grid, params, tol }
    }
}

/// Converged corrector with its diagnostics.
#[derive(Clone, Debug)]
pub struct CellSolution {
    /// Output grid: m tau slices for orbit solutions, m = 1 otherwise.
    pub grid: TorusGrid,
    pub params: CellParams,
    pub regime: Regime,
    /// Which solve path produced this: "elliptic", "per-slice",
    /// "period-map", or "tau-averaged".
    pub fast_path: &'static str,
    pub pi: Field,
    pub grad: VecField,
    /// Flux a(y, tau, xi + D_y pi) evaluated with the regime view; its cell
    /// average is the effective flux q.
    pub flux_field: VecField,
    /// Final absolute L2 residual of the discrete cell equation.
    pub residual: f64,
    /// Scale the residual tolerance was relative to.
    pub residual_scale: f64,
    pub newton_iters: usize,
    pub picard_iters: usize,
    pub cg_iters: usize,
    /// Period-map sweeps (critical regime only).
    pub period_iters: usize,
    /// Achieved period-map update norm.
    pub period_delta: f64,
    /// Weighted-mean drift over the final period before renormalization.
    pub weighted_mean_drift: f64,
}

/// Flux evaluation view: a frozen tau slice, or the tau average (super
/// regime). Averages short-circuit for tau-independent laws.
#[derive(Clone, Copy)]
pub(crate) enum FluxView<'a> {
    Slice { law: &'a FluxLaw, x: [f64; 2], t: f64, tau: f64 },
    TauAveraged { law: &'a FluxLaw, x: [f64; 2], t: f64, m: usize },
}

impl<'a> FluxView<'a> {
    pub(crate) fn a(&self, y: [f64; 2], lambda: [f64; 2]) -> [f64; 2] {
        match *self {
            FluxView::Slice { law, x, t, tau } => law.a(&CoeffArgs { x, t, y, tau }, lambda),
            FluxView::TauAveraged { law, x, t, m } => {
                if !law.tau_dependent {
                    return law.a(&CoeffArgs { x, t, y, tau: 0.0 }, lambda);
                }
                let mut acc = [0.0; 2];
                for j in 0..m {
                    let v = law.a(&CoeffArgs { x, t, y, tau: j as f64 / m as f64 }, lambda);
                    acc[0] += v[0];
                    acc[1] += v[1];
                }
                [acc[0] / m as f64, acc[1] / m as f64]
            }
        }
    }

    fn jac(&self, y: [f64; 2], lambda: [f64; 2], v: [f64; 2]) -> [f64; 2] {
        match *self {
            FluxView::Slice { law, x, t, tau } => law.jac_apply(&CoeffArgs { x, t, y, tau }, lambda, v),
            FluxView::TauAveraged { law, x, t, m } => {
                if !law.tau_dependent {
                    return law.jac_apply(&CoeffArgs { x, t, y, tau: 0.0 }, lambda, v);
                }
                let mut acc = [0.0; 2];
                for j in 0..m {
                    let w =
                        law.jac_apply(&CoeffArgs { x, t, y, tau: j as f64 / m as f64 }, lambda, v);
                    acc[0] += w[0];
                    acc[1] += w[1];
                }
                [acc[0] / m as f64, acc[1] / m as f64]
            }
        }
    }

    fn kind(&self) -> FluxKind {
        match self {
            FluxView::Slice { law, .. } | FluxView::TauAveraged { law, .. } => law.kind,
        }
    }

    fn growth_p(&self) -> f64 {
        match self {
            FluxView::Slice { law, .. } | FluxView::TauAveraged { law, .. } => law.p,
        }
    }

    /// Radial secant modulus |a(lambda)| / |lambda| for the Picard fallback.
    fn secant(&self, y: [f64; 2], lambda: [f64; 2]) -> f64 {
        let ln = (lambda[0] * lambda[0] + lambda[1] * lambda[1]).sqrt();
        if ln > 1e-9 {
            let a = self.a(y, lambda);
            ((a[0] * a[0] + a[1] * a[1]).sqrt() / ln).max(1e-12)
        } else {
            let j = self.jac(y, lambda, [1.0, 0.0]);
            j[0].abs().max(1e-12)
        }
    }
}

/// Reaction slice/average evaluation on the cell grid.
fn reaction_slice(set: &CoefficientSet, params: &CellParams, grid: TorusGrid, tau: f64) -> Vec<f64> {
    let s_len = grid.spatial_len();
    (0..s_len)
        .map(|s| {
            set.reaction.g(
                &CoeffArgs { x: params.x, t: params.t, y: grid.y(s), tau },
                params.r,
            )
        })
        .collect()
}

fn reaction_avg(set: &CoefficientSet, params: &CellParams, grid: TorusGrid, m: usize) -> Vec<f64> {
    if !set.reaction.tau_dependent {
        return reaction_slice(set, params, grid, 0.0);
    }
    let s_len = grid.spatial_len();
    let mut acc = vec![0.0; s_len];
    for j in 0..m {
        let slice = reaction_slice(set, params, grid, j as f64 / m as f64);
        for (a, v) in acc.iter_mut().zip(&slice) {
            *a += v / m as f64;
        }
    }
    acc
}

fn density_slice(set: &CoefficientSet, grid: TorusGrid) -> Vec<f64> {
    (0..grid.spatial_len()).map(|s| set.density.rho(grid.y(s))).collect()
}

const MAX_NEWTON: usize = 50;
const MAX_PICARD: usize = 60;
const MAX_LINE_SEARCH: usize = 12;
const MAX_CG: usize = 1000;
const MAX_PERIOD_SWEEPS: usize = 200;

fn dot_mean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s / a.len() as f64
}

fn norm_mean(a: &[f64]) -> f64 {
    dot_mean(a, a).sqrt()
}

/// One spatial slice problem:
/// `mass .* pi - div a(y, xi + D pi) = forcing`, periodic in y.
struct SliceCtx<'a> {
    grid: TorusGrid,
    ys: &'a [[f64; 2]],
    flux: FluxView<'a>,
    xi: [f64; 2],
    /// Zeroth-order coefficient (rho / dtau); None for the elliptic problem.
    mass: Option<&'a [f64]>,
    forcing: &'a [f64],
    /// Absolute L2 residual target.
    tol_abs: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct SliceStats {
    newton: usize,
    picard: usize,
    cg: usize,
    residual: f64,
}

impl SliceCtx<'_> {
    /// Residual and the gradient of the current iterate.
    fn residual(&self, pi: &[f64]) -> (Vec<f64>, VecField, f64) {
        let field = Field { grid: self.grid, data: pi.to_vec() };
        let grad = grad_y(&field);
        let aval = self.flux_at(&grad);
        let diva = div_y(&aval);
        let mut res = vec![0.0; pi.len()];
        for s in 0..pi.len() {
            let m = self.mass.map_or(0.0, |m| m[s]);
            res[s] = m * pi[s] - diva.data[s] - self.forcing[s];
        }
        if self.mass.is_none() {
            // the elliptic operator annihilates constants; keep the residual
            // in its range
            let mean = res.iter().sum::<f64>() / res.len() as f64;
            for v in &mut res {
                *v -= mean;
            }
        }
        let n = norm_mean(&res);
        (res, grad, n)
    }

    fn flux_at(&self, grad: &VecField) -> VecField {
        let mut aval = VecField::zeros(self.grid, self.grid.dim);
        let s_len = self.grid.spatial_len();
        for s in 0..s_len {
            let lambda = [self.xi[0] + grad.data[s], self.xi[1] + grad_comp(grad, 1, s)];
            let a = self.flux.a(self.ys[s], lambda);
            aval.data[s] = a[0];
            if self.grid.dim == 2 {
                aval.data[self.grid.len() + s] = a[1];
            }
        }
        aval
    }

    /// Per-node tangent matrices at the current gradient.
    fn jac_nodes(&self, grad: &VecField) -> Vec<[f64; 4]> {
        let s_len = self.grid.spatial_len();
        let mut out = vec![[0.0; 4]; s_len];
        for s in 0..s_len {
            let lambda = [self.xi[0] + grad.data[s], self.xi[1] + grad_comp(grad, 1, s)];
            let c0 = self.flux.jac(self.ys[s], lambda, [1.0, 0.0]);
            out[s][0] = c0[0];
            out[s][2] = c0[1];
            if self.grid.dim == 2 {
                let c1 = self.flux.jac(self.ys[s], lambda, [0.0, 1.0]);
                out[s][1] = c1[0];
                out[s][3] = c1[1];
            }
        }
        out
    }

    /// Matrix-free application of `mass - div(J D .)`.
    fn apply(&self, jn: &[[f64; 4]], v: &[f64]) -> Vec<f64> {
        let field = Field { grid: self.grid, data: v.to_vec() };
        let gv = grad_y(&field);
        let mut w = VecField::zeros(self.grid, self.grid.dim);
        let s_len = self.grid.spatial_len();
        for s in 0..s_len {
            let d = [gv.data[s], grad_comp(&gv, 1, s)];
            w.data[s] = jn[s][0] * d[0] + jn[s][1] * d[1];
            if self.grid.dim == 2 {
                w.data[self.grid.len() + s] = jn[s][2] * d[0] + jn[s][3] * d[1];
            }
        }
        let divw = div_y(&w);
        let mut out = vec![0.0; v.len()];
        for s in 0..v.len() {
            let m = self.mass.map_or(0.0, |m| m[s]);
            out[s] = m * v[s] - divw.data[s];
        }
        out
    }

    /// Preconditioned CG on the tangent system `A x = b`. The preconditioner
    /// inverts the constant-coefficient model `mbar - betabar Lap` spectrally.
    fn pcg(
        &self,
        jn: &[[f64; 4]],
        b: &[f64],
        x0: &[f64],
        target_abs: f64,
    ) -> Result<(Vec<f64>, usize)> {
        let s_len = self.grid.spatial_len();
        let mbar = self.mass.map_or(0.0, |m| m.iter().sum::<f64>() / s_len as f64);
        let mut beta = 0.0;
        for j in jn {
            beta += (j[0] + j[3]) / self.grid.dim as f64;
        }
        beta = (beta / s_len as f64).max(1e-10);
        let precond = |r: &[f64]| -> Vec<f64> {
            let f = Field { grid: self.grid, data: r.to_vec() };
            spectral_model_inverse(&f, mbar, beta)
        };

        let mut x = x0.to_vec();
        let mut r = b.to_vec();
        let ax = self.apply(jn, &x);
        for (ri, a) in r.iter_mut().zip(&ax) {
            *ri -= a;
        }
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot_mean(&r, &z);
        let mut iters = 0;
        for _ in 0..MAX_CG {
            if norm_mean(&r) <= target_abs {
                break;
            }
            let ap = self.apply(jn, &p);
            let pap = dot_mean(&p, &ap);
            if !pap.is_finite() {
                return Err(Error::LinearSolve("CG breakdown: indefinite tangent".into()));
            }
            if pap.abs() < 1e-300 {
                break;
            }
            let alpha = rz / pap;
            for s in 0..x.len() {
                x[s] += alpha * p[s];
                r[s] -= alpha * ap[s];
            }
            z = precond(&r);
            let rz_new = dot_mean(&r, &z);
            let beta_cg = rz_new / rz;
            rz = rz_new;
            for s in 0..p.len() {
                p[s] = z[s] + beta_cg * p[s];
            }
            iters += 1;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("CG produced non-finite iterate".into()));
        }
        Ok((x, iters))
    }
}

fn grad_comp(g: &VecField, c: usize, s: usize) -> f64 {
    if c < g.comps {
        g.data[c * g.grid.len() + s]
    } else {
        0.0
    }
}

/// Apply `(mbar - betabar Lap)^(-1)` spectrally; the zero mode is divided by
/// mbar when present and annihilated otherwise.
fn spectral_model_inverse(f: &Field, mbar: f64, beta: f64) -> Vec<f64> {
    let sol = torus::model_inverse(f, mbar, beta);
    sol.data
}

/// Solve one slice problem by damped Newton with a Picard fallback.
fn solve_slice(ctx: &SliceCtx, pi0: Vec<f64>) -> Result<(Vec<f64>, SliceStats)> {
    let mut stats = SliceStats::default();
    let mut pi = pi0;
    let (mut res, mut grad, mut rnorm) = ctx.residual(&pi);
    let linear = ctx.flux.kind() == FluxKind::LinearMatrix;

    for round in 0..2 {
        // Newton phase
        let mut newton_stalled = false;
        for _ in 0..MAX_NEWTON {
            if rnorm <= ctx.tol_abs {
                stats.residual = rnorm;
                return Ok((pi, stats));
            }
            let jn = ctx.jac_nodes(&grad);
            let b: Vec<f64> = res.iter().map(|v| -v).collect();
            let inner = (0.05 * rnorm).max(0.2 * ctx.tol_abs);
            let zero = vec![0.0; pi.len()];
            let (mut delta, cg) = ctx.pcg(&jn, &b, &zero, inner)?;
            stats.cg += cg;
            stats.newton += 1;

            // Trust cap on the step norm: a degenerate tangent (p > 2 laws at
            // vanishing gradient) can propose astronomically long directions
            // that no line search recovers from.
            let dnorm = norm_mean(&delta);
            let cap = 10.0 * norm_mean(&pi).max(1.0);
            if dnorm > cap {
                let s = cap / dnorm;
                for d in &mut delta {
                    *d *= s;
                }
            }

            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_LINE_SEARCH {
                let trial: Vec<f64> =
                    pi.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
                let (tres, tgrad, tnorm) = ctx.residual(&trial);
                if tnorm <= rnorm * (1.0 - 1e-4 * step) || tnorm <= ctx.tol_abs {
                    pi = trial;
                    res = tres;
                    grad = tgrad;
                    rnorm = tnorm;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                newton_stalled = true;
                break;
            }
        }
        if rnorm <= ctx.tol_abs {
            stats.residual = rnorm;
            return Ok((pi, stats));
        }
        if linear && newton_stalled {
            return Err(Error::CellDiverged(format!(
                "linear tangent stalled at residual {rnorm:.3e} (target {:.3e})",
                ctx.tol_abs
            )));
        }

        // Picard (secant modulus) phase: freeze the radial secant and solve
        // the resulting linear problem; monotone laws make this a descent.
        // For degenerate growth (p > 2) the secant is floored at the scale
        // |forcing / 4pi^2|^((p-2)/(p-1)) implied by the forcing balance, so
        // the frozen operator stays invertible near vanishing gradients; the
        // bias this introduces is removed by the following Newton round.
        let p = ctx.flux.growth_p();
        let sec_floor = if p > 2.0 {
            (norm_mean(ctx.forcing) / (4.0 * PI * PI)).powf((p - 2.0) / (p - 1.0))
        } else {
            0.0
        };
        let mut best = (pi.clone(), rnorm);
        let mut prev = f64::INFINITY;
        let mut stalls = 0;
        for _ in 0..MAX_PICARD {
            if rnorm <= ctx.tol_abs {
                break;
            }
            let s_len = ctx.grid.spatial_len();
            let mut jn = vec![[0.0; 4]; s_len];
            for s in 0..s_len {
                let lambda = [ctx.xi[0] + grad.data[s], ctx.xi[1] + grad_comp(&grad, 1, s)];
                let sec = ctx.flux.secant(ctx.ys[s], lambda).max(sec_floor);
                jn[s][0] = sec;
                jn[s][3] = sec;
            }
            // rhs = forcing + div(sec * xi)
            let mut w = VecField::zeros(ctx.grid, ctx.grid.dim);
            for s in 0..s_len {
                w.data[s] = jn[s][0] * ctx.xi[0];
                if ctx.grid.dim == 2 {
                    w.data[ctx.grid.len() + s] = jn[s][3] * ctx.xi[1];
                }
            }
            let divw = div_y(&w);
            let mut b: Vec<f64> = ctx.forcing.iter().zip(&divw.data).map(|(f, d)| f + d).collect();
            if ctx.mass.is_none() {
                let mean = b.iter().sum::<f64>() / b.len() as f64;
                for v in &mut b {
                    *v -= mean;
                }
            }
            let (next, cg) = ctx.pcg(&jn, &b, &pi, (0.05 * rnorm).max(0.2 * ctx.tol_abs))?;
            stats.cg += cg;
            stats.picard += 1;
            pi = next;
            let out = ctx.residual(&pi);
            grad = out.1;
            rnorm = out.2;
            if rnorm < best.1 {
                best = (pi.clone(), rnorm);
            }
            if rnorm > 0.999 * prev {
                stalls += 1;
                if stalls >= 3 {
                    break;
                }
            } else {
                stalls = 0;
            }
            prev = rnorm;
        }
        pi = best.0;
        let out = ctx.residual(&pi);
        rnorm = out.2;
        if rnorm <= ctx.tol_abs {
            stats.residual = rnorm;
            return Ok((pi, stats));
        }
        if round == 1 {
            break;
        }
        res = out.0;
        grad = out.1;
    }
    Err(Error::CellDiverged(format!(
        "residual {rnorm:.3e} above target {:.3e} after {} Newton and {} Picard iterations",
        ctx.tol_abs, stats.newton, stats.picard
    )))
}

/// Natural absolute tolerance for a slice solve: the cell tolerance against
/// the larger of the forcing scale and the flux scale at xi.
fn slice_scale(ctx_flux: &FluxView, ys: &[[f64; 2]], xi: [f64; 2], forcing: &[f64]) -> f64 {
    let mut flux2 = 0.0;
    for y in ys {
        let a = ctx_flux.a(*y, xi);
        flux2 += a[0] * a[0] + a[1] * a[1];
    }
    let flux_scale = (flux2 / ys.len() as f64).sqrt();
    norm_mean(forcing).max(flux_scale).max(1e-14)
}

fn node_coords(grid: TorusGrid) -> Vec<[f64; 2]> {
    (0..grid.spatial_len()).map(|s| grid.y(s)).collect()
}

/// Check the compatibility (centering) of the reaction slice and return it
/// with its mean removed; beyond tolerance this is a hard error.
fn centered_forcing(g: Vec<f64>) -> Result<Vec<f64>> {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let sup = g.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = torus::POISSON_MEAN_REL_TOL * sup.max(1.0);
    if mean.abs() > tol {
        return Err(Error::Fredholm { defect: mean.abs(), tol });
    }
    let mut g = g;
    for v in &mut g {
        *v -= mean;
    }
    Ok(g)
}

fn steady(grid: TorusGrid) -> TorusGrid {
    TorusGrid { dim: grid.dim, n: grid.n, m: 1 }
}

/// Package a converged steady slice into a [`CellSolution`].
fn finish_steady(
    input: &CellInput,
    fast_path: &'static str,
    flux: FluxView,
    pi: Vec<f64>,
    stats: SliceStats,
    scale: f64,
) -> CellSolution {
    let sgrid = steady(input.grid);
    let rho = Field { grid: sgrid, data: density_slice(input.set, sgrid) };
    let field = Field { grid: sgrid, data: pi };
    let field = torus::project_weighted(&rho, &field);
    let grad = grad_y(&field);
    let ys = node_coords(sgrid);
    let mut flux_field = VecField::zeros(sgrid, sgrid.dim);
    for s in 0..sgrid.spatial_len() {
        let lambda = [
            input.params.xi[0] + grad.data[s],
            input.params.xi[1] + grad_comp(&grad, 1, s),
        ];
        let a = flux.a(ys[s], lambda);
        flux_field.data[s] = a[0];
        if sgrid.dim == 2 {
            flux_field.data[sgrid.len() + s] = a[1];
        }
    }
    CellSolution {
        grid: sgrid,
        params: input.params,
        regime: input.set.regime,
        fast_path,
        pi: field,
        grad,
        flux_field,
        residual: stats.residual,
        residual_scale: scale,
        newton_iters: stats.newton,
        picard_iters: stats.picard,
        cg_iters: stats.cg,
        period_iters: 0,
        period_delta: 0.0,
        weighted_mean_drift: 0.0,
    }
}

/// Elliptic cell problem with tau frozen as a parameter.
pub fn solve_elliptic(input: &CellInput, tau: f64) -> Result<CellSolution> {
    let sgrid = steady(input.grid);
    let ys = node_coords(sgrid);
    let flux = FluxView::Slice {
        law: &input.set.flux,
        x: input.params.x,
        t: input.params.t,
        tau,
    };
    let forcing = centered_forcing(reaction_slice(input.set, &input.params, sgrid, tau))?;
    let scale = slice_scale(&flux, &ys, input.params.xi, &forcing);
    let ctx = SliceCtx {
        grid: sgrid,
        ys: &ys,
        flux,
        xi: input.params.xi,
        mass: None,
        forcing: &forcing,
        tol_abs: input.tol.cell * scale,
    };
    let (pi, stats) = solve_slice(&ctx, vec![0.0; sgrid.spatial_len()])?;
    Ok(finish_steady(input, "elliptic", flux, pi, stats, scale))
}

/// Elliptic cell problem with tau-averaged coefficients (super regime).
pub fn solve_elliptic_tau_averaged(input: &CellInput) -> Result<CellSolution> {
    let sgrid = steady(input.grid);
    let ys = node_coords(sgrid);
    let m = input.grid.m.max(4);
    let flux = FluxView::TauAveraged {
        law: &input.set.flux,
        x: input.params.x,
        t: input.params.t,
        m,
    };
    let forcing = centered_forcing(reaction_avg(input.set, &input.params, sgrid, m))?;
    let scale = slice_scale(&flux, &ys, input.params.xi, &forcing);
    let ctx = SliceCtx {
        grid: sgrid,
        ys: &ys,
        flux,
        xi: input.params.xi,
        mass: None,
        forcing: &forcing,
        tol_abs: input.tol.cell * scale,
    };
    let (pi, stats) = solve_slice(&ctx, vec![0.0; sgrid.spatial_len()])?;
    Ok(finish_steady(input, "tau-averaged", flux, pi, stats, scale))
}

/// Independent per-slice elliptic solves (sub regime with tau-dependent
/// coefficients). Slices are warm-started from their neighbor.
fn solve_per_slice(input: &CellInput) -> Result<CellSolution> {
    let grid = input.grid;
    let sgrid = steady(grid);
    let ys = node_coords(sgrid);
    let rho = Field { grid: sgrid, data: density_slice(input.set, sgrid) };
    let mut orbit = Field::zeros(grid);
    let mut stats_acc = SliceStats::default();
    let mut scale_max: f64 = 1e-14;
    let mut warm = vec![0.0; sgrid.spatial_len()];
    for j in 0..grid.m {
        let tau = grid.tau(j);
        let flux = FluxView::Slice {
            law: &input.set.flux,
            x: input.params.x,
            t: input.params.t,
            tau,
        };
        let forcing = centered_forcing(reaction_slice(input.set, &input.params, sgrid, tau))?;
        let scale = slice_scale(&flux, &ys, input.params.xi, &forcing);
        scale_max = scale_max.max(scale);
        let ctx = SliceCtx {
            grid: sgrid,
            ys: &ys,
            flux,
            xi: input.params.xi,
            mass: None,
            forcing: &forcing,
            tol_abs: input.tol.cell * scale,
        };
        let (pi, st) = solve_slice(&ctx, warm.clone())?;
        warm = pi.clone();
        // slices decouple: normalize each to zero weighted mean
        let f = torus::project_weighted(&rho, &Field { grid: sgrid, data: pi });
        orbit.slice_tau_mut(j).copy_from_slice(&f.data);
        stats_acc.newton += st.newton;
        stats_acc.picard += st.picard;
        stats_acc.cg += st.cg;
        stats_acc.residual = stats_acc.residual.max(st.residual);
    }
    Ok(finish_orbit(input, "per-slice", orbit, stats_acc, scale_max, 0, 0.0, 0.0))
}

/// Package an orbit (or per-slice family) into a [`CellSolution`],
/// evaluating the flux field slice by slice.
#[allow(clippy::too_many_arguments)]
fn finish_orbit(
    input: &CellInput,
    fast_path: &'static str,
    orbit: Field,
    stats: SliceStats,
    scale: f64,
    period_iters: usize,
    period_delta: f64,
    drift: f64,
) -> CellSolution {
    let grid = orbit.grid;
    let sgrid = steady(grid);
    let ys = node_coords(sgrid);
    let grad = grad_y(&orbit);
    let mut flux_field = VecField::zeros(grid, grid.dim);
    for j in 0..grid.m {
        let flux = FluxView::Slice {
            law: &input.set.flux,
            x: input.params.x,
            t: input.params.t,
            tau: grid.tau(j),
        };
        for s in 0..sgrid.spatial_len() {
            let lambda = [
                input.params.xi[0] + grad.comp_slice(0, j)[s],
                input.params.xi[1]
                    + if grid.dim == 2 { grad.comp_slice(1, j)[s] } else { 0.0 },
            ];
            let a = flux.a(ys[s], lambda);
            flux_field.comp_slice_mut(0, j)[s] = a[0];
            if grid.dim == 2 {
                flux_field.comp_slice_mut(1, j)[s] = a[1];
            }
        }
    }
    CellSolution {
        grid,
        params: input.params,
        regime: input.set.regime,
        fast_path,
        pi: orbit,
        grad,
        flux_field,
        residual: stats.residual,
        residual_scale: scale,
        newton_iters: stats.newton,
        picard_iters: stats.picard,
        cg_iters: stats.cg,
        period_iters,
        period_delta,
        weighted_mean_drift: drift,
    }
}

/// Tau-periodic parabolic cell problem by the period map: implicit Euler
/// over one period, iterating the start value to its fixed point. In the
/// super regime the steps use tau-averaged coefficients, so the computed
/// orbit is tau-independent up to solver tolerance; the tests measure that
/// variance rather than assuming it.
pub fn solve_parabolic(input: &CellInput) -> Result<CellSolution> {
    let grid = input.grid;
    let m = grid.m;
    let sgrid = steady(grid);
    let s_len = sgrid.spatial_len();
    let ys = node_coords(sgrid);
    let rho = density_slice(input.set, sgrid);
    let rho_field = Field { grid: sgrid, data: rho.clone() };
    let inv_dtau = m as f64;
    let mass: Vec<f64> = rho.iter().map(|r| r * inv_dtau).collect();
    let averaged = input.set.regime == Regime::Super;

    // per-slice data; slice j carries the coefficients at tau_j
    let mut fluxes = Vec::with_capacity(m);
    let mut forcings = Vec::with_capacity(m);
    for j in 0..m {
        if averaged {
            fluxes.push(FluxView::TauAveraged {
                law: &input.set.flux,
                x: input.params.x,
                t: input.params.t,
                m,
            });
            forcings.push(centered_forcing(reaction_avg(input.set, &input.params, sgrid, m))?);
        } else {
            let tau = grid.tau(j);
            fluxes.push(FluxView::Slice {
                law: &input.set.flux,
                x: input.params.x,
                t: input.params.t,
                tau,
            });
            forcings.push(centered_forcing(reaction_slice(input.set, &input.params, sgrid, tau))?);
        }
    }

    // start from the elliptic solution of the tau-averaged problem
    let init = solve_elliptic_tau_averaged(input)?;
    let mut s_start: Vec<f64> = init.pi.data.clone();
    let mut stats = SliceStats::default();
    stats.newton += init.newton_iters;
    stats.picard += init.picard_iters;
    stats.cg += init.cg_iters;

    let forcing_scale = forcings.iter().map(|f| norm_mean(f)).fold(1e-14f64, f64::max);
    let scale = {
        let flux0 = &fluxes[0];
        slice_scale(flux0, &ys, input.params.xi, &forcings[0]).max(forcing_scale)
    };

    let snorm = |v: &[f64]| -> f64 {
        let f = Field { grid: sgrid, data: v.to_vec() };
        torus::l2_norm_weighted(&rho_field, &f)
    };

    let mut period_iters = 0;
    let mut delta = f64::INFINITY;
    let mut prev_delta = f64::INFINITY;
    let mut stall = 0;
    let mut converged = false;
    while period_iters < MAX_PERIOD_SWEEPS {
        let mut cur = s_start.clone();
        for j in 1..=m {
            let idx = j % m;
            // forcing of the implicit Euler step: g at the target slice plus
            // the transported previous value
            let mut forcing: Vec<f64> = forcings[idx].clone();
            for s in 0..s_len {
                forcing[s] += mass[s] * cur[s];
            }
            let slice_tol = (input.tol.cell * scale)
                .min(0.1 * input.tol.period * (1.0 + snorm(&cur)) * inv_dtau)
                .max(1e-15);
            let ctx = SliceCtx {
                grid: sgrid,
                ys: &ys,
                flux: fluxes[idx],
                xi: input.params.xi,
                mass: Some(&mass),
                forcing: &forcing,
                tol_abs: slice_tol,
            };
            let (next, st) = solve_slice(&ctx, cur)?;
            stats.newton += st.newton;
            stats.picard += st.picard;
            stats.cg += st.cg;
            cur = next;
        }
        period_iters += 1;
        let diff: Vec<f64> = cur.iter().zip(&s_start).map(|(a, b)| a - b).collect();
        delta = snorm(&diff);
        s_start = cur;
        let target = input.tol.period * snorm(&s_start).max(1.0);
        if delta <= target {
            converged = true;
            break;
        }
        // accept a stall at the solver noise floor
        if delta < 1e-10 * snorm(&s_start).max(1.0) && delta >= 0.5 * prev_delta {
            stall += 1;
            if stall >= 3 {
                converged = true;
                break;
            }
        } else {
            stall = 0;
        }
        prev_delta = delta;
    }
    if !converged && delta > 1e-8 * snorm(&s_start).max(1.0) {
        return Err(Error::PeriodMap(format!(
            "periodic steady state not reached: update norm {delta:.3e} after {period_iters} sweeps"
        )));
    }

    // one consistent sweep to record the orbit and its drift
    let mut orbit = Field::zeros(grid);
    let start_mass: f64 = {
        let f = Field { grid: sgrid, data: s_start.clone() };
        torus::weighted_mean(&rho_field, &f)
    };
    let mut cur = s_start.clone();
    for j in 1..=m {
        let idx = j % m;
        let mut forcing: Vec<f64> = forcings[idx].clone();
        for s in 0..s_len {
            forcing[s] += mass[s] * cur[s];
        }
        let slice_tol = (input.tol.cell * scale)
            .min(0.1 * input.tol.period * (1.0 + snorm(&cur)) * inv_dtau)
            .max(1e-15);
        let ctx = SliceCtx {
            grid: sgrid,
            ys: &ys,
            flux: fluxes[idx],
            xi: input.params.xi,
            mass: Some(&mass),
            forcing: &forcing,
            tol_abs: slice_tol,
        };
        let (next, st) = solve_slice(&ctx, cur)?;
        stats.newton += st.newton;
        stats.picard += st.picard;
        stats.cg += st.cg;
        stats.residual = stats.residual.max(st.residual);
        cur = next;
        orbit.slice_tau_mut(idx).copy_from_slice(&cur);
    }
    let end_mass = {
        let f = Field { grid: sgrid, data: cur };
        torus::weighted_mean(&rho_field, &f)
    };
    let drift = (end_mass - start_mass).abs();

    // normalize the global weighted mean of the orbit
    let rho_orbit = Field { grid: sgrid, data: rho };
    let c = {
        let mut acc = 0.0;
        let mut den = 0.0;
        for j in 0..m {
            for s in 0..s_len {
                acc += rho_orbit.data[s] * orbit.slice_tau(j)[s];
                den += rho_orbit.data[s];
            }
        }
        acc / den
    };
    for v in &mut orbit.data {
        *v -= c;
    }

    Ok(finish_orbit(input, "period-map", orbit, stats, scale, period_iters, delta, drift))
}

/// Regime dispatch with fast paths: coefficients that do not oscillate in
/// tau collapse every regime to a single elliptic solve.
pub fn cell_solve(input: &CellInput) -> Result<CellSolution> {
    let tau_osc = input.set.tau_oscillatory();
    match input.set.regime {
        Regime::Sub => {
            if tau_osc {
                solve_per_slice(input)
            } else {
                solve_elliptic(input, 0.0)
            }
        }
        Regime::Critical => {
            if tau_osc {
                solve_parabolic(input)
            } else {
                solve_elliptic(input, 0.0)
            }
        }
        Regime::Super => {
            if tau_osc {
                solve_elliptic_tau_averaged(input)
            } else {
                solve_elliptic(input, 0.0)
            }
        }
    }
}

/// First-order correctors chi_j of the linear theory: the cell problem with
/// xi = e_j and the reaction switched off.
pub fn solve_chi(input: &CellInput) -> Result<Vec<CellSolution>> {
    if !input.set.flux.is_linear() {
        return Err(Error::Config(
            "chi correctors are defined for the linear flux kind only".into(),
        ));
    }
    let mut set = input.set.clone();
    set.reaction = zero_reaction();
    let mut out = Vec::with_capacity(input.set.dimension);
    for j in 0..input.set.dimension {
        let mut params = input.params;
        params.r = 0.0;
        params.xi = [0.0; 2];
        params.xi[j] = 1.0;
        let inp = CellInput { set: &set, grid: input.grid, params, tol: input.tol };
        out.push(cell_solve(&inp)?);
    }
    Ok(out)
}

/// Reaction corrector w1 of the linear theory: the cell problem with xi = 0
/// and the true reaction at r.
pub fn solve_w1(input: &CellInput, r: f64) -> Result<CellSolution> {
    if !input.set.flux.is_linear() {
        return Err(Error::Config(
            "the w1 corrector is defined for the linear flux kind only".into(),
        ));
    }
    let mut params = input.params;
    params.r = r;
    params.xi = [0.0; 2];
    let inp = CellInput { set: input.set, grid: input.grid, params, tol: input.tol };
    cell_solve(&inp)
}

fn zero_reaction() -> crate::coefficients::ReactionLaw {
    let cfg = crate::config::ScenarioConfig::parse("id = \"zero\"\ndimension = 1\n")
        .expect("static scenario");
    crate::coefficients::build(&cfg).expect("static build").reaction
}

/// Discrete residual of the tau-periodic orbit, including the periodic wrap:
/// max over slices of | rho (pi_j - pi_(j-1)) / dtau - div a_j - g_j |.
pub fn orbit_residual(input: &CellInput, sol: &CellSolution) -> f64 {
    let grid = sol.grid;
    let m = grid.m;
    if m < 2 {
        return sol.residual;
    }
    let sgrid = steady(grid);
    let s_len = sgrid.spatial_len();
    let rho = density_slice(input.set, sgrid);
    let inv_dtau = m as f64;
    let mut worst = 0.0f64;
    for j in 0..m {
        let prev = (j + m - 1) % m;
        let tau = grid.tau(j);
        let g = reaction_slice(input.set, &input.params, sgrid, tau);
        let aslice = {
            let mut v = VecField::zeros(sgrid, sgrid.dim);
            for c in 0..sgrid.dim {
                v.comp_slice_mut(c, 0).copy_from_slice(sol.flux_field.comp_slice(c, j));
            }
            v
        };
        let diva = div_y(&aslice);
        let mut res = 0.0;
        for s in 0..s_len {
            let dt_term = rho[s] * (sol.pi.slice_tau(j)[s] - sol.pi.slice_tau(prev)[s]) * inv_dtau;
            let v = dt_term - diva.data[s] - g[s];
            res += v * v;
        }
        worst = worst.max((res / s_len as f64).sqrt());
    }
    worst
}

/// Pairing antisymmetry defect of an orbit against the scenario density.
pub fn orbit_pairing_defect(set: &CoefficientSet, sol: &CellSolution) -> f64 {
    let sgrid = steady(sol.grid);
    let rho = Field { grid: sgrid, data: density_slice(set, sgrid) };
    torus::pairing_defect(&rho, &sol.pi, &sol.pi)
}
