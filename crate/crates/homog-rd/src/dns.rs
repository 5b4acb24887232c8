//! Direct numerical simulation of the oscillating problem.
//!
//! For one epsilon of the ladder the DNS discretizes
//!
//! ```text
//!   rho(x/e) du/dt = Div a(x, t, x/e, t/e^k, Du) + (1/e) g(x/e, t/e^k, u)
//! ```
//!
//! on the macro domain with homogeneous Dirichlet data, resolving the fast
//! oscillations instead of averaging them. The grid is commensurate with
//! the microstructure: when a coefficient oscillates in y the cell count
//! per axis is a whole number of cells per epsilon-period, at least 8, so
//! h <= e/8 holds exactly and no period is sampled off-lattice. When a
//! coefficient oscillates in tau the step count enforces dt <= e^k/8;
//! otherwise the nominal step count is kept fixed across the ladder so
//! ladder comparisons see identical time grids. Plans that exceed the
//! scenario budget fail early with an under-resolved error instead of
//! running coarse.
//!
//! The scheme matches the macroscale solver: conservative face fluxes with
//! central face gradients (tangential averages in 2d), nodal reaction, and
//! fully implicit Euler steps solved by the Newton driver of [`crate::fd`],
//! with the same halve-on-failure policy. The singular reaction factor 1/e
//! is evaluated directly; no splitting or relaxation is applied.
//!
//! Three monitors accumulate during the run:
//!
//! * the energy identity residual: the discrete analogue of
//!   `1/2 |u(T)|^2_rho - 1/2 |u(0)|^2_rho + int a . Du - int (1/e) g u`,
//!   whose magnitude is pure discretization error and contracts under
//!   (h, dt) refinement,
//! * the a priori monitors `sup_t |u|^2_{L^2_rho}` and
//!   `int_0^T (|u|_p^p + |Du|_p^p) dt`, which the uniform bounds of the
//!   continuous theory keep comparable across the ladder,
//! * when a macro reference is supplied, the trajectory distance
//!   `|u_e - u0|_{L^2(Q_T)}` by trapezoid quadrature in time over the DNS
//!   frames.

use crate::coefficients::{CoeffArgs, CoefficientSet};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fd::{self, rms, NewtonOpts, Stencil};
use crate::macroscale::{MacroSolution, MAX_HALVINGS};

/// Resolution plan for one epsilon: grid sizes after the commensurateness
/// and oscillation rules, validated against the scenario budget.
#[derive(Clone, Copy, Debug)]
pub struct DnsPlan {
    pub epsilon: f64,
    /// Cells per axis (second entry unused in 1d).
    pub nx: [usize; 2],
    /// Epsilon-periods per axis when the scenario oscillates in y.
    pub periods: [usize; 2],
    /// Cells per epsilon-period (None when nothing oscillates in y).
    pub cells_per_period: Option<usize>,
    pub nt: usize,
    pub h: [f64; 2],
    pub dt: f64,
}

fn check_reciprocal(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    let m = 1.0 / eps;
    if (m - m.round()).abs() > 1e-9 * m {
        return Err(Error::Config(format!(
            "epsilon must be the reciprocal of a positive integer, got {eps}"
        )));
    }
    Ok(m.round())
}

/// Compute the resolution plan for one epsilon.
pub fn plan(cfg: &ScenarioConfig, set: &CoefficientSet, eps: f64) -> Result<DnsPlan> {
    check_reciprocal(eps)?;
    let dim = set.dimension;
    let mut nx = [0usize; 2];
    let mut periods = [0usize; 2];
    let mut h = [0.0; 2];
    let mut cells_per_period = None;

    for ax in 0..dim {
        let len = cfg.domain[ax][1] - cfg.domain[ax][0];
        if set.y_oscillatory() {
            let per = len / eps;
            if (per - per.round()).abs() > 1e-9 * per.max(1.0) || per.round() < 1.0 {
                return Err(Error::Config(format!(
                    "epsilon = {eps} is not commensurate with the domain: axis {ax} holds {per} periods"
                )));
            }
            let per = per.round() as usize;
            let s = (cfg.grids.dns_x.div_ceil(per)).max(8);
            periods[ax] = per;
            cells_per_period = Some(s);
            nx[ax] = s * per;
        } else {
            nx[ax] = cfg.grids.dns_x;
        }
        h[ax] = len / nx[ax] as f64;
    }

    let nt = if set.tau_oscillatory() {
        let fast = (8.0 * cfg.t_final / eps.powf(set.k)).ceil() as usize;
        cfg.grids.dns_t.max(fast)
    } else {
        cfg.grids.dns_t
    };

    let total_nodes: usize = (0..dim).map(|ax| nx[ax] + 1).product();
    if total_nodes > cfg.budget.dns_max_nodes {
        return Err(Error::UnderResolved(format!(
            "epsilon = {eps} needs {total_nodes} nodes but budget.dns_max_nodes = {}; raise the budget or trim the ladder",
            cfg.budget.dns_max_nodes
        )));
    }
    if nt > cfg.budget.dns_max_steps {
        return Err(Error::UnderResolved(format!(
            "epsilon = {eps} needs {nt} time steps but budget.dns_max_steps = {}; raise the budget or trim the ladder",
            cfg.budget.dns_max_steps
        )));
    }

    Ok(DnsPlan {
        epsilon: eps,
        nx,
        periods,
        cells_per_period,
        nt,
        h,
        dt: cfg.t_final / nt as f64,
    })
}

/// Convergence accounting for one DNS run.
#[derive(Clone, Copy, Debug, Default)]
pub struct DnsStats {
    /// Implicit Euler steps taken, substeps included.
    pub steps: usize,
    pub newton_iters: usize,
    pub krylov_iters: usize,
    pub halvings: usize,
    pub max_newton_per_step: usize,
}

/// One DNS run: the plan it executed, its monitors, and the final frame.
#[derive(Clone, Debug)]
pub struct DnsOutput {
    pub plan: DnsPlan,
    /// sup over frames of the rho-weighted squared spatial L2 norm.
    pub sup_l2rho2: f64,
    /// int_0^T (|u|_p^p + |Du|_p^p) dt with nodal central gradients.
    pub w1p_integral: f64,
    /// Magnitude of the discrete energy identity residual.
    pub energy_residual: f64,
    /// |u_e - u0|_{L^2(Q_T)} against the supplied macro reference.
    pub l2_qt_error: Option<f64>,
    /// Monitor series at the nominal frames: (t, |u|^2_{L^2_rho}, |u|_p^p + |Du|_p^p).
    pub series: Vec<[f64; 3]>,
    /// Node values at t = T, boundary included.
    pub final_frame: Vec<f64>,
    pub stats: DnsStats,
}

struct DnsOp<'a> {
    set: &'a CoefficientSet,
    plan: DnsPlan,
    dim: usize,
    domain: [[f64; 2]; 2],
    eps: f64,
    eps_k: f64,
    p: f64,
    tol_dns: f64,
    stencil: Stencil,
    /// Density at the nodes (y is a fixed function of the node).
    rho_nodes: Vec<f64>,
}

impl<'a> DnsOp<'a> {
    fn new(cfg: &ScenarioConfig, set: &'a CoefficientSet, plan: DnsPlan) -> Self {
        let dim = set.dimension;
        let stencil = if dim == 1 {
            Stencil::line(plan.nx[0] - 1)
        } else {
            Stencil::grid9(plan.nx[0] - 1, plan.nx[1] - 1)
        };
        let mut op = DnsOp {
            set,
            plan,
            dim,
            domain: cfg.domain,
            eps: plan.epsilon,
            eps_k: plan.epsilon.powf(set.k),
            p: set.p,
            tol_dns: cfg.tol.dns,
            stencil,
            rho_nodes: Vec::new(),
        };
        op.rho_nodes = (0..op.nodes()).map(|i| set.density.rho(op.fast_y(op.node_x(i)))).collect();
        op
    }

    fn nodes_per_axis(&self, ax: usize) -> usize {
        self.plan.nx[ax] + 1
    }

    fn nodes(&self) -> usize {
        (0..self.dim).map(|ax| self.nodes_per_axis(ax)).product()
    }

    fn node_x(&self, i: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.domain[0][0] + i as f64 * self.plan.h[0], 0.0]
        } else {
            let m = self.nodes_per_axis(0);
            let (ix, iy) = (i % m, i / m);
            [
                self.domain[0][0] + ix as f64 * self.plan.h[0],
                self.domain[1][0] + iy as f64 * self.plan.h[1],
            ]
        }
    }

    fn fast_y(&self, x: [f64; 2]) -> [f64; 2] {
        [(x[0] / self.eps).rem_euclid(1.0), (x[1] / self.eps).rem_euclid(1.0)]
    }

    fn fast_tau(&self, t: f64) -> f64 {
        (t / self.eps_k).rem_euclid(1.0)
    }

    fn full(&self, w: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.nodes()];
        if self.dim == 1 {
            u[1..self.plan.nx[0]].copy_from_slice(w);
        } else {
            let m = self.nodes_per_axis(0);
            let inx = self.plan.nx[0] - 1;
            for iy in 1..self.plan.nx[1] {
                for ix in 1..self.plan.nx[0] {
                    u[iy * m + ix] = w[(iy - 1) * inx + (ix - 1)];
                }
            }
        }
        u
    }

    fn interior(&self, u: &[f64]) -> Vec<f64> {
        if self.dim == 1 {
            u[1..self.plan.nx[0]].to_vec()
        } else {
            let m = self.nodes_per_axis(0);
            let mut w = Vec::with_capacity((self.plan.nx[0] - 1) * (self.plan.nx[1] - 1));
            for iy in 1..self.plan.nx[1] {
                for ix in 1..self.plan.nx[0] {
                    w.push(u[iy * m + ix]);
                }
            }
            w
        }
    }

    fn flux_at_face(&self, xf: [f64; 2], t: f64, lambda: [f64; 2]) -> [f64; 2] {
        let args = CoeffArgs { x: xf, t, y: self.fast_y(xf), tau: self.fast_tau(t) };
        self.set.flux.a(&args, lambda)
    }

    fn reaction_at(&self, x: [f64; 2], t: f64, r: f64) -> f64 {
        let args = CoeffArgs { x, t, y: self.fast_y(x), tau: self.fast_tau(t) };
        self.set.reaction.g(&args, r) / self.eps
    }

    /// Implicit Euler residual at the new time level t_plus.
    fn residual(&self, w: &[f64], uprev: &[f64], dt: f64, t_plus: f64) -> Vec<f64> {
        let u = self.full(w);
        if self.dim == 1 {
            self.residual_1d(&u, uprev, dt, t_plus)
        } else {
            self.residual_2d(&u, uprev, dt, t_plus)
        }
    }

    fn residual_1d(&self, u: &[f64], uprev: &[f64], dt: f64, t_plus: f64) -> Vec<f64> {
        let n = self.plan.nx[0];
        let h = self.plan.h[0];
        let a0 = self.domain[0][0];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let xf = [a0 + (i as f64 + 0.5) * h, 0.0];
            let xi = (u[i + 1] - u[i]) / h;
            q[i] = self.flux_at_face(xf, t_plus, [xi, 0.0])[0];
        }
        let mut out = vec![0.0; n - 1];
        for i in 1..n {
            let x = self.node_x(i);
            let g = self.reaction_at(x, t_plus, u[i]);
            out[i - 1] = self.rho_nodes[i] * (u[i] - uprev[i]) / dt - (q[i] - q[i - 1]) / h - g;
        }
        out
    }

    fn residual_2d(&self, u: &[f64], uprev: &[f64], dt: f64, t_plus: f64) -> Vec<f64> {
        let (n1, n2) = (self.plan.nx[0], self.plan.nx[1]);
        let m = n1 + 1;
        let (hx, hy) = (self.plan.h[0], self.plan.h[1]);
        let (a0, b0) = (self.domain[0][0], self.domain[1][0]);
        let at = |ix: usize, iy: usize| u[iy * m + ix];

        let mut qx = vec![0.0; n1 * (n2 - 1)];
        for iy in 1..n2 {
            for ix in 0..n1 {
                let xf = [a0 + (ix as f64 + 0.5) * hx, b0 + iy as f64 * hy];
                let xi1 = (at(ix + 1, iy) - at(ix, iy)) / hx;
                let xi2 = (at(ix, iy + 1) - at(ix, iy - 1) + at(ix + 1, iy + 1)
                    - at(ix + 1, iy - 1))
                    / (4.0 * hy);
                qx[(iy - 1) * n1 + ix] = self.flux_at_face(xf, t_plus, [xi1, xi2])[0];
            }
        }
        let mut qy = vec![0.0; n2 * (n1 - 1)];
        for ix in 1..n1 {
            for iy in 0..n2 {
                let xf = [a0 + ix as f64 * hx, b0 + (iy as f64 + 0.5) * hy];
                let xi2 = (at(ix, iy + 1) - at(ix, iy)) / hy;
                let xi1 = (at(ix + 1, iy) - at(ix - 1, iy) + at(ix + 1, iy + 1)
                    - at(ix - 1, iy + 1))
                    / (4.0 * hx);
                qy[(ix - 1) * n2 + iy] = self.flux_at_face(xf, t_plus, [xi1, xi2])[1];
            }
        }

        let inx = n1 - 1;
        let mut out = vec![0.0; inx * (n2 - 1)];
        for iy in 1..n2 {
            for ix in 1..n1 {
                let i = iy * m + ix;
                let g = self.reaction_at(self.node_x(i), t_plus, at(ix, iy));
                let divx = (qx[(iy - 1) * n1 + ix] - qx[(iy - 1) * n1 + ix - 1]) / hx;
                let divy = (qy[(ix - 1) * n2 + iy] - qy[(ix - 1) * n2 + iy - 1]) / hy;
                out[(iy - 1) * inx + (ix - 1)] =
                    self.rho_nodes[i] * (at(ix, iy) - uprev[i]) / dt - divx - divy - g;
            }
        }
        out
    }

    /// Spatial cell volume.
    fn vol(&self) -> f64 {
        (0..self.dim).map(|ax| self.plan.h[ax]).product()
    }

    /// rho-weighted squared spatial L2 norm of a full frame.
    fn l2rho2(&self, u: &[f64]) -> f64 {
        let vol = self.vol();
        u.iter().zip(&self.rho_nodes).map(|(v, r)| r * v * v * vol).sum()
    }

    /// Discrete Dirichlet form sum(faces) a_f . (normal difference) and the
    /// reaction work sum (1/e) g u, both at time t_plus.
    fn energy_rates(&self, u: &[f64], t_plus: f64) -> (f64, f64) {
        let vol = self.vol();
        let mut flux_work = 0.0;
        if self.dim == 1 {
            let n = self.plan.nx[0];
            let h = self.plan.h[0];
            let a0 = self.domain[0][0];
            for i in 0..n {
                let xf = [a0 + (i as f64 + 0.5) * h, 0.0];
                let xi = (u[i + 1] - u[i]) / h;
                flux_work += self.flux_at_face(xf, t_plus, [xi, 0.0])[0] * xi * vol;
            }
        } else {
            let (n1, n2) = (self.plan.nx[0], self.plan.nx[1]);
            let m = n1 + 1;
            let (hx, hy) = (self.plan.h[0], self.plan.h[1]);
            let (a0, b0) = (self.domain[0][0], self.domain[1][0]);
            let at = |ix: usize, iy: usize| u[iy * m + ix];
            for iy in 1..n2 {
                for ix in 0..n1 {
                    let xf = [a0 + (ix as f64 + 0.5) * hx, b0 + iy as f64 * hy];
                    let xi1 = (at(ix + 1, iy) - at(ix, iy)) / hx;
                    let xi2 = (at(ix, iy + 1) - at(ix, iy - 1) + at(ix + 1, iy + 1)
                        - at(ix + 1, iy - 1))
                        / (4.0 * hy);
                    flux_work += self.flux_at_face(xf, t_plus, [xi1, xi2])[0] * xi1 * vol;
                }
            }
            for ix in 1..n1 {
                for iy in 0..n2 {
                    let xf = [a0 + ix as f64 * hx, b0 + (iy as f64 + 0.5) * hy];
                    let xi2 = (at(ix, iy + 1) - at(ix, iy)) / hy;
                    let xi1 = (at(ix + 1, iy) - at(ix - 1, iy) + at(ix + 1, iy + 1)
                        - at(ix - 1, iy + 1))
                        / (4.0 * hx);
                    flux_work += self.flux_at_face(xf, t_plus, [xi1, xi2])[1] * xi2 * vol;
                }
            }
        }
        let mut reaction_work = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                reaction_work += self.reaction_at(self.node_x(i), t_plus, ui) * ui * vol;
            }
        }
        (flux_work, reaction_work)
    }

    /// |u|_p^p + |Du|_p^p of a full frame with nodal central gradients.
    fn w1p_frame(&self, u: &[f64]) -> f64 {
        let vol = self.vol();
        let p = self.p;
        let mut sum = 0.0;
        if self.dim == 1 {
            let n = self.plan.nx[0];
            let h = self.plan.h[0];
            for i in 1..n {
                let du = (u[i + 1] - u[i - 1]) / (2.0 * h);
                sum += (u[i].abs().powf(p) + du.abs().powf(p)) * vol;
            }
        } else {
            let (n1, n2) = (self.plan.nx[0], self.plan.nx[1]);
            let m = n1 + 1;
            let (hx, hy) = (self.plan.h[0], self.plan.h[1]);
            for iy in 1..n2 {
                for ix in 1..n1 {
                    let i = iy * m + ix;
                    let d1 = (u[i + 1] - u[i - 1]) / (2.0 * hx);
                    let d2 = (u[i + m] - u[i - m]) / (2.0 * hy);
                    let grad = (d1 * d1 + d2 * d2).sqrt();
                    sum += (u[i].abs().powf(p) + grad.powf(p)) * vol;
                }
            }
        }
        sum
    }

    fn take_step(
        &self,
        wprev: &[f64],
        dt: f64,
        t_plus: f64,
        stats: &mut DnsStats,
    ) -> Result<Vec<f64>> {
        let uprev = self.full(wprev);
        let f = |w: &[f64]| -> Result<Vec<f64>> { Ok(self.residual(w, &uprev, dt, t_plus)) };
        let mut w = wprev.to_vec();
        let scale = rms(&f(&w)?).max(1e-14);
        let opts = NewtonOpts {
            tol_abs: self.tol_dns * scale,
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
}

/// Run the DNS for one epsilon. When `reference` is given, the trajectory
/// distance to it is accumulated in L2(Q_T).
pub fn solve(
    cfg: &ScenarioConfig,
    set: &CoefficientSet,
    eps: f64,
    reference: Option<&MacroSolution>,
) -> Result<DnsOutput> {
    let plan = plan(cfg, set, eps)?;
    let op = DnsOp::new(cfg, set, plan);
    let mut stats = DnsStats::default();

    let mut u0 = vec![0.0; op.nodes()];
    for (i, v) in u0.iter_mut().enumerate() {
        *v = set.initial.u0(op.node_x(i));
    }
    zero_boundary(&mut u0, op.dim, plan.nx);

    let vol = op.vol();
    let e_start = 0.5 * op.l2rho2(&u0);
    let mut sup_l2rho2 = op.l2rho2(&u0);
    let mut series = vec![[0.0, op.l2rho2(&u0), op.w1p_frame(&u0)]];
    let mut w1p_integral = 0.0;
    let mut flux_work = 0.0;
    let mut reaction_work = 0.0;
    let mut err2 = reference.map(|_| 0.0f64);

    let accumulate_err = |u: &Vec<f64>, t: f64, weight: f64, err2: &mut Option<f64>| {
        if let (Some(acc), Some(mref)) = (err2.as_mut(), reference) {
            let mut s = 0.0;
            for (i, &ui) in u.iter().enumerate() {
                let d = ui - mref.eval(t, op.node_x(i));
                s += d * d * vol;
            }
            *acc += weight * s;
        }
    };

    accumulate_err(&u0, 0.0, 0.5 * plan.dt, &mut err2);

    let mut w = op.interior(&u0);
    let mut t = 0.0;
    for step in 0..plan.nt {
        // advance one nominal step, halving failed attempts in place
        let mut pending = vec![(plan.dt, 0usize)];
        while let Some((dtq, depth)) = pending.pop() {
            match op.take_step(&w, dtq, t + dtq, &mut stats) {
                Ok(next) => {
                    w = next;
                    t += dtq;
                    let u = op.full(&w);
                    let (fw, rw) = op.energy_rates(&u, t);
                    flux_work += dtq * fw;
                    reaction_work += dtq * rw;
                }
                Err(Error::StepFailed(msg)) => {
                    if depth < MAX_HALVINGS {
                        stats.halvings += 1;
                        pending.push((0.5 * dtq, depth + 1));
                        pending.push((0.5 * dtq, depth + 1));
                    } else {
                        return Err(Error::StepFailed(format!(
                            "dns step failed after {MAX_HALVINGS} halvings: {msg}"
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let u = op.full(&w);
        let (l2, w1p) = (op.l2rho2(&u), op.w1p_frame(&u));
        sup_l2rho2 = sup_l2rho2.max(l2);
        w1p_integral += plan.dt * w1p;
        series.push([t, l2, w1p]);
        let wt = if step + 1 == plan.nt { 0.5 * plan.dt } else { plan.dt };
        accumulate_err(&u, t, wt, &mut err2);
    }

    let final_frame = op.full(&w);
    let e_end = 0.5 * op.l2rho2(&final_frame);
    let energy_residual = (e_end - e_start + flux_work - reaction_work).abs();

    Ok(DnsOutput {
        plan,
        sup_l2rho2,
        w1p_integral,
        energy_residual,
        l2_qt_error: err2.map(f64::sqrt),
        series,
        final_frame,
        stats,
    })
}

fn zero_boundary(u: &mut [f64], dim: usize, nx: [usize; 2]) {
    if dim == 1 {
        u[0] = 0.0;
        u[nx[0]] = 0.0;
    } else {
        let m = nx[0] + 1;
        for ix in 0..=nx[0] {
            u[ix] = 0.0;
            u[nx[1] * m + ix] = 0.0;
        }
        for iy in 0..=nx[1] {
            u[iy * m] = 0.0;
            u[iy * m + nx[0]] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup(src: &str) -> (ScenarioConfig, CoefficientSet) {
        let cfg = ScenarioConfig::parse(src).unwrap();
        let set = crate::coefficients::build(&cfg).unwrap();
        (cfg, set)
    }

    #[test]
    fn plans_are_commensurate_and_enforce_resolution_rules() {
        let (cfg, set) = setup(
            "id = \"t\"\ndimension = 1\nk = 2.0\nT = 0.05\n[flux]\nid = \"cos1d\"\n[grids]\ndns_x = 256\ndns_t = 400\n",
        );
        for (eps, want_s) in [(0.125, 32), (1.0 / 16.0, 16), (1.0 / 32.0, 8)] {
            let p = plan(&cfg, &set, eps).unwrap();
            assert_eq!(p.nx[0], 256, "cells stay fixed across the ladder");
            assert_eq!(p.cells_per_period, Some(want_s));
            assert!(p.h[0] <= eps / 8.0 + 1e-15);
            assert_eq!(p.nt, 400, "tau-independent scenario keeps nominal steps");
        }
        // very fine epsilon forces more than dns_x cells
        let p = plan(&cfg, &set, 1.0 / 64.0).unwrap();
        assert_eq!(p.nx[0], 512);

        // tau oscillation forces dt <= eps^k / 8
        let (cfg_t, set_t) = setup(
            "id = \"t\"\ndimension = 1\nk = 2.0\nT = 0.05\n[flux]\nid = \"cos1d\"\ntmod = 0.5\n[grids]\ndns_x = 64\ndns_t = 10\n",
        );
        let p = plan(&cfg_t, &set_t, 0.125).unwrap();
        let dt_max = 0.125f64.powi(2) / 8.0;
        assert!(p.dt <= dt_max + 1e-15, "dt = {} > {}", p.dt, dt_max);

        // non-oscillating scenario keeps the base grid
        let (cfg_c, set_c) =
            setup("id = \"t\"\ndimension = 1\n[flux]\nid = \"const\"\n[grids]\ndns_x = 48\n");
        assert_eq!(plan(&cfg_c, &set_c, 0.125).unwrap().nx[0], 48);
    }

    #[test]
    fn plans_reject_budget_and_commensurateness_violations() {
        let (cfg, set) = setup(
            "id = \"t\"\ndimension = 1\n[flux]\nid = \"cos1d\"\n[grids]\ndns_x = 256\n[budget]\ndns_max_nodes = 100\n",
        );
        let err = plan(&cfg, &set, 1.0 / 32.0).unwrap_err();
        assert!(matches!(err, Error::UnderResolved(_)), "{err}");
        assert!(err.to_string().contains("under-resolved"), "{err}");
        assert!(err.to_string().contains("budget"), "{err}");

        let (cfg2, set2) = setup(
            "id = \"t\"\ndimension = 1\ndomain = [[0.0, 0.95]]\n[flux]\nid = \"cos1d\"\n",
        );
        let err = plan(&cfg2, &set2, 0.125).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("commensurate"), "{err}");

        assert!(matches!(plan(&cfg, &set, 0.3).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn constant_coefficient_dns_decays_at_the_discrete_rate() {
        // no oscillation: the DNS is plain implicit Euler heat flow, and the
        // first sine mode contracts by 1/(1 + dt scale lambda_h) per step.
        let (cfg, set) = setup(
            "id = \"t\"\ndimension = 1\nT = 0.05\n[flux]\nid = \"const\"\nscale = 2.0\n[initial]\nid = \"sinpi\"\n[grids]\ndns_x = 64\ndns_t = 25\n",
        );
        let out = solve(&cfg, &set, 0.125, None).unwrap();
        assert_eq!(out.stats.halvings, 0);
        let h = 1.0 / 64.0;
        let lam = 2.0 / (h * h) * (1.0 - (PI * h).cos());
        let dt = cfg.t_final / 25.0;
        let c = 1.0 / (1.0 + dt * 2.0 * lam);
        let mid = 32;
        let want = (PI * 0.5).sin() * c.powi(25);
        assert!(
            (out.final_frame[mid] - want).abs() < 1e-7,
            "{} vs {want}",
            out.final_frame[mid]
        );
    }

    #[test]
    fn dns_agrees_with_macro_on_a_non_oscillating_scenario() {
        // constant coefficients make the effective law the identity map of
        // the DNS law, and the two solvers share grids, so the trajectories
        // must agree to solver tolerance.
        let (cfg, set) = setup(
            "id = \"t\"\ndimension = 1\nT = 0.04\n[flux]\nid = \"const\"\nscale = 1.5\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 16\nmacro_x = 64\nmacro_t = 40\ndns_x = 64\ndns_t = 40\n",
        );
        let law = crate::effective::build(&cfg, &set, None).unwrap();
        let mac = crate::macroscale::solve(&cfg, &set, &law).unwrap();
        let out = solve(&cfg, &set, 0.125, Some(&mac)).unwrap();
        let err = out.l2_qt_error.unwrap();
        assert!(err < 1e-7, "dns vs macro disagree: {err:.3e}");
    }

    #[test]
    fn energy_identity_residual_contracts_under_refinement() {
        let base = "id = \"t\"\ndimension = 1\nk = 2.0\nT = 0.02\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[density]\nid = \"cos\"\n[initial]\nid = \"sinpi\"\n";
        let (cfg_c, set_c) = setup(&format!("{base}[grids]\ndns_x = 64\ndns_t = 50\n"));
        let (cfg_f, set_f) = setup(&format!("{base}[grids]\ndns_x = 128\ndns_t = 100\n"));
        let coarse = solve(&cfg_c, &set_c, 0.125, None).unwrap();
        let fine = solve(&cfg_f, &set_f, 0.125, None).unwrap();
        assert!(coarse.energy_residual > 0.0);
        let ratio = coarse.energy_residual / fine.energy_residual;
        assert!(ratio >= 1.8, "energy residual contracted only {ratio:.3}x");
    }

    #[test]
    fn apriori_monitors_are_stable_across_the_ladder() {
        let base = "id = \"t\"\ndimension = 1\nk = 2.0\nT = 0.02\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[density]\nid = \"cos\"\n[initial]\nid = \"sinpi\"\n[grids]\ndns_x = 128\ndns_t = 50\n";
        let (cfg, set) = setup(base);
        let a = solve(&cfg, &set, 0.125, None).unwrap();
        let b = solve(&cfg, &set, 1.0 / 16.0, None).unwrap();
        for (x, y) in [(a.sup_l2rho2, b.sup_l2rho2), (a.w1p_integral, b.w1p_integral)] {
            let ratio = (x / y).max(y / x);
            assert!(ratio < 2.0, "monitor varies {ratio:.3}x across the ladder");
        }
    }
}
