//! Shared finite-difference machinery for the macroscale and DNS solvers.
//!
//! Implicit Euler steps of both solvers lead to nonlinear systems
//!
//! ```text
//!   F(u) = m (u - u_prev) / dt - Div_h q(., u, D_h u) - s(., u) = 0
//! ```
//!
//! on structured Dirichlet grids whose residual couples each node only to
//! its stencil neighbors. This module provides the pieces shared by both
//! solvers: CSR storage with colored finite-difference Jacobian assembly
//! (3 colors on a line, 5 on the plane, so the full Jacobian costs
//! ncolors + 1 residual evaluations), tridiagonal and ILU(0)
//! preconditioners, right preconditioned BiCGStab driven by matrix-free
//! finite-difference Jacobian-vector products, and the damped Newton loop
//! used for every implicit step.
//!
//! Failure semantics match the time steppers built on top: numerical
//! non-convergence (line search stall, Krylov breakdown, non-finite
//! residuals) surfaces as [`Error::StepFailed`] and is retryable with a
//! smaller time step, while genuine evaluation errors raised by the
//! residual closure (for instance a partial effective table) propagate
//! unchanged.

use crate::error::{Error, Result};

/// Base perturbation for finite-difference derivatives, sqrt of machine eps.
const FD_EPS: f64 = 1.490_116_119_384_765_6e-8;

/// Root-mean-square norm; grid-size independent, so tolerances transfer
/// across resolutions.
pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[idx] * x[self.cols[idx]];
            }
            out[i] = s;
        }
    }

    /// Entry (i, j) if present in the pattern.
    fn get(&self, i: usize, j: usize) -> f64 {
        for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.cols[idx] == j {
                return self.vals[idx];
            }
        }
        0.0
    }
}

/// Which structured grid the stencil discretizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StencilKind {
    /// 1d line of unknowns, 3-point stencil.
    Line,
    /// 2d tensor grid, 5-point stencil, row-major index `iy * nx + ix`.
    Grid5,
    /// 2d tensor grid, 9-point box stencil (face fluxes with tangential
    /// gradients couple diagonal neighbors), row-major index.
    Grid9,
}

/// Sparsity pattern and column coloring of a finite-difference stencil on a
/// Dirichlet grid (boundary nodes eliminated, interior unknowns only).
///
/// The coloring is a distance-2 coloring: two columns of the same color
/// never appear in a common row, so perturbing a whole color class at once
/// recovers one Jacobian column per perturbed unknown from a single
/// residual evaluation.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub kind: StencilKind,
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub colors: Vec<usize>,
    pub ncolors: usize,
}

impl Stencil {
    /// 3-point line stencil on n unknowns; colors i mod 3.
    pub fn line(n: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(3 * n);
        row_ptr.push(0);
        for i in 0..n {
            if i > 0 {
                cols.push(i - 1);
            }
            cols.push(i);
            if i + 1 < n {
                cols.push(i + 1);
            }
            row_ptr.push(cols.len());
        }
        let colors = (0..n).map(|i| i % 3).collect();
        Stencil { kind: StencilKind::Line, n, row_ptr, cols, colors, ncolors: 3 }
    }

    /// 5-point stencil on an nx by ny grid of unknowns; colors
    /// (ix + 2 iy) mod 5, a valid distance-2 coloring of the cross stencil.
    pub fn grid5(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(5 * n);
        let mut colors = Vec::with_capacity(n);
        row_ptr.push(0);
        for iy in 0..ny {
            for ix in 0..nx {
                let i = iy * nx + ix;
                if iy > 0 {
                    cols.push(i - nx);
                }
                if ix > 0 {
                    cols.push(i - 1);
                }
                cols.push(i);
                if ix + 1 < nx {
                    cols.push(i + 1);
                }
                if iy + 1 < ny {
                    cols.push(i + nx);
                }
                row_ptr.push(cols.len());
                colors.push((ix + 2 * iy) % 5);
            }
        }
        Stencil { kind: StencilKind::Grid5, n, row_ptr, cols, colors, ncolors: 5 }
    }

    /// 9-point box stencil on an nx by ny grid of unknowns; colors
    /// (ix mod 3) + 3 (iy mod 3). Two box offsets differ by at most 2 per
    /// axis, so the 3 by 3 block coloring is distance-2 valid.
    pub fn grid9(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(9 * n);
        let mut colors = Vec::with_capacity(n);
        row_ptr.push(0);
        for iy in 0..ny {
            for ix in 0..nx {
                for dy in -1i64..=1 {
                    let jy = iy as i64 + dy;
                    if jy < 0 || jy >= ny as i64 {
                        continue;
                    }
                    for dx in -1i64..=1 {
                        let jx = ix as i64 + dx;
                        if jx < 0 || jx >= nx as i64 {
                            continue;
                        }
                        cols.push((jy as usize) * nx + jx as usize);
                    }
                }
                row_ptr.push(cols.len());
                colors.push((ix % 3) + 3 * (iy % 3));
            }
        }
        Stencil { kind: StencilKind::Grid9, n, row_ptr, cols, colors, ncolors: 9 }
    }

    fn empty_csr(&self) -> Csr {
        Csr {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: vec![0.0; self.cols.len()],
        }
    }
}

/// Assemble the finite-difference Jacobian of `f` at `u` on the stencil
/// pattern with ncolors extra residual evaluations; `f0 = f(u)` is reused.
pub fn assemble_colored<F>(f: &F, u: &[f64], f0: &[f64], st: &Stencil) -> Result<Csr>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut jac = st.empty_csr();
    let mut up = u.to_vec();
    let mut hs = vec![0.0; st.n];
    for c in 0..st.ncolors {
        let mut any = false;
        for i in 0..st.n {
            if st.colors[i] == c {
                hs[i] = FD_EPS * (1.0 + u[i].abs());
                up[i] = u[i] + hs[i];
                any = true;
            }
        }
        if !any {
            continue;
        }
        let fp = f(&up)?;
        for i in 0..st.n {
            for idx in st.row_ptr[i]..st.row_ptr[i + 1] {
                let j = st.cols[idx];
                if st.colors[j] == c {
                    jac.vals[idx] = (fp[i] - f0[i]) / hs[j];
                }
            }
        }
        for i in 0..st.n {
            if st.colors[i] == c {
                up[i] = u[i];
            }
        }
    }
    Ok(jac)
}

/// Prefactored tridiagonal LU without pivoting (Thomas algorithm).
#[derive(Clone, Debug)]
pub struct TridiagFactor {
    low: Vec<f64>,
    diag: Vec<f64>,
    up: Vec<f64>,
}

impl TridiagFactor {
    /// Factor from the three diagonals; `dl[0]` and `du[n-1]` are ignored.
    pub fn new(dl: &[f64], d: &[f64], du: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut low = vec![0.0; n];
        let mut diag = d.to_vec();
        for i in 1..n {
            let piv = diag[i - 1];
            if !piv.is_finite() || piv.abs() < 1e-300 {
                return Err(Error::LinearSolve(format!(
                    "tridiagonal pivot {piv:.3e} at row {}",
                    i - 1
                )));
            }
            let m = dl[i] / piv;
            low[i] = m;
            diag[i] -= m * du[i - 1];
        }
        let last = diag[n - 1];
        if !last.is_finite() || last.abs() < 1e-300 {
            return Err(Error::LinearSolve(format!("tridiagonal pivot {last:.3e} at row {}", n - 1)));
        }
        Ok(TridiagFactor { low, diag, up: du.to_vec() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut x = b.to_vec();
        for i in 1..n {
            x[i] -= self.low[i] * x[i - 1];
        }
        x[n - 1] /= self.diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.up[i] * x[i + 1]) / self.diag[i];
        }
        x
    }
}

/// Incomplete LU factorization with zero fill on the CSR pattern.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    lu: Csr,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.n;
        let mut lu = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for idx in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[idx] == i {
                    diag_pos[i] = idx;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::LinearSolve(format!("missing diagonal in row {i}")));
            }
        }
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for idx in start..end {
                let k = lu.cols[idx];
                if k >= i {
                    break;
                }
                let piv = lu.vals[diag_pos[k]];
                if !piv.is_finite() || piv.abs() < 1e-300 {
                    return Err(Error::LinearSolve(format!("ilu0 pivot {piv:.3e} at row {k}")));
                }
                let m = lu.vals[idx] / piv;
                lu.vals[idx] = m;
                // subtract m * (row k restricted to columns > k in row i's pattern)
                for idx2 in idx + 1..end {
                    let j = lu.cols[idx2];
                    let akj = lu.get(k, j);
                    if akj != 0.0 {
                        lu.vals[idx2] -= m * akj;
                    }
                }
            }
            let piv = lu.vals[diag_pos[i]];
            if !piv.is_finite() || piv.abs() < 1e-300 {
                return Err(Error::LinearSolve(format!("ilu0 pivot {piv:.3e} at row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag_pos })
    }

    /// Solve L U x = r with unit lower triangle.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut x = r.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for idx in self.lu.row_ptr[i]..self.diag_pos[i] {
                s -= self.lu.vals[idx] * x[self.lu.cols[idx]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for idx in self.diag_pos[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.vals[idx] * x[self.lu.cols[idx]];
            }
            x[i] = s / self.lu.vals[self.diag_pos[i]];
        }
        x
    }
}

/// Preconditioner for the Krylov solve of one Newton correction.
pub enum Precon {
    Tri(TridiagFactor),
    Ilu(Box<Ilu0>),
}

impl Precon {
    /// Exact tridiagonal solve on lines, ILU(0) on the plane.
    pub fn build(st: &Stencil, jac: &Csr) -> Result<Self> {
        match st.kind {
            StencilKind::Line => {
                let n = jac.n;
                let mut dl = vec![0.0; n];
                let mut d = vec![0.0; n];
                let mut du = vec![0.0; n];
                for i in 0..n {
                    for idx in jac.row_ptr[i]..jac.row_ptr[i + 1] {
                        let j = jac.cols[idx];
                        if j + 1 == i {
                            dl[i] = jac.vals[idx];
                        } else if j == i {
                            d[i] = jac.vals[idx];
                        } else if j == i + 1 {
                            du[i] = jac.vals[idx];
                        }
                    }
                }
                Ok(Precon::Tri(TridiagFactor::new(&dl, &d, &du)?))
            }
            StencilKind::Grid5 | StencilKind::Grid9 => {
                Ok(Precon::Ilu(Box::new(Ilu0::factor(jac)?)))
            }
        }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Precon::Tri(t) => t.solve(r),
            Precon::Ilu(i) => i.apply(r),
        }
    }
}

/// Right preconditioned BiCGStab for `A x = b` with a matrix-free operator;
/// returns the solution and the iteration count. Stops when the true
/// residual satisfies `rms(b - A x) <= tol`.
pub fn bicgstab<A>(apply_a: &A, pre: &Precon, b: &[f64], tol: f64, max_iters: usize) -> Result<(Vec<f64>, usize)>
where
    A: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if rms(&r) <= tol {
        return Ok((x, 0));
    }
    let rhat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];

    for it in 1..=max_iters {
        let rho_new = dot(&rhat, &r);
        if !rho_new.is_finite() || rho_new.abs() < 1e-300 {
            return Err(Error::LinearSolve(format!("bicgstab breakdown, rho = {rho_new:.3e}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = pre.apply(&p);
        v = apply_a(&phat)?;
        let denom = dot(&rhat, &v);
        if !denom.is_finite() || denom.abs() < 1e-300 {
            return Err(Error::LinearSolve(format!("bicgstab breakdown, <rhat, v> = {denom:.3e}")));
        }
        alpha = rho_new / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if rms(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok((x, it));
        }
        let shat = pre.apply(&s);
        let t = apply_a(&shat)?;
        let tt = dot(&t, &t);
        if !tt.is_finite() || tt < 1e-300 {
            return Err(Error::LinearSolve(format!("bicgstab breakdown, <t, t> = {tt:.3e}")));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
        }
        r = s.iter().zip(&t).map(|(si, ti)| si - omega * ti).collect();
        let rnorm = rms(&r);
        if !rnorm.is_finite() {
            return Err(Error::LinearSolve("bicgstab produced a non-finite residual".into()));
        }
        if rnorm <= tol {
            return Ok((x, it));
        }
        if omega.abs() < 1e-300 {
            return Err(Error::LinearSolve(format!("bicgstab breakdown, omega = {omega:.3e}")));
        }
        rho = rho_new;
    }
    Err(Error::LinearSolve(format!("bicgstab did not converge in {max_iters} iterations")))
}

/// Controls for one Newton solve.
#[derive(Clone, Copy, Debug)]
pub struct NewtonOpts {
    /// Absolute rms residual target; callers scale it to the problem.
    pub tol_abs: f64,
    pub max_iters: usize,
    pub max_line_search: usize,
    pub krylov_max: usize,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts { tol_abs: 1e-10, max_iters: 30, max_line_search: 8, krylov_max: 400 }
    }
}

/// Convergence record of one Newton solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct NewtonStats {
    pub iters: usize,
    pub krylov: usize,
    pub rnorm: f64,
}

/// Damped Newton with finite-difference Jacobian-vector products.
///
/// Each correction solves the linearized system by BiCGStab where the
/// operator action is the directional difference
/// `(F(u + sigma v) - F(u)) / sigma` and the preconditioner is the colored
/// finite-difference Jacobian on the stencil pattern. Numerical failures
/// (stalled line search, Krylov breakdown, non-finite residuals) come back
/// as [`Error::StepFailed`], which time steppers treat as a request for a
/// smaller step; errors raised by the residual closure itself pass through.
pub fn newton_krylov<F>(f: &F, u: &mut Vec<f64>, st: &Stencil, opts: &NewtonOpts) -> Result<NewtonStats>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut stats = NewtonStats::default();
    let mut res = f(u)?;
    let mut rnorm = rms(&res);
    if !rnorm.is_finite() {
        return Err(Error::StepFailed("initial residual is not finite".into()));
    }

    for _ in 0..opts.max_iters {
        if rnorm <= opts.tol_abs {
            stats.rnorm = rnorm;
            return Ok(stats);
        }
        let jac = assemble_colored(f, u, &res, st)?;
        let pre = match Precon::build(st, &jac) {
            Ok(p) => p,
            Err(Error::LinearSolve(msg)) => {
                return Err(Error::StepFailed(format!("jacobian factorization failed: {msg}")))
            }
            Err(e) => return Err(e),
        };

        let uscale = 1.0 + rms(u);
        let jv = |vdir: &[f64]| -> Result<Vec<f64>> {
            let vnorm = rms(vdir);
            if vnorm == 0.0 {
                return Ok(vec![0.0; vdir.len()]);
            }
            let sigma = FD_EPS * uscale / vnorm;
            let trial: Vec<f64> = u.iter().zip(vdir).map(|(a, d)| a + sigma * d).collect();
            let ft = f(&trial)?;
            Ok(ft.iter().zip(&res).map(|(a, b)| (a - b) / sigma).collect())
        };
        let b: Vec<f64> = res.iter().map(|v| -v).collect();
        let inner = (0.01 * rnorm).max(0.02 * opts.tol_abs);
        let (delta, kit) = match bicgstab(&jv, &pre, &b, inner, opts.krylov_max) {
            Ok(out) => out,
            Err(Error::LinearSolve(msg)) => {
                return Err(Error::StepFailed(format!("newton correction failed: {msg}")))
            }
            Err(e) => return Err(e),
        };
        stats.krylov += kit;
        stats.iters += 1;

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_line_search {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let tres = f(&trial)?;
            let tnorm = rms(&tres);
            if tnorm.is_finite() && (tnorm <= rnorm * (1.0 - 1e-4 * step) || tnorm <= opts.tol_abs) {
                *u = trial;
                res = tres;
                rnorm = tnorm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::StepFailed(format!(
                "newton line search stalled at residual {rnorm:.3e} (target {:.3e})",
                opts.tol_abs
            )));
        }
    }
    if rnorm <= opts.tol_abs {
        stats.rnorm = rnorm;
        return Ok(stats);
    }
    Err(Error::StepFailed(format!(
        "newton did not reach {:.3e} in {} iterations (residual {rnorm:.3e})",
        opts.tol_abs, opts.max_iters
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense Gaussian elimination with partial pivoting, test reference.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
            m.swap(col, piv);
            x.swap(col, piv);
            for row in col + 1..n {
                let f = m[row][col] / m[col][col];
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                x[row] -= f * x[col];
            }
        }
        for row in (0..n).rev() {
            for k in row + 1..n {
                x[row] -= m[row][k] * x[k];
            }
            x[row] /= m[row][row];
        }
        x
    }

    fn csr_to_dense(a: &Csr) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; a.n]; a.n];
        for i in 0..a.n {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                out[i][a.cols[idx]] = a.vals[idx];
            }
        }
        out
    }

    #[test]
    fn thomas_matches_dense_elimination() {
        let n = 17;
        let dl: Vec<f64> = (0..n).map(|i| -1.0 - 0.03 * i as f64).collect();
        let d: Vec<f64> = (0..n).map(|i| 4.0 + 0.1 * i as f64).collect();
        let du: Vec<f64> = (0..n).map(|i| -1.5 + 0.02 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = d[i];
            if i > 0 {
                dense[i][i - 1] = dl[i];
            }
            if i + 1 < n {
                dense[i][i + 1] = du[i];
            }
        }
        let x = TridiagFactor::new(&dl, &d, &du).unwrap().solve(&b);
        let xref = dense_solve(&dense, &b);
        for (a, r) in x.iter().zip(&xref) {
            assert!((a - r).abs() < 1e-12, "{a} vs {r}");
        }
    }

    #[test]
    fn colorings_are_valid_distance2_colorings() {
        for st in [Stencil::grid5(7, 5), Stencil::grid9(7, 5), Stencil::line(9)] {
            for i in 0..st.n {
                let row = &st.cols[st.row_ptr[i]..st.row_ptr[i + 1]];
                for (a_idx, &ca) in row.iter().enumerate() {
                    for &cb in &row[a_idx + 1..] {
                        assert_ne!(
                            st.colors[ca], st.colors[cb],
                            "columns {ca} and {cb} share row {i} ({:?})",
                            st.kind
                        );
                    }
                }
            }
        }
    }

    /// Nonlinear 5-point residual used by the assembly and Newton tests:
    /// F_i = 4u_i - sum(neighbors) + u_i^3 - b_i with Dirichlet zero outside.
    fn cubic_residual(nx: usize, ny: usize, b: Vec<f64>) -> impl Fn(&[f64]) -> Result<Vec<f64>> {
        move |u: &[f64]| {
            let mut out = vec![0.0; u.len()];
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = iy * nx + ix;
                    let mut s = 4.0 * u[i] + u[i] * u[i] * u[i] - b[i];
                    if ix > 0 {
                        s -= u[i - 1];
                    }
                    if ix + 1 < nx {
                        s -= u[i + 1];
                    }
                    if iy > 0 {
                        s -= u[i - nx];
                    }
                    if iy + 1 < ny {
                        s -= u[i + nx];
                    }
                    out[i] = s;
                }
            }
            Ok(out)
        }
    }

    #[test]
    fn colored_assembly_matches_column_by_column_differences() {
        let (nx, ny) = (6, 4);
        let n = nx * ny;
        let b: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).cos()).collect();
        let f = cubic_residual(nx, ny, b);
        let u: Vec<f64> = (0..n).map(|i| 0.4 * (0.9 * i as f64).sin()).collect();
        let f0 = f(&u).unwrap();
        let st = Stencil::grid5(nx, ny);
        let jac = assemble_colored(&f, &u, &f0, &st).unwrap();
        let dense = csr_to_dense(&jac);
        // one column at a time, same perturbation rule
        for j in 0..n {
            let h = FD_EPS * (1.0 + u[j].abs());
            let mut up = u.clone();
            up[j] += h;
            let fp = f(&up).unwrap();
            for i in 0..n {
                let dij = (fp[i] - f0[i]) / h;
                assert!(
                    (dense[i][j] - dij).abs() < 1e-12,
                    "entry ({i}, {j}): {} vs {dij}",
                    dense[i][j]
                );
            }
        }
    }

    #[test]
    fn grid9_assembly_matches_column_by_column_differences() {
        let (nx, ny) = (5, 4);
        let n = nx * ny;
        let f = move |u: &[f64]| -> Result<Vec<f64>> {
            let mut out = vec![0.0; n];
            for iy in 0..ny as i64 {
                for ix in 0..nx as i64 {
                    let i = (iy * nx as i64 + ix) as usize;
                    let mut s = 4.0 * u[i] + u[i] * u[i] * u[i];
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dx == 0 && dy == 0 {
                                continue;
                            }
                            let (jx, jy) = (ix + dx, iy + dy);
                            if jx < 0 || jx >= nx as i64 || jy < 0 || jy >= ny as i64 {
                                continue;
                            }
                            let v = u[(jy * nx as i64 + jx) as usize];
                            s -= if dx * dy == 0 { v } else { -0.25 * v * v };
                        }
                    }
                    out[i] = s;
                }
            }
            Ok(out)
        };
        let u: Vec<f64> = (0..n).map(|i| 0.5 * (1.3 * i as f64).sin()).collect();
        let f0 = f(&u).unwrap();
        let st = Stencil::grid9(nx, ny);
        let jac = assemble_colored(&f, &u, &f0, &st).unwrap();
        let dense = csr_to_dense(&jac);
        for j in 0..n {
            let h = FD_EPS * (1.0 + u[j].abs());
            let mut up = u.clone();
            up[j] += h;
            let fp = f(&up).unwrap();
            for i in 0..n {
                let dij = (fp[i] - f0[i]) / h;
                assert!((dense[i][j] - dij).abs() < 1e-12, "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn ilu0_is_exact_on_a_tridiagonal_pattern() {
        // no fill is dropped on a line, so ILU(0) must reproduce the exact
        // solve there
        let st = Stencil::line(11);
        let mut a = st.empty_csr();
        for i in 0..st.n {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.cols[idx];
                a.vals[idx] = if i == j { 3.0 + 0.05 * i as f64 } else { -1.0 };
            }
        }
        let b: Vec<f64> = (0..st.n).map(|i| (i as f64).sin()).collect();
        let x = Ilu0::factor(&a).unwrap().apply(&b);
        let xref = dense_solve(&csr_to_dense(&a), &b);
        for (p, q) in x.iter().zip(&xref) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn bicgstab_solves_a_manufactured_nonsymmetric_system() {
        // 5-point Laplacian plus an upwind convection term; the oracle is a
        // chosen exact solution with b = A x.
        let (nx, ny) = (12, 9);
        let st = Stencil::grid5(nx, ny);
        let mut a = st.empty_csr();
        for iy in 0..ny {
            for ix in 0..nx {
                let i = iy * nx + ix;
                for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                    let j = a.cols[idx];
                    a.vals[idx] = if j == i {
                        4.6
                    } else if j + 1 == i {
                        -1.9 // convection biases the west coupling
                    } else {
                        -0.9
                    };
                }
            }
        }
        let xstar: Vec<f64> = (0..st.n).map(|i| (0.17 * i as f64).sin()).collect();
        let mut b = vec![0.0; st.n];
        a.matvec(&xstar, &mut b);
        let pre = Precon::build(&st, &a).unwrap();
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            let mut out = vec![0.0; v.len()];
            a.matvec(v, &mut out);
            Ok(out)
        };
        let (x, iters) = bicgstab(&apply, &pre, &b, 1e-12, 200).unwrap();
        assert!(iters < 60, "took {iters} iterations");
        for (p, q) in x.iter().zip(&xstar) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn newton_finds_the_known_root_of_the_cubic_system() {
        let (nx, ny) = (10, 7);
        let n = nx * ny;
        let xstar: Vec<f64> = (0..n).map(|i| (0.23 * i as f64).sin()).collect();
        // b = A xstar + xstar^3 so F(xstar) = 0 exactly
        let zero_b = cubic_residual(nx, ny, vec![0.0; n]);
        let b = zero_b(&xstar).unwrap();
        let f = cubic_residual(nx, ny, b);
        let st = Stencil::grid5(nx, ny);
        let mut u = vec![0.0; n];
        let opts = NewtonOpts { tol_abs: 1e-12, ..Default::default() };
        let stats = newton_krylov(&f, &mut u, &st, &opts).unwrap();
        assert!(stats.iters <= 8, "newton took {} iterations", stats.iters);
        for (p, q) in u.iter().zip(&xstar) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn newton_reports_step_failure_on_a_rootless_residual() {
        // F_i = u_i^2 + 1 has no real root; the line search must stall and
        // surface the retryable StepFailed variant.
        let f = |u: &[f64]| -> Result<Vec<f64>> { Ok(u.iter().map(|x| x * x + 1.0).collect()) };
        let st = Stencil::line(5);
        let mut u = vec![0.5; 5];
        let err = newton_krylov(&f, &mut u, &st, &NewtonOpts::default()).unwrap_err();
        assert!(matches!(err, Error::StepFailed(_)), "{err}");
    }

    #[test]
    fn residual_errors_pass_through_unchanged() {
        let f = |_: &[f64]| -> Result<Vec<f64>> {
            Err(Error::PartialTable("synthetic hole".into()))
        };
        let st = Stencil::line(3);
        let mut u = vec![0.0; 3];
        let err = newton_krylov(&f, &mut u, &st, &NewtonOpts::default()).unwrap_err();
        assert!(matches!(err, Error::PartialTable(_)), "{err}");
    }
}
