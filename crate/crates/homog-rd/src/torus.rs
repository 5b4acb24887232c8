//! Spectral calculus on the periodicity cell Y x Z, Y = (0,1)^N, Z = (0,1).
//!
//! Fields live on uniform tensor grids with `n` nodes per spatial axis and
//! `m` nodes on the tau axis, stored row-major over (tau, y2, y1). All
//! differential operators are Fourier multipliers:
//!
//! ```text
//!   (d/dy f)^(j)     = i 2 pi ktilde(j) fhat(j)
//!   (Lap f)^(j)      = -4 pi^2 |ktilde(j)|^2 fhat(j)
//!   (Poisson g)^(j)  = ghat(j) / (-4 pi^2 |ktilde(j)|^2)
//! ```
//!
//! where `ktilde` is the signed wavenumber with the Nyquist mode mapped to
//! zero. Using the same truncated wavenumber everywhere makes the discrete
//! identities exact in floating point: `div_y(grad_y u)` equals `laplace_y u`
//! for every field, integration by parts `<div v, u> = -<v, grad u>` holds to
//! roundoff, and `d/dtau` is exactly skew-adjoint, which is what the pairing
//! identity tests rely on. The price is that pure Nyquist content is treated
//! like a constant: `poisson_y` leaves it at zero. Smooth right-hand sides
//! resolved by the grid carry no such content, and the round-trip invariant
//! `poisson_y(laplace_y u) = u` holds on band-limited fields.
//!
//! Quadrature on a uniform periodic grid is the trapezoid rule, which
//! collapses to the plain mean; it integrates trigonometric polynomials below
//! the grid band exactly, so cell averages of the builtin coefficients are
//! exact to roundoff.

use std::collections::HashMap;
use std::io::{BufRead, Read as IoRead, Write as IoWrite};
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Default relative tolerance for the compatibility (Fredholm) check in
/// [`poisson_y`]: the slice mean of the right-hand side must vanish for the
/// periodic problem to be solvable. Trigonometric data centers to roundoff;
/// the slack allows user expressions whose quadrature mean is merely tiny.
pub const POISSON_MEAN_REL_TOL: f64 = 1e-8;

/// Uniform tensor grid on Y x Z.
///
/// `dim` is the spatial dimension N (1 or 2), `n` the number of nodes per
/// spatial axis, `m` the number of tau nodes (`m = 1` for steady fields).
/// Nodes are y_i = i/n and tau_j = j/m; the right endpoints are identified
/// with the left by periodicity and not stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    pub dim: usize,
    pub n: usize,
    pub m: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, m: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 4 {
            return Err(Error::Config(format!("cell grid needs at least 4 nodes per axis, got {n}")));
        }
        if m < 1 {
            return Err(Error::Config("tau grid needs at least 1 node".into()));
        }
        Ok(TorusGrid { dim, n, m })
    }

    /// Steady grid (no tau axis).
    pub fn steady(dim: usize, n: usize) -> Result<Self> {
        TorusGrid::new(dim, n, 1)
    }

    /// Number of spatial nodes n^dim.
    pub fn spatial_len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Total number of nodes m * n^dim.
    pub fn len(&self) -> usize {
        self.spatial_len() * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of spatial node `s` (second entry 0 in dimension 1).
    pub fn y(&self, s: usize) -> [f64; 2] {
        let h = 1.0 / self.n as f64;
        match self.dim {
            1 => [s as f64 * h, 0.0],
            _ => [(s % self.n) as f64 * h, (s / self.n) as f64 * h],
        }
    }

    /// Coordinate of tau node `it`.
    pub fn tau(&self, it: usize) -> f64 {
        it as f64 / self.m as f64
    }
}

/// Scalar field on a [`TorusGrid`], row-major over (tau, y2, y1).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: TorusGrid,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        Field { grid, data: vec![0.0; grid.len()] }
    }

    /// Sample `f(y, tau)` at the grid nodes.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let s_len = grid.spatial_len();
        let mut data = Vec::with_capacity(grid.len());
        for it in 0..grid.m {
            let tau = grid.tau(it);
            for s in 0..s_len {
                data.push(f(grid.y(s), tau));
            }
        }
        Field { grid, data }
    }

    /// The tau slice `it` as a contiguous spatial block.
    pub fn slice_tau(&self, it: usize) -> &[f64] {
        let s = self.grid.spatial_len();
        &self.data[it * s..(it + 1) * s]
    }

    pub fn slice_tau_mut(&mut self, it: usize) -> &mut [f64] {
        let s = self.grid.spatial_len();
        &mut self.data[it * s..(it + 1) * s]
    }

    /// In-place `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Field) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }
}

/// Vector field with `comps` components, stored component-major so each
/// component is itself laid out like a [`Field`].
#[derive(Clone, Debug, PartialEq)]
pub struct VecField {
    pub grid: TorusGrid,
    pub comps: usize,
    pub data: Vec<f64>,
}

impl VecField {
    pub fn zeros(grid: TorusGrid, comps: usize) -> Self {
        VecField { grid, comps, data: vec![0.0; comps * grid.len()] }
    }

    /// Component `c` of tau slice `it`.
    pub fn comp_slice(&self, c: usize, it: usize) -> &[f64] {
        let s = self.grid.spatial_len();
        let base = c * self.grid.len() + it * s;
        &self.data[base..base + s]
    }

    pub fn comp_slice_mut(&mut self, c: usize, it: usize) -> &mut [f64] {
        let s = self.grid.spatial_len();
        let base = c * self.grid.len() + it * s;
        &mut self.data[base..base + s]
    }

    /// Component `c` as a full (tau, y) block.
    pub fn comp(&self, c: usize) -> &[f64] {
        let l = self.grid.len();
        &self.data[c * l..(c + 1) * l]
    }

    /// Pointwise Euclidean norm, maximized over all nodes.
    pub fn sup_euclid(&self) -> f64 {
        let l = self.grid.len();
        let mut sup: f64 = 0.0;
        for idx in 0..l {
            let mut s2 = 0.0;
            for c in 0..self.comps {
                let v = self.data[c * l + idx];
                s2 += v * v;
            }
            sup = sup.max(s2.sqrt());
        }
        sup
    }
}

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry((n, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

/// Signed wavenumber for index `j` on an `n`-point axis, with the unpaired
/// Nyquist mode of even grids mapped to zero so first derivatives of real
/// fields stay real and the derivative matrix stays exactly skew-adjoint.
fn kappa(j: usize, n: usize) -> f64 {
    if 2 * j < n {
        j as f64
    } else if 2 * j == n {
        0.0
    } else {
        j as f64 - n as f64
    }
}

/// Forward transform of one spatial slice, normalized so mode 0 is the mean.
fn fwd_spatial(grid: &TorusGrid, slice: &[f64]) -> Vec<Complex<f64>> {
    let n = grid.n;
    let mut buf: Vec<Complex<f64>> = slice.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let f = plan(n, true);
    match grid.dim {
        1 => f.process(&mut buf),
        _ => {
            for row in buf.chunks_exact_mut(n) {
                f.process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                f.process(&mut col);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
        }
    }
    let scale = 1.0 / grid.spatial_len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Inverse transform into `out`; pairs with the normalization of
/// [`fwd_spatial`], so no rescaling is needed here.
fn inv_spatial(grid: &TorusGrid, mut spec: Vec<Complex<f64>>, out: &mut [f64]) {
    let n = grid.n;
    let f = plan(n, false);
    match grid.dim {
        1 => f.process(&mut spec),
        _ => {
            for row in spec.chunks_exact_mut(n) {
                f.process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = spec[i * n + j];
                }
                f.process(&mut col);
                for i in 0..n {
                    spec[i * n + j] = col[i];
                }
            }
        }
    }
    for (o, v) in out.iter_mut().zip(&spec) {
        *o = v.re;
    }
}

/// Multiply a spatial spectrum by i 2 pi ktilde along component `c`.
fn apply_deriv(grid: &TorusGrid, spec: &mut [Complex<f64>], c: usize) {
    let n = grid.n;
    let two_pi = 2.0 * std::f64::consts::PI;
    match grid.dim {
        1 => {
            for (j, v) in spec.iter_mut().enumerate() {
                let k = two_pi * kappa(j, n);
                *v = Complex::new(-k * v.im, k * v.re);
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    let jj = if c == 0 { j } else { i };
                    let k = two_pi * kappa(jj, n);
                    let v = &mut spec[i * n + j];
                    *v = Complex::new(-k * v.im, k * v.re);
                }
            }
        }
    }
}

/// The Laplace symbol -4 pi^2 |ktilde|^2 at flat spectral index `s`.
fn laplace_symbol(grid: &TorusGrid, s: usize) -> f64 {
    let n = grid.n;
    let two_pi = 2.0 * std::f64::consts::PI;
    let (k1, k2) = match grid.dim {
        1 => (kappa(s, n), 0.0),
        _ => (kappa(s % n, n), kappa(s / n, n)),
    };
    -(two_pi * two_pi) * (k1 * k1 + k2 * k2)
}

/// Spatial gradient D_y, slice by slice in tau.
pub fn grad_y(f: &Field) -> VecField {
    let g = f.grid;
    let mut out = VecField::zeros(g, g.dim);
    for it in 0..g.m {
        let spec = fwd_spatial(&g, f.slice_tau(it));
        for c in 0..g.dim {
            let mut sc = spec.clone();
            apply_deriv(&g, &mut sc, c);
            inv_spatial(&g, sc, out.comp_slice_mut(c, it));
        }
    }
    out
}

/// Spatial divergence, the negative adjoint of [`grad_y`].
pub fn div_y(v: &VecField) -> Field {
    let g = v.grid;
    debug_assert_eq!(v.comps, g.dim);
    let mut out = Field::zeros(g);
    let s_len = g.spatial_len();
    for it in 0..g.m {
        let mut acc = vec![Complex::new(0.0, 0.0); s_len];
        for c in 0..g.dim {
            let mut spec = fwd_spatial(&g, v.comp_slice(c, it));
            apply_deriv(&g, &mut spec, c);
            for (a, b) in acc.iter_mut().zip(&spec) {
                *a += b;
            }
        }
        inv_spatial(&g, acc, out.slice_tau_mut(it));
    }
    out
}

/// Spatial Laplacian; by construction identical to `div_y(grad_y(f))`.
pub fn laplace_y(f: &Field) -> Field {
    let g = f.grid;
    let mut out = Field::zeros(g);
    for it in 0..g.m {
        let mut spec = fwd_spatial(&g, f.slice_tau(it));
        for (s, v) in spec.iter_mut().enumerate() {
            *v *= laplace_symbol(&g, s);
        }
        inv_spatial(&g, spec, out.slice_tau_mut(it));
    }
    out
}

/// Tau derivative d/dtau, spectral along the tau axis (zero when `m = 1`).
pub fn dtau(f: &Field) -> Field {
    let g = f.grid;
    let mut out = Field::zeros(g);
    if g.m == 1 {
        return out;
    }
    let m = g.m;
    let s_len = g.spatial_len();
    let fw = plan(m, true);
    let bw = plan(m, false);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut col = vec![Complex::new(0.0, 0.0); m];
    for s in 0..s_len {
        for it in 0..m {
            col[it] = Complex::new(f.data[it * s_len + s], 0.0);
        }
        fw.process(&mut col);
        for (j, v) in col.iter_mut().enumerate() {
            let k = two_pi * kappa(j, m) / m as f64;
            *v = Complex::new(-k * v.im, k * v.re);
        }
        bw.process(&mut col);
        for it in 0..m {
            out.data[it * s_len + s] = col[it].re;
        }
    }
    out
}

/// Solve Lap R = g on each tau slice with periodic boundary conditions,
/// returning the solution with zero mean per slice.
///
/// The periodic problem is solvable only when the slice mean of `g`
/// vanishes; a violation beyond `rel_tol * max(1, |g|_inf)` is reported as
/// [`Error::Fredholm`].
pub fn poisson_y_tol(rhs: &Field, rel_tol: f64) -> Result<Field> {
    let g = rhs.grid;
    let s_len = g.spatial_len();
    let mut out = Field::zeros(g);
    for it in 0..g.m {
        let slice = rhs.slice_tau(it);
        let mean = slice.iter().sum::<f64>() / s_len as f64;
        let sup = slice.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let tol = rel_tol * sup.max(1.0);
        if mean.abs() > tol {
            return Err(Error::Fredholm { defect: mean.abs(), tol });
        }
        let mut spec = fwd_spatial(&g, slice);
        for (s, v) in spec.iter_mut().enumerate() {
            let sym = laplace_symbol(&g, s);
            if sym != 0.0 {
                *v /= sym;
            } else {
                *v = Complex::new(0.0, 0.0);
            }
        }
        inv_spatial(&g, spec, out.slice_tau_mut(it));
    }
    Ok(out)
}

/// [`poisson_y_tol`] with the default compatibility tolerance.
pub fn poisson_y(rhs: &Field) -> Result<Field> {
    poisson_y_tol(rhs, POISSON_MEAN_REL_TOL)
}

/// Apply `(mbar - beta Lap)^(-1)` per tau slice. This is the
/// constant-coefficient model operator used as the CG preconditioner; with
/// `mbar = 0` the mean mode is annihilated, matching the Poisson convention.
pub fn model_inverse(f: &Field, mbar: f64, beta: f64) -> Field {
    let g = f.grid;
    let mut out = Field::zeros(g);
    for it in 0..g.m {
        let mut spec = fwd_spatial(&g, f.slice_tau(it));
        for (s, v) in spec.iter_mut().enumerate() {
            let div = mbar - beta * laplace_symbol(&g, s);
            if div.abs() > 1e-300 {
                *v /= div;
            } else {
                *v = Complex::new(0.0, 0.0);
            }
        }
        inv_spatial(&g, spec, out.slice_tau_mut(it));
    }
    out
}

/// Integral over Y x Z (measure 1): the trapezoid rule on a uniform
/// periodic grid, i.e. the plain node mean.
pub fn quadrature(f: &Field) -> f64 {
    f.data.iter().sum::<f64>() / f.data.len() as f64
}

/// L2(Y x Z) inner product.
pub fn inner(a: &Field, b: &Field) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    let mut s = 0.0;
    for (x, y) in a.data.iter().zip(&b.data) {
        s += x * y;
    }
    s / a.data.len() as f64
}

/// Weighted inner product with a steady weight `rho(y)` broadcast over tau.
pub fn inner_weighted(rho: &Field, a: &Field, b: &Field) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    debug_assert_eq!(rho.grid.m, 1);
    debug_assert_eq!(rho.grid.spatial_len(), a.grid.spatial_len());
    let s_len = a.grid.spatial_len();
    let mut s = 0.0;
    for (idx, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
        s += rho.data[idx % s_len] * x * y;
    }
    s / a.data.len() as f64
}

pub fn l2_norm(f: &Field) -> f64 {
    inner(f, f).sqrt()
}

pub fn l2_norm_weighted(rho: &Field, f: &Field) -> f64 {
    inner_weighted(rho, f, f).sqrt()
}

pub fn linf(f: &Field) -> f64 {
    f.data.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

/// rho-weighted mean of `f` over Y x Z.
pub fn weighted_mean(rho: &Field, f: &Field) -> f64 {
    let s_len = f.grid.spatial_len();
    let mut num = 0.0;
    let mut den = 0.0;
    for (idx, x) in f.data.iter().enumerate() {
        let w = rho.data[idx % s_len];
        num += w * x;
        den += w;
    }
    num / den
}

/// Project off the rho-weighted constants: subtract the weighted mean.
/// Idempotent, and the result has weighted mean zero to roundoff.
pub fn project_weighted(rho: &Field, f: &Field) -> Field {
    let c = weighted_mean(rho, f);
    let mut out = f.clone();
    for v in &mut out.data {
        *v -= c;
    }
    out
}

/// Defect of the pairing antisymmetry `[rho dtau u, v] + [rho dtau v, u]`.
///
/// With a steady weight and the spectral tau derivative this vanishes to
/// roundoff for every pair of fields, which is the discrete counterpart of
/// the integration-by-parts identity used to define the pairing on the
/// parabolic cell space.
pub fn pairing_defect(rho: &Field, u: &Field, v: &Field) -> f64 {
    inner_weighted(rho, &dtau(u), v) + inner_weighted(rho, &dtau(v), u)
}

/// Reaction potential pair (R, G): per tau slice and per r sample,
/// Lap_y R = g(., tau, r) and G = D_y R, so that div_y G = g.
///
/// The construction turns the singularly scaled reaction (1/e) g into a
/// divergence, which is what makes the a-priori bounds of the continuous
/// theory uniform in e; numerically it is both a diagnostic (the fitted
/// bound below must stay proportional to |r|) and the worked example for
/// the Poisson machinery.
#[derive(Clone, Debug)]
pub struct PotentialPair {
    pub grid: TorusGrid,
    pub r_samples: Vec<f64>,
    /// R(., .; r_i), zero mean per tau slice.
    pub scalar: Vec<Field>,
    /// G(., .; r_i) = D_y R.
    pub gradient: Vec<VecField>,
    /// Fitted constant in |G| <= C |r|: max over samples of sup |G_i| / |r_i|.
    pub fitted_bound: f64,
    /// Fitted Lipschitz constant of r -> G(., ., r) over sample pairs.
    pub fitted_lipschitz: f64,
}

/// Build the potential pair for a reaction `g(y, tau, r)` on `grid` at the
/// given r samples. Fails with [`Error::Fredholm`] when some slice of g is
/// not centered.
pub fn build_potential(
    grid: TorusGrid,
    g: impl Fn([f64; 2], f64, f64) -> f64,
    r_samples: &[f64],
) -> Result<PotentialPair> {
    let mut scalar = Vec::with_capacity(r_samples.len());
    let mut gradient = Vec::with_capacity(r_samples.len());
    let mut fitted_bound: f64 = 0.0;
    for &r in r_samples {
        let rhs = Field::from_fn(grid, |y, tau| g(y, tau, r));
        let big_r = poisson_y(&rhs)?;
        let big_g = grad_y(&big_r);
        if r != 0.0 {
            fitted_bound = fitted_bound.max(big_g.sup_euclid() / r.abs());
        }
        scalar.push(big_r);
        gradient.push(big_g);
    }
    let mut fitted_lipschitz: f64 = 0.0;
    for i in 0..r_samples.len() {
        for j in (i + 1)..r_samples.len() {
            let dr = (r_samples[i] - r_samples[j]).abs();
            if dr < 1e-14 {
                continue;
            }
            let li = gradient[i].grid.len();
            let mut sup = 0.0f64;
            for idx in 0..li {
                let mut s2 = 0.0;
                for c in 0..gradient[i].comps {
                    let d = gradient[i].data[c * li + idx] - gradient[j].data[c * li + idx];
                    s2 += d * d;
                }
                sup = sup.max(s2.sqrt());
            }
            fitted_lipschitz = fitted_lipschitz.max(sup / dr);
        }
    }
    Ok(PotentialPair {
        grid,
        r_samples: r_samples.to_vec(),
        scalar,
        gradient,
        fitted_bound,
        fitted_lipschitz,
    })
}

const FIELD_MAGIC: &[u8; 4] = b"HRD1";
const FIELD_CSV_TAG: &str = "homog-rd-field";

/// Write a field in the text format: one header line
/// `homog-rd-field,dim=<d>,n=<n>,m=<m>`, then one line per tau slice with
/// the spatial nodes comma-separated in row-major (y2, y1) order. Values
/// are printed with 17 significant digits, enough to round-trip f64.
pub fn write_field_csv<W: IoWrite>(f: &Field, w: &mut W) -> Result<()> {
    writeln!(w, "{},dim={},n={},m={}", FIELD_CSV_TAG, f.grid.dim, f.grid.n, f.grid.m)?;
    for it in 0..f.grid.m {
        let slice = f.slice_tau(it);
        let mut line = String::with_capacity(slice.len() * 24);
        for (i, v) in slice.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_field_csv<R: BufRead>(r: &mut R) -> Result<Field> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.trim().split(',').collect();
    if parts.len() != 4 || parts[0] != FIELD_CSV_TAG {
        return Err(Error::Format("not a homog-rd field file".into()));
    }
    let parse = |s: &str, key: &str| -> Result<usize> {
        s.strip_prefix(&format!("{key}="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad field header entry {s:?}")))
    };
    let dim = parse(parts[1], "dim")?;
    let n = parse(parts[2], "n")?;
    let m = parse(parts[3], "m")?;
    let grid = TorusGrid::new(dim, n, m)?;
    let mut field = Field::zeros(grid);
    let mut line = String::new();
    for it in 0..m {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format(format!("field file truncated at tau slice {it}")));
        }
        let slice = field.slice_tau_mut(it);
        let mut count = 0;
        for (i, tok) in line.trim().split(',').enumerate() {
            if i >= slice.len() {
                return Err(Error::Format(format!("too many values in tau slice {it}")));
            }
            slice[i] = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad value {tok:?} in tau slice {it}")))?;
            count += 1;
        }
        if count != slice.len() {
            return Err(Error::Format(format!(
                "tau slice {it} has {count} values, expected {}",
                slice.len()
            )));
        }
    }
    Ok(field)
}

/// Write a field in the binary format: a 16-byte header (magic `HRD1`,
/// little-endian u32 dim, n, m) followed by the nodes as little-endian f64
/// in row-major (tau, y2, y1) order.
pub fn write_field_bin<W: IoWrite>(f: &Field, w: &mut W) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(f.grid.dim as u32).to_le_bytes())?;
    w.write_all(&(f.grid.n as u32).to_le_bytes())?;
    w.write_all(&(f.grid.m as u32).to_le_bytes())?;
    for v in &f.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_bin<R: IoRead>(r: &mut R) -> Result<Field> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != FIELD_MAGIC {
        return Err(Error::Format("bad magic, not a homog-rd binary field".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let (dim, n, m) = (word(4), word(8), word(12));
    if n > 1 << 20 || m > 1 << 20 {
        return Err(Error::Format(format!("implausible field shape n={n} m={m}")));
    }
    let grid = TorusGrid::new(dim, n, m)?;
    let mut field = Field::zeros(grid);
    let mut buf = [0u8; 8];
    for v in &mut field.data {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Deterministic rough field: independent samples in [-1, 1].
    fn random_field(grid: TorusGrid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid);
        for v in &mut f.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn quadrature_of_trig_polynomials_is_exact() {
        let grid = TorusGrid::steady(1, 64).unwrap();
        // mean of sin^2(2 pi y) over a period is 1/2
        let f = Field::from_fn(grid, |y, _| (2.0 * PI * y[0]).sin().powi(2));
        assert!((quadrature(&f) - 0.5).abs() < 1e-14);
        let grid2 = TorusGrid::new(2, 32, 4).unwrap();
        let g = Field::from_fn(grid2, |y, tau| {
            1.5 + (2.0 * PI * y[0]).cos() + (2.0 * PI * y[1]).sin() * (2.0 * PI * tau).cos()
        });
        assert!((quadrature(&g) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn poisson_inverts_single_mode_1d() {
        // Lap R = sin(2 pi y)  =>  R = -sin(2 pi y) / (4 pi^2)
        let grid = TorusGrid::steady(1, 64).unwrap();
        let rhs = Field::from_fn(grid, |y, _| (2.0 * PI * y[0]).sin());
        let sol = poisson_y(&rhs).unwrap();
        let exact = Field::from_fn(grid, |y, _| -(2.0 * PI * y[0]).sin() / (4.0 * PI * PI));
        let mut diff = sol.clone();
        diff.add_scaled(-1.0, &exact);
        assert!(linf(&diff) < 1e-13, "poisson 1d defect {}", linf(&diff));
    }

    #[test]
    fn poisson_inverts_single_mode_2d() {
        // Lap R = sin(2 pi y1) cos(2 pi y2)  =>  R = -rhs / (8 pi^2)
        let grid = TorusGrid::steady(2, 64).unwrap();
        let rhs = Field::from_fn(grid, |y, _| (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos());
        let sol = poisson_y(&rhs).unwrap();
        let exact = Field::from_fn(grid, |y, _| {
            -(2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos() / (8.0 * PI * PI)
        });
        let mut diff = sol.clone();
        diff.add_scaled(-1.0, &exact);
        assert!(linf(&diff) < 1e-13, "poisson 2d defect {}", linf(&diff));
    }

    #[test]
    fn poisson_rejects_uncentered_rhs() {
        let grid = TorusGrid::steady(1, 32).unwrap();
        let rhs = Field::from_fn(grid, |y, _| 1.0 + (2.0 * PI * y[0]).sin());
        let err = poisson_y(&rhs).unwrap_err();
        assert!(err.to_string().contains("Fredholm condition violated"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn poisson_round_trip_on_band_limited_fields() {
        // poisson_y(laplace_y u) = u - mean(u) for fields inside the band
        let grid = TorusGrid::new(2, 64, 4).unwrap();
        let u = Field::from_fn(grid, |y, tau| {
            (2.0 * PI * y[0]).sin() * (4.0 * PI * y[1]).cos()
                + 0.3 * (6.0 * PI * y[0]).cos() * (1.0 + (2.0 * PI * tau).sin())
        });
        let back = poisson_y_tol(&laplace_y(&u), 1e-6).unwrap();
        let mut diff = back;
        for it in 0..grid.m {
            let mean: f64 =
                u.slice_tau(it).iter().sum::<f64>() / grid.spatial_len() as f64;
            for (d, orig) in diff.slice_tau_mut(it).iter_mut().zip(u.slice_tau(it)) {
                *d -= orig - mean;
            }
        }
        assert!(linf(&diff) < 1e-12, "round trip defect {}", linf(&diff));
    }

    #[test]
    fn div_grad_equals_laplace_for_rough_fields() {
        // exact identity by construction, even off the smooth band
        for (dim, n) in [(1, 64), (2, 32)] {
            let grid = TorusGrid::new(dim, n, 2).unwrap();
            let f = random_field(grid, 17);
            let a = div_y(&grad_y(&f));
            let b = laplace_y(&f);
            let mut diff = a;
            diff.add_scaled(-1.0, &b);
            let scale = linf(&b).max(1.0);
            assert!(linf(&diff) < 1e-11 * scale, "defect {} at dim {dim}", linf(&diff));
        }
    }

    #[test]
    fn grad_of_tensor_mode_2d() {
        let grid = TorusGrid::steady(2, 64).unwrap();
        let f = Field::from_fn(grid, |y, _| (2.0 * PI * y[0]).sin() * (4.0 * PI * y[1]).sin());
        let g = grad_y(&f);
        let g1 = Field::from_fn(grid, |y, _| {
            2.0 * PI * (2.0 * PI * y[0]).cos() * (4.0 * PI * y[1]).sin()
        });
        let g2 = Field::from_fn(grid, |y, _| {
            4.0 * PI * (2.0 * PI * y[0]).sin() * (4.0 * PI * y[1]).cos()
        });
        let mut d1 = Field { grid, data: g.comp(0).to_vec() };
        d1.add_scaled(-1.0, &g1);
        let mut d2 = Field { grid, data: g.comp(1).to_vec() };
        d2.add_scaled(-1.0, &g2);
        assert!(linf(&d1) < 1e-11 && linf(&d2) < 1e-11);
    }

    #[test]
    fn integration_by_parts_is_exact() {
        // <div v, u> = -<v, grad u> to roundoff for arbitrary fields
        let grid = TorusGrid::new(2, 32, 1).unwrap();
        let u = random_field(grid, 3);
        let mut v = VecField::zeros(grid, 2);
        let r0 = random_field(grid, 4);
        let r1 = random_field(grid, 5);
        v.data[..grid.len()].copy_from_slice(&r0.data);
        v.data[grid.len()..].copy_from_slice(&r1.data);
        let lhs = inner(&div_y(&v), &u);
        let gu = grad_y(&u);
        let mut rhs = 0.0;
        for c in 0..2 {
            for (a, b) in v.comp(c).iter().zip(gu.comp(c)) {
                rhs += a * b;
            }
        }
        rhs /= grid.len() as f64;
        assert!((lhs + rhs).abs() < 1e-12, "ibp defect {}", lhs + rhs);
    }

    #[test]
    fn dtau_matches_single_mode_and_is_skew() {
        let grid = TorusGrid::new(1, 8, 32).unwrap();
        let f = Field::from_fn(grid, |_, tau| (2.0 * PI * tau).sin());
        let df = dtau(&f);
        let exact = Field::from_fn(grid, |_, tau| 2.0 * PI * (2.0 * PI * tau).cos());
        let mut diff = df;
        diff.add_scaled(-1.0, &exact);
        assert!(linf(&diff) < 1e-11);

        let u = random_field(grid, 11);
        let v = random_field(grid, 12);
        let skew = inner(&dtau(&u), &v) + inner(&u, &dtau(&v));
        assert!(skew.abs() < 1e-11, "skew defect {skew}");
    }

    #[test]
    fn pairing_defect_vanishes() {
        // the three pairs exercise tau-pure, mixed, and rough fields
        let grid = TorusGrid::new(1, 32, 32).unwrap();
        let rho_grid = TorusGrid::steady(1, 32).unwrap();
        let rho = Field::from_fn(rho_grid, |y, _| 1.0 + 0.5 * (2.0 * PI * y[0]).cos());
        let pairs = [
            (
                Field::from_fn(grid, |y, tau| (2.0 * PI * tau).sin() * (1.0 + (2.0 * PI * y[0]).cos())),
                Field::from_fn(grid, |y, tau| (2.0 * PI * tau).cos() * (2.0 * PI * y[0]).sin()),
            ),
            (
                Field::from_fn(grid, |_, tau| (4.0 * PI * tau).sin() + 0.2 * (2.0 * PI * tau).cos()),
                Field::from_fn(grid, |y, _| (2.0 * PI * y[0]).sin()),
            ),
            (random_field(grid, 21), random_field(grid, 22)),
        ];
        for (i, (u, v)) in pairs.iter().enumerate() {
            let d = pairing_defect(&rho, u, v);
            assert!(d.abs() < 1e-9, "pairing defect {d} for pair {i}");
        }
    }

    #[test]
    fn projection_is_idempotent_with_zero_weighted_mean() {
        let grid = TorusGrid::new(1, 64, 4).unwrap();
        let rho_grid = TorusGrid::steady(1, 64).unwrap();
        let rho = Field::from_fn(rho_grid, |y, _| 1.0 + 0.5 * (2.0 * PI * y[0]).cos());
        let f = random_field(grid, 31);
        let p1 = project_weighted(&rho, &f);
        assert!(weighted_mean(&rho, &p1).abs() < 1e-14);
        let p2 = project_weighted(&rho, &p1);
        let mut diff = p2;
        diff.add_scaled(-1.0, &p1);
        assert!(linf(&diff) < 1e-14);
    }

    #[test]
    fn potential_pair_matches_single_mode() {
        // g = r sin(2 pi y) h(tau) with h = 1 + sin(2 pi tau)/2:
        // R = -r h sin(2 pi y)/(4 pi^2), G = -r h cos(2 pi y)/(2 pi)
        let grid = TorusGrid::new(1, 64, 16).unwrap();
        let g = |y: [f64; 2], tau: f64, r: f64| {
            r * (2.0 * PI * y[0]).sin() * (1.0 + 0.5 * (2.0 * PI * tau).sin())
        };
        let rs = [0.0, 0.5, 1.0, -2.0];
        let pot = build_potential(grid, g, &rs).unwrap();

        for (i, &r) in rs.iter().enumerate() {
            let exact_g = Field::from_fn(grid, |y, tau| {
                -r * (1.0 + 0.5 * (2.0 * PI * tau).sin()) * (2.0 * PI * y[0]).cos() / (2.0 * PI)
            });
            let got = Field { grid, data: pot.gradient[i].comp(0).to_vec() };
            let mut diff = got;
            diff.add_scaled(-1.0, &exact_g);
            assert!(linf(&diff) < 1e-12 * r.abs().max(1.0), "G defect at r={r}");
        }
        // G vanishes with r and the fitted bound is max|h| / (2 pi)
        assert!(pot.gradient[0].sup_euclid() < 1e-13);
        let expect = 1.5 / (2.0 * PI);
        assert!((pot.fitted_bound - expect).abs() < 1e-10, "bound {}", pot.fitted_bound);
        assert!((pot.fitted_lipschitz - expect).abs() < 1e-10);

        // div G recovers g
        for (i, &r) in rs.iter().enumerate() {
            let div = div_y(&pot.gradient[i]);
            let gf = Field::from_fn(grid, |y, tau| g(y, tau, r));
            let mut diff = div;
            diff.add_scaled(-1.0, &gf);
            assert!(linf(&diff) < 1e-11, "div G defect {} at r={r}", linf(&diff));
        }
    }

    #[test]
    fn potential_rejects_uncentered_reaction() {
        let grid = TorusGrid::new(1, 32, 1).unwrap();
        let g = |y: [f64; 2], _tau: f64, r: f64| r * (1.0 + (2.0 * PI * y[0]).sin());
        let err = build_potential(grid, g, &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Fredholm { .. }));
    }

    #[test]
    fn field_io_round_trips() {
        let grid = TorusGrid::new(2, 8, 3).unwrap();
        let f = random_field(grid, 99);

        let mut buf = Vec::new();
        write_field_bin(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * grid.len());
        let back = read_field_bin(&mut &buf[..]).unwrap();
        assert_eq!(back, f);

        let mut text = Vec::new();
        write_field_csv(&f, &mut text).unwrap();
        let back = read_field_csv(&mut &text[..]).unwrap();
        assert_eq!(back.grid, f.grid);
        for (a, b) in back.data.iter().zip(&f.data) {
            assert_eq!(a, b, "text format must round-trip f64 exactly");
        }
    }

    #[test]
    fn field_io_rejects_corrupt_input() {
        let grid = TorusGrid::steady(1, 8).unwrap();
        let f = Field::zeros(grid);
        let mut buf = Vec::new();
        write_field_bin(&f, &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_field_bin(&mut &buf[..]), Err(Error::Format(_))));

        let text = b"homog-rd-field,dim=1,n=8,m=2\n1,2,3\n";
        assert!(read_field_csv(&mut &text[..]).is_err());
    }
}
