//! Effective (homogenized) coefficients assembled from cell solutions.
//!
//! The nonlinear pipeline produces
//!
//! ```text
//!   q(r, xi)  = int_{Y x Z} a(y, tau, xi + D_y pi) dy dtau
//!   q0(r, xi) = int_{Y x Z} d_r g(y, tau, r) pi(y, tau) dy dtau
//! ```
//!
//! from the corrector pi at each lattice point, and the linear pipeline
//! produces the matrix and vectors of the convection-diffusion limit
//!
//! ```text
//!   bhat = int b (I + D_y chi),  F1(r) = int b D_y w1,
//!   F2(r) = int d_r g chi,       F3(r) = int d_r g w1,
//! ```
//!
//! with the superposition invariant q = bhat xi + F1(r) tying the two
//! together. Tables are dense over a (r, xi) lattice with multilinear
//! interpolation, out-of-hull queries clamp and are counted, failed lattice
//! entries mark the table partial (using one is an error), and finished
//! tables can be persisted to a binary file plus JSON manifest keyed by a
//! content hash.

use crate::cell::{cell_solve, solve_chi, solve_w1, CellInput, CellParams, CellSolution};
use crate::coefficients::{CoeffArgs, CoefficientSet, Regime};
use crate::config::{Lattice1, ScenarioConfig};
use crate::error::{Error, Result};
use crate::torus::TorusGrid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

/// Cell average of the flux field of a solved corrector: the effective flux
/// q at the solution's frozen (r, xi).
pub fn effective_flux_q(sol: &CellSolution) -> [f64; 2] {
    let len = sol.grid.len();
    let mut q = [0.0; 2];
    for c in 0..sol.flux_field.comps {
        let data = &sol.flux_field.data[c * len..(c + 1) * len];
        q[c] = data.iter().sum::<f64>() / len as f64;
    }
    q
}

fn dg_slice(set: &CoefficientSet, params: &CellParams, grid: TorusGrid, tau: f64, r: f64) -> Vec<f64> {
    (0..grid.spatial_len())
        .map(|s| set.reaction.dg_dr(&CoeffArgs { x: params.x, t: params.t, y: grid.y(s), tau }, r))
        .collect()
}

/// Cell average of `d_r g * pi` with the regime view of the solution: per
/// tau slice for orbits and slice families, tau-averaged `d_r g` against the
/// steady corrector in the super regime.
pub fn effective_reaction_q0(input: &CellInput, sol: &CellSolution) -> f64 {
    q0_at(input, sol, sol.params.r)
}

fn q0_at(input: &CellInput, sol: &CellSolution, r: f64) -> f64 {
    let grid = sol.grid;
    let s_len = grid.spatial_len();
    let sgrid = TorusGrid { dim: grid.dim, n: grid.n, m: 1 };
    if grid.m > 1 {
        let mut acc = 0.0;
        for j in 0..grid.m {
            let dg = dg_slice(input.set, &sol.params, sgrid, grid.tau(j), r);
            let pi = sol.pi.slice_tau(j);
            for s in 0..s_len {
                acc += dg[s] * pi[s];
            }
        }
        acc / (grid.m * s_len) as f64
    } else {
        let tau_avg =
            input.set.regime == Regime::Super && input.set.reaction.tau_dependent;
        let dg = if tau_avg {
            let m = input.grid.m.max(4);
            let mut acc = vec![0.0; s_len];
            for j in 0..m {
                let slice = dg_slice(input.set, &sol.params, sgrid, j as f64 / m as f64, r);
                for (a, v) in acc.iter_mut().zip(&slice) {
                    *a += v / m as f64;
                }
            }
            acc
        } else {
            dg_slice(input.set, &sol.params, sgrid, 0.0, r)
        };
        let mut acc = 0.0;
        for s in 0..s_len {
            acc += dg[s] * sol.pi.data[s];
        }
        acc / s_len as f64
    }
}

/// Solve one cell problem and return (q, q0, solution).
pub fn effective_point(input: &CellInput) -> Result<([f64; 2], f64, CellSolution)> {
    let sol = cell_solve(input)?;
    let q = effective_flux_q(&sol);
    let q0 = effective_reaction_q0(input, &sol);
    Ok((q, q0, sol))
}

/// Data-driven default lattices: r spans twice the initial-datum range with
/// 33 points; xi spans the a priori macro gradient scale
/// `L = 2 pi max(1, |u0|_inf) / min_side` with 17 points per axis. Explicit
/// `[tables]` entries in the scenario override either axis.
pub fn default_lattices(cfg: &ScenarioConfig, set: &CoefficientSet) -> (Lattice1, Lattice1) {
    let r = cfg.tables.r.unwrap_or_else(|| {
        let umax = initial_sup(cfg, set);
        let rmax = (2.0 * umax).max(1.0);
        Lattice1 { min: -rmax, max: rmax, count: 33 }
    });
    let xi = cfg.tables.xi.unwrap_or_else(|| {
        let umax = initial_sup(cfg, set);
        let min_side = (0..cfg.dimension)
            .map(|d| cfg.domain[d][1] - cfg.domain[d][0])
            .fold(f64::INFINITY, f64::min);
        let l = 2.0 * std::f64::consts::PI * umax.max(1.0) / min_side;
        Lattice1 { min: -l, max: l, count: 17 }
    });
    (r, xi)
}

fn initial_sup(cfg: &ScenarioConfig, set: &CoefficientSet) -> f64 {
    let samples = 256;
    let mut sup = 0.0f64;
    let eval = |x: [f64; 2]| set.initial.u0(x).abs();
    if cfg.dimension == 1 {
        let (a, b) = (cfg.domain[0][0], cfg.domain[0][1]);
        for i in 0..=samples {
            let x = a + (b - a) * i as f64 / samples as f64;
            sup = sup.max(eval([x, 0.0]));
        }
    } else {
        let n = 64;
        for i in 0..=n {
            for j in 0..=n {
                let x = [
                    cfg.domain[0][0] + (cfg.domain[0][1] - cfg.domain[0][0]) * i as f64 / n as f64,
                    cfg.domain[1][0] + (cfg.domain[1][1] - cfg.domain[1][0]) * j as f64 / n as f64,
                ];
                sup = sup.max(eval(x));
            }
        }
    }
    sup
}

/// Locate `v` on a sorted lattice: lower index, interpolation weight toward
/// the upper neighbor, and whether the query fell outside the hull.
fn locate(lat: &[f64], v: f64) -> (usize, f64, bool) {
    let last = lat.len() - 1;
    if lat.len() == 1 {
        return (0, 0.0, v != lat[0]);
    }
    if v <= lat[0] {
        return (0, 0.0, v < lat[0]);
    }
    if v >= lat[last] {
        return (last - 1, 1.0, v > lat[last]);
    }
    let i = lat.partition_point(|&x| x <= v) - 1;
    let w = (v - lat[i]) / (lat[i + 1] - lat[i]);
    (i, w, false)
}

fn interp1(lat: &[f64], vals: &[f64], v: f64, clamped: &mut bool) -> f64 {
    let (i, w, c) = locate(lat, v);
    *clamped |= c;
    if lat.len() == 1 {
        return vals[0];
    }
    vals[i] * (1.0 - w) + vals[i + 1] * w
}

/// Linear-case effective law: the homogenized matrix plus the r-tabulated
/// convection and reaction vectors of (5.17).
#[derive(Debug)]
pub struct LinearEffective {
    pub dim: usize,
    /// Homogenized matrix; column j is the cell average of `b (e_j + D chi_j)`.
    pub bhat: [[f64; 2]; 2],
    pub r: Vec<f64>,
    pub f1: Vec<[f64; 2]>,
    pub f2: Vec<[f64; 2]>,
    pub f3: Vec<f64>,
    /// chi correctors kept for inspection and report digests.
    pub chi: Vec<CellSolution>,
    clamps: AtomicU64,
}

impl Clone for LinearEffective {
    fn clone(&self) -> Self {
        LinearEffective {
            dim: self.dim,
            bhat: self.bhat,
            r: self.r.clone(),
            f1: self.f1.clone(),
            f2: self.f2.clone(),
            f3: self.f3.clone(),
            chi: self.chi.clone(),
            clamps: AtomicU64::new(self.clamps.load(Ordering::Relaxed)),
        }
    }
}

impl LinearEffective {
    pub fn q(&self, r: f64, xi: [f64; 2]) -> [f64; 2] {
        let mut clamped = false;
        let f1 = [
            interp1(&self.r, &self.f1.iter().map(|v| v[0]).collect::<Vec<_>>(), r, &mut clamped),
            interp1(&self.r, &self.f1.iter().map(|v| v[1]).collect::<Vec<_>>(), r, &mut clamped),
        ];
        if clamped {
            self.clamps.fetch_add(1, Ordering::Relaxed);
        }
        [
            self.bhat[0][0] * xi[0] + self.bhat[0][1] * xi[1] + f1[0],
            self.bhat[1][0] * xi[0] + self.bhat[1][1] * xi[1] + f1[1],
        ]
    }

    pub fn q0(&self, r: f64, xi: [f64; 2]) -> f64 {
        let mut clamped = false;
        let f2 = [
            interp1(&self.r, &self.f2.iter().map(|v| v[0]).collect::<Vec<_>>(), r, &mut clamped),
            interp1(&self.r, &self.f2.iter().map(|v| v[1]).collect::<Vec<_>>(), r, &mut clamped),
        ];
        let f3 = interp1(&self.r, &self.f3, r, &mut clamped);
        if clamped {
            self.clamps.fetch_add(1, Ordering::Relaxed);
        }
        f2[0] * xi[0] + f2[1] * xi[1] + f3
    }
}

/// One r row of the linear assembly: (F1, F2, F3) at that lattice point.
type LinearRow = ([f64; 2], [f64; 2], f64);

/// Assemble the linear effective law on an r lattice: chi once, w1 per r.
pub fn assemble_linear(input: &CellInput, r_lat: &[f64]) -> Result<LinearEffective> {
    let chi = solve_chi(input)?;
    let dim = input.set.dimension;
    let mut bhat = [[0.0; 2]; 2];
    for (j, c) in chi.iter().enumerate() {
        let col = effective_flux_q(c);
        bhat[0][j] = col[0];
        bhat[1][j] = col[1];
    }
    if dim == 1 {
        bhat[1][1] = 1.0;
    }

    let rows: Vec<Result<LinearRow>> = r_lat
        .par_iter()
        .map(|&r| {
            let w1 = solve_w1(input, r)?;
            let f1 = effective_flux_q(&w1);
            let mut f2 = [0.0; 2];
            for (j, c) in chi.iter().enumerate() {
                f2[j] = q0_at(input, c, r);
            }
            let f3 = q0_at(input, &w1, r);
            Ok((f1, f2, f3))
        })
        .collect();

    let mut f1 = Vec::with_capacity(r_lat.len());
    let mut f2 = Vec::with_capacity(r_lat.len());
    let mut f3 = Vec::with_capacity(r_lat.len());
    for row in rows {
        let (a, b, c) = row?;
        f1.push(a);
        f2.push(b);
        f3.push(c);
    }
    Ok(LinearEffective {
        dim,
        bhat,
        r: r_lat.to_vec(),
        f1,
        f2,
        f3,
        chi,
        clamps: AtomicU64::new(0),
    })
}

/// Dense effective table over the (r, xi) lattice. 1D layout is
/// `idx = ir * nxi + i1`; 2D adds the second xi axis as
/// `idx = (ir * nxi + i2) * nxi + i1`.
#[derive(Debug)]
pub struct EffectiveTable {
    pub dim: usize,
    pub r: Vec<f64>,
    pub xi: Vec<f64>,
    pub q: Vec<[f64; 2]>,
    pub q0: Vec<f64>,
    pub resolved: Vec<bool>,
    /// Failed lattice entries as "(r, xi): message" lines.
    pub failures: Vec<String>,
    /// Whether this table was loaded from the disk cache.
    pub from_cache: bool,
    clamps: AtomicU64,
}

impl Clone for EffectiveTable {
    fn clone(&self) -> Self {
        EffectiveTable {
            dim: self.dim,
            r: self.r.clone(),
            xi: self.xi.clone(),
            q: self.q.clone(),
            q0: self.q0.clone(),
            resolved: self.resolved.clone(),
            failures: self.failures.clone(),
            from_cache: self.from_cache,
            clamps: AtomicU64::new(self.clamps.load(Ordering::Relaxed)),
        }
    }
}

impl EffectiveTable {
    fn idx(&self, ir: usize, i1: usize, i2: usize) -> usize {
        let nxi = self.xi.len();
        if self.dim == 1 {
            ir * nxi + i1
        } else {
            (ir * nxi + i2) * nxi + i1
        }
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    /// Multilinear interpolation of (q, q0) at (r, xi). Out-of-hull queries
    /// clamp and count; touching an unresolved lattice entry is an error.
    pub fn query(&self, r: f64, xi: [f64; 2]) -> Result<([f64; 2], f64)> {
        let (ir, wr, cr) = locate(&self.r, r);
        let (i1, w1, c1) = locate(&self.xi, xi[0]);
        let (i2, w2, c2) = if self.dim == 2 {
            locate(&self.xi, xi[1])
        } else {
            (0, 0.0, false)
        };
        if cr || c1 || c2 {
            self.clamps.fetch_add(1, Ordering::Relaxed);
        }
        let r_span = if self.r.len() > 1 { 1 } else { 0 };
        let x_span = if self.xi.len() > 1 { 1 } else { 0 };
        let mut q = [0.0; 2];
        let mut q0 = 0.0;
        for (dr, vr) in [(0, 1.0 - wr), (r_span, wr)] {
            for (d1, v1) in [(0, 1.0 - w1), (x_span, w1)] {
                let dims2: &[(usize, f64)] = if self.dim == 2 {
                    &[(0, 1.0 - w2), (x_span, w2)]
                } else {
                    &[(0, 1.0)]
                };
                for &(d2, v2) in dims2 {
                    let w = vr * v1 * v2;
                    if w == 0.0 {
                        continue;
                    }
                    let idx = self.idx(ir + dr, i1 + d1, i2 + d2);
                    if !self.resolved[idx] {
                        return Err(Error::PartialTable(format!(
                            "query (r = {r:.3}, xi = [{:.3}, {:.3}]) touches the failed entry at \
                             (r = {:.3}, xi1 = {:.3}); rebuild with finer cell tolerances or a \
                             smaller lattice range",
                            xi[0], xi[1], self.r[ir + dr], self.xi[i1 + d1]
                        )));
                    }
                    q[0] += w * self.q[idx][0];
                    q[1] += w * self.q[idx][1];
                    q0 += w * self.q0[idx];
                }
            }
        }
        Ok((q, q0))
    }
}

/// Build the dense table by independent cell solves over the lattice,
/// parallel over entries. Solver failures (divergence, period map) mark the
/// entry unresolved and the table partial; data errors abort.
pub fn tabulate(input: &CellInput, r_lat: &[f64], xi_lat: &[f64]) -> Result<EffectiveTable> {
    if input.set.flux.macro_dependent || input.set.reaction.macro_dependent {
        return Err(Error::Config(
            "effective tabulation requires cell data independent of the macro variables (x, t)"
                .into(),
        ));
    }
    let dim = input.set.dimension;
    let nxi = xi_lat.len();
    let total = r_lat.len() * nxi.pow(dim as u32);

    enum Entry {
        Ok([f64; 2], f64),
        Failed(String),
    }

    let entries: Vec<Result<Entry>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let (ir, i1, i2) = if dim == 1 {
                (flat / nxi, flat % nxi, 0)
            } else {
                (flat / (nxi * nxi), flat % nxi, (flat / nxi) % nxi)
            };
            let r = r_lat[ir];
            let xi = [xi_lat[i1], if dim == 2 { xi_lat[i2] } else { 0.0 }];
            let mut params = input.params;
            params.r = r;
            params.xi = xi;
            let point = CellInput { params, ..*input };
            match effective_point(&point) {
                Ok((q, q0, _)) => Ok(Entry::Ok(q, q0)),
                Err(
                    e @ (Error::CellDiverged(_) | Error::PeriodMap(_) | Error::LinearSolve(_)),
                ) => Ok(Entry::Failed(format!(
                    "(r = {r:.4}, xi = [{:.4}, {:.4}]): {e}",
                    xi[0], xi[1]
                ))),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut q = vec![[0.0; 2]; total];
    let mut q0 = vec![0.0; total];
    let mut resolved = vec![false; total];
    let mut failures = Vec::new();
    for (idx, entry) in entries.into_iter().enumerate() {
        match entry? {
            Entry::Ok(qv, q0v) => {
                q[idx] = qv;
                q0[idx] = q0v;
                resolved[idx] = true;
            }
            Entry::Failed(msg) => failures.push(msg),
        }
    }
    Ok(EffectiveTable {
        dim,
        r: r_lat.to_vec(),
        xi: xi_lat.to_vec(),
        q,
        q0,
        resolved,
        failures,
        from_cache: false,
        clamps: AtomicU64::new(0),
    })
}

/// Manifest identifying a cached table: the data that determines its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableManifest {
    pub version: u32,
    pub flux: String,
    pub reaction: String,
    pub density: String,
    pub dimension: usize,
    pub p: f64,
    pub k: f64,
    pub cell_y: usize,
    pub cell_tau: usize,
    pub tol_cell: f64,
    pub tol_period: f64,
    pub r: Vec<f64>,
    pub xi: Vec<f64>,
}

impl TableManifest {
    pub fn new(cfg: &ScenarioConfig, input: &CellInput, r_lat: &[f64], xi_lat: &[f64]) -> Self {
        TableManifest {
            version: 1,
            flux: cfg.flux.describe(),
            reaction: cfg.reaction.describe(),
            density: cfg.density.describe(),
            dimension: cfg.dimension,
            p: cfg.p,
            k: cfg.k,
            cell_y: input.grid.n,
            cell_tau: input.grid.m,
            tol_cell: input.tol.cell,
            tol_period: input.tol.period,
            r: r_lat.to_vec(),
            xi: xi_lat.to_vec(),
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        format!("{:x}", h.finalize())
    }
}

/// Cache directory from the `HOMOG_RD_CACHE` environment variable.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os("HOMOG_RD_CACHE").map(PathBuf::from)
}

const TABLE_MAGIC: &[u8; 4] = b"HRT1";

fn table_paths(dir: &Path, hash: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("effective-{hash}.manifest.json")),
        dir.join(format!("effective-{hash}.bin")),
    )
}

/// Persist a complete table: values to the binary file, identity to the
/// manifest. Partial tables are not cached.
pub fn store_table(dir: &Path, manifest: &TableManifest, table: &EffectiveTable) -> Result<()> {
    if table.is_partial() {
        return Err(Error::PartialTable(
            "refusing to cache a table with failed entries".into(),
        ));
    }
    std::fs::create_dir_all(dir)?;
    let (mpath, bpath) = table_paths(dir, &manifest.hash());
    let mut bytes = Vec::with_capacity(16 + table.q.len() * 24);
    bytes.extend_from_slice(TABLE_MAGIC);
    bytes.extend_from_slice(&(table.dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(table.r.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(table.xi.len() as u32).to_le_bytes());
    for v in &table.q {
        bytes.extend_from_slice(&v[0].to_le_bytes());
        bytes.extend_from_slice(&v[1].to_le_bytes());
    }
    for v in &table.q0 {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&bpath, bytes)?;
    std::fs::write(&mpath, serde_json::to_string_pretty(manifest).expect("manifest serializes"))?;
    Ok(())
}

/// Try to load a cached table matching the manifest; `None` on any absence
/// or mismatch (the caller recomputes).
pub fn load_table(dir: &Path, manifest: &TableManifest) -> Option<EffectiveTable> {
    let (mpath, bpath) = table_paths(dir, &manifest.hash());
    let stored: TableManifest = serde_json::from_str(&std::fs::read_to_string(mpath).ok()?).ok()?;
    if stored != *manifest {
        return None;
    }
    let bytes = std::fs::read(bpath).ok()?;
    if bytes.len() < 16 || &bytes[..4] != TABLE_MAGIC {
        return None;
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let nr = u32::from_le_bytes(bytes[8..12].try_into().ok()?) as usize;
    let nxi = u32::from_le_bytes(bytes[12..16].try_into().ok()?) as usize;
    if dim != manifest.dimension || nr != manifest.r.len() || nxi != manifest.xi.len() {
        return None;
    }
    let total = nr * nxi.pow(dim as u32);
    if bytes.len() != 16 + total * 24 {
        return None;
    }
    let mut q = vec![[0.0; 2]; total];
    let mut q0 = vec![0.0; total];
    let mut off = 16;
    for v in &mut q {
        v[0] = f64::from_le_bytes(bytes[off..off + 8].try_into().ok()?);
        v[1] = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().ok()?);
        off += 16;
    }
    for v in &mut q0 {
        *v = f64::from_le_bytes(bytes[off..off + 8].try_into().ok()?);
        off += 8;
    }
    Some(EffectiveTable {
        dim,
        r: manifest.r.clone(),
        xi: manifest.xi.clone(),
        q,
        q0,
        resolved: vec![true; total],
        failures: Vec::new(),
        from_cache: true,
        clamps: AtomicU64::new(0),
    })
}

/// The effective law handed to the macro solver.
#[derive(Clone, Debug)]
pub enum EffectiveLaw {
    Linear(LinearEffective),
    Table(EffectiveTable),
}

impl EffectiveLaw {
    pub fn q(&self, r: f64, xi: [f64; 2]) -> Result<[f64; 2]> {
        match self {
            EffectiveLaw::Linear(l) => Ok(l.q(r, xi)),
            EffectiveLaw::Table(t) => Ok(t.query(r, xi)?.0),
        }
    }

    pub fn q0(&self, r: f64, xi: [f64; 2]) -> Result<f64> {
        match self {
            EffectiveLaw::Linear(l) => Ok(l.q0(r, xi)),
            EffectiveLaw::Table(t) => Ok(t.query(r, xi)?.1),
        }
    }

    pub fn clamp_count(&self) -> u64 {
        match self {
            EffectiveLaw::Linear(l) => l.clamps.load(Ordering::Relaxed),
            EffectiveLaw::Table(t) => t.clamp_count(),
        }
    }

    /// One-line digest for reports: bhat or table shape plus value ranges.
    pub fn digest(&self) -> String {
        match self {
            EffectiveLaw::Linear(l) => {
                if l.dim == 1 {
                    format!(
                        "linear: bhat = {:.8}, F1 in [{:.3e}, {:.3e}], F3 in [{:.3e}, {:.3e}]",
                        l.bhat[0][0],
                        l.f1.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min),
                        l.f1.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max),
                        l.f3.iter().copied().fold(f64::INFINITY, f64::min),
                        l.f3.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    )
                } else {
                    format!(
                        "linear: bhat = [[{:.8}, {:.8}], [{:.8}, {:.8}]]",
                        l.bhat[0][0], l.bhat[0][1], l.bhat[1][0], l.bhat[1][1]
                    )
                }
            }
            EffectiveLaw::Table(t) => format!(
                "table: {} r x {} xi points{}, q1 in [{:.3e}, {:.3e}], {} failed entries",
                t.r.len(),
                t.xi.len(),
                if t.from_cache { " (cached)" } else { "" },
                t.q.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min),
                t.q.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max),
                t.failures.len()
            ),
        }
    }
}

/// Build the effective law for a scenario: the linear pipeline when the flux
/// is linear-matrix, the dense table otherwise, consulting `cache_dir` for
/// table reuse.
pub fn build(
    cfg: &ScenarioConfig,
    set: &CoefficientSet,
    cache_dir: Option<&Path>,
) -> Result<EffectiveLaw> {
    let grid = TorusGrid::new(cfg.dimension, cfg.grids.cell_y, cfg.grids.cell_tau)?;
    let input = CellInput::new(set, grid, CellParams::default(), cfg.tol);
    let (r_lat, xi_lat) = default_lattices(cfg, set);
    let r_pts = r_lat.points();
    if set.flux.is_linear() {
        return Ok(EffectiveLaw::Linear(assemble_linear(&input, &r_pts)?));
    }
    let xi_pts = xi_lat.points();
    let manifest = TableManifest::new(cfg, &input, &r_pts, &xi_pts);
    if let Some(dir) = cache_dir {
        if let Some(table) = load_table(dir, &manifest) {
            return Ok(EffectiveLaw::Table(table));
        }
    }
    let table = tabulate(&input, &r_pts, &xi_pts)?;
    if let Some(dir) = cache_dir {
        if !table.is_partial() {
            store_table(dir, &manifest, &table)?;
        }
    }
    Ok(EffectiveLaw::Table(table))
}
