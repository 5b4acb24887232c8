//! Scenario configuration: the single input file that fixes a problem
//! instance end to end.
//!
//! Scenarios are TOML with a flat top level (`dimension`, `p`, `k`, `T`,
//! `epsilons`, ...) and nested sections for the coefficient laws (`[flux]`,
//! `[reaction]`, `[density]`, `[initial]`), the grid sizes (`[grids]`), the
//! effective-table lattices (`[tables]`), solver tolerances (`[tol]`) and
//! resolution budgets (`[budget]`). Every section is optional and falls back
//! to the defaults below, so a minimal scenario is just an `id`, a
//! `dimension` and whatever differs from the default problem.
//!
//! Coefficients are named builtins with numeric parameters (`id = "cos1d",
//! base = 2.0, amp = 1.0`) or small formulas (`expr = "1 + y/2"`); the
//! builtin registry lives in [`crate::coefficients`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One coefficient entry: either a builtin `id` with numeric parameters, or
/// an expression. Flux laws may instead give `kind` (`"linear"` or `"plap"`)
/// plus a scalar weight formula `b_expr`.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct CoeffSpec {
    pub id: Option<String>,
    pub expr: Option<String>,
    pub kind: Option<String>,
    pub b_expr: Option<String>,
    /// Numeric parameters for builtins (`base`, `amp`, `scale`, `tmod`, ...).
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl CoeffSpec {
    pub fn builtin(id: &str) -> Self {
        CoeffSpec { id: Some(id.to_string()), ..Default::default() }
    }

    /// Parameter with a default.
    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    /// Stable one-line description, used in reports and cache keys.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(id) = &self.id {
            parts.push(format!("id={id}"));
        }
        if let Some(kind) = &self.kind {
            parts.push(format!("kind={kind}"));
        }
        if let Some(expr) = &self.expr {
            parts.push(format!("expr={expr:?}"));
        }
        if let Some(b) = &self.b_expr {
            parts.push(format!("b_expr={b:?}"));
        }
        for (k, v) in &self.params {
            parts.push(format!("{k}={v}"));
        }
        parts.join(",")
    }
}

/// Grid resolutions for the three meshes of the pipeline.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Nodes per spatial axis of the periodicity cell.
    pub cell_y: usize,
    /// Tau nodes of the periodicity cell (critical and sub regimes).
    pub cell_tau: usize,
    /// Macro cells per spatial axis (nodes are `macro_x + 1`).
    pub macro_x: usize,
    /// Macro time steps over (0, T).
    pub macro_t: usize,
    /// Base DNS cells per axis; rounded up to a multiple of 1/e per run.
    pub dns_x: usize,
    /// Base DNS time steps; refined to resolve t/e^k when needed.
    pub dns_t: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Grids { cell_y: 128, cell_tau: 16, macro_x: 256, macro_t: 200, dns_x: 256, dns_t: 400 }
    }
}

/// Uniform 1D lattice specification `[min, max, count]`.
#[derive(Clone, Copy, Debug)]
pub struct Lattice1 {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Lattice1 {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![0.5 * (self.min + self.max)];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }
}

impl<'de> Deserialize<'de> for Lattice1 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = <[f64; 3]>::deserialize(d)?;
        let count = raw[2];
        if count.fract() != 0.0 || !(1.0..=1e6).contains(&count) {
            return Err(serde::de::Error::custom(format!(
                "lattice count must be a small positive integer, got {count}"
            )));
        }
        Ok(Lattice1 { min: raw[0], max: raw[1], count: count as usize })
    }
}

/// Lattices for effective-coefficient tabulation in (r, xi). Absent axes
/// fall back to data-driven defaults derived from the initial datum: r over
/// [-2 max|u0|, 2 max|u0|] with 33 points, xi per axis over [-L, L] with 17
/// points where L estimates the macro gradient scale (see
/// [`crate::effective::default_lattices`]).
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tables {
    pub r: Option<Lattice1>,
    pub xi: Option<Lattice1>,
}

/// Solver tolerances. All are dimensionless and relative to the natural
/// scale of the residual they gate.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Slack for the sampled structural checks (A1 to A5).
    pub validate: f64,
    /// Relative residual target of a cell solve.
    pub cell: f64,
    /// Relative update target of the critical-regime period map.
    pub period: f64,
    /// Relative residual target of a macro Newton step.
    #[serde(rename = "macro")]
    pub macro_step: f64,
    /// Relative residual target of a DNS Newton step.
    pub dns: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { validate: 1e-8, cell: 1e-11, period: 1e-12, macro_step: 1e-10, dns: 1e-10 }
    }
}

/// Hard caps that turn silent grid blowup into a reported error.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Maximum total DNS nodes per run (per axis product).
    pub dns_max_nodes: usize,
    /// Maximum DNS time steps per run.
    pub dns_max_steps: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { dns_max_nodes: 200_000, dns_max_steps: 2_000_000 }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EpsilonSpec {
    Number(f64),
    Fraction(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: String,
    dimension: usize,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default = "default_k")]
    k: f64,
    #[serde(rename = "T", default = "default_t")]
    t_final: f64,
    #[serde(default)]
    epsilons: Vec<EpsilonSpec>,
    #[serde(default)]
    assert_convergence: bool,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    domain: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    flux: Option<CoeffSpec>,
    #[serde(default)]
    reaction: Option<CoeffSpec>,
    #[serde(default)]
    density: Option<CoeffSpec>,
    #[serde(default)]
    initial: Option<CoeffSpec>,
    #[serde(default)]
    grids: Grids,
    #[serde(default)]
    tables: Tables,
    #[serde(default)]
    tol: Tolerances,
    #[serde(default)]
    budget: Budget,
}

fn default_p() -> f64 {
    2.0
}
fn default_k() -> f64 {
    2.0
}
fn default_t() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    7
}

/// A fully validated scenario.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub id: String,
    pub dimension: usize,
    pub p: f64,
    pub k: f64,
    /// Final time T of the evolution.
    pub t_final: f64,
    /// Epsilon ladder, strictly decreasing, each of the form 1/integer.
    pub epsilons: Vec<f64>,
    /// When set, the convergence study asserts a strict error decrease.
    pub assert_convergence: bool,
    pub seed: u64,
    /// Macro domain, one interval per axis (second axis ignored in 1D).
    pub domain: [[f64; 2]; 2],
    pub flux: CoeffSpec,
    pub reaction: CoeffSpec,
    pub density: CoeffSpec,
    pub initial: CoeffSpec,
    pub grids: Grids,
    pub tables: Tables,
    pub tol: Tolerances,
    pub budget: Budget,
    /// SHA-256 of the scenario source text.
    pub sha256: String,
    pub source: String,
}

impl ScenarioConfig {
    pub fn parse(source: &str) -> Result<Self> {
        let raw: RawScenario =
            toml::from_str(source).map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
        let mut epsilons = Vec::with_capacity(raw.epsilons.len());
        for spec in &raw.epsilons {
            epsilons.push(parse_epsilon(spec)?);
        }
        for pair in epsilons.windows(2) {
            if pair[1] >= pair[0] {
                return Err(Error::Config(format!(
                    "epsilons must be strictly decreasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if raw.dimension != 1 && raw.dimension != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {}", raw.dimension)));
        }
        if !(2.0..=8.0).contains(&raw.p) {
            return Err(Error::Config(format!("p must lie in [2, 8], got {}", raw.p)));
        }
        if !(raw.k > 0.0 && raw.k <= 8.0) {
            return Err(Error::Config(format!("k must lie in (0, 8], got {}", raw.k)));
        }
        if !raw.t_final.is_finite() || raw.t_final <= 0.0 {
            return Err(Error::Config(format!("T must be positive, got {}", raw.t_final)));
        }
        let mut domain = [[0.0, 1.0]; 2];
        if let Some(d) = &raw.domain {
            if d.len() != raw.dimension {
                return Err(Error::Config(format!(
                    "domain has {} intervals for dimension {}",
                    d.len(),
                    raw.dimension
                )));
            }
            for (i, iv) in d.iter().enumerate() {
                if !(iv[0].is_finite() && iv[1].is_finite() && iv[0] < iv[1]) {
                    return Err(Error::Config(format!("bad domain interval {iv:?}")));
                }
                domain[i] = *iv;
            }
        }
        let g = raw.grids;
        for (name, v) in [
            ("grids.cell_y", g.cell_y),
            ("grids.cell_tau", g.cell_tau),
            ("grids.macro_x", g.macro_x),
            ("grids.macro_t", g.macro_t),
            ("grids.dns_x", g.dns_x),
            ("grids.dns_t", g.dns_t),
        ] {
            if !(1..=1 << 24).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is out of range")));
            }
        }
        if g.cell_y < 4 {
            return Err(Error::Config("grids.cell_y must be at least 4".into()));
        }
        for (name, l) in [("tables.r", raw.tables.r), ("tables.xi", raw.tables.xi)] {
            if let Some(l) = l {
                if !(l.min.is_finite() && l.max.is_finite()) {
                    return Err(Error::Config(format!("{name} bounds must be finite")));
                }
                if l.count > 1 && l.min >= l.max {
                    return Err(Error::Config(format!("{name} needs min < max")));
                }
            }
        }
        for (name, v) in [
            ("tol.validate", raw.tol.validate),
            ("tol.cell", raw.tol.cell),
            ("tol.period", raw.tol.period),
            ("tol.macro", raw.tol.macro_step),
            ("tol.dns", raw.tol.dns),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let mut hasher = Sha256::new();
        hasher.update(source.as_bytes());
        let sha256 = format!("{:x}", hasher.finalize());
        Ok(ScenarioConfig {
            id: raw.id,
            dimension: raw.dimension,
            p: raw.p,
            k: raw.k,
            t_final: raw.t_final,
            epsilons,
            assert_convergence: raw.assert_convergence,
            seed: raw.seed,
            domain,
            flux: raw.flux.unwrap_or_else(|| CoeffSpec::builtin("const")),
            reaction: raw.reaction.unwrap_or_else(|| CoeffSpec::builtin("zero")),
            density: raw.density.unwrap_or_else(|| CoeffSpec::builtin("one")),
            initial: raw.initial.unwrap_or_else(|| CoeffSpec::builtin("zero")),
            grids: raw.grids,
            tables: raw.tables,
            tol: raw.tol,
            budget: raw.budget,
            sha256,
            source: source.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Domain edge lengths per axis.
    pub fn domain_len(&self, axis: usize) -> f64 {
        self.domain[axis][1] - self.domain[axis][0]
    }
}

/// Epsilons are reciprocals of integers so that an integer number of cell
/// periods tiles the domain; accept both `0.125` and `"1/8"`.
fn parse_epsilon(spec: &EpsilonSpec) -> Result<f64> {
    let v = match spec {
        EpsilonSpec::Number(v) => *v,
        EpsilonSpec::Fraction(s) => {
            let parts: Vec<&str> = s.split('/').collect();
            match parts.as_slice() {
                [num, den] => {
                    let num: f64 = num.trim().parse().map_err(|_| bad_eps(s))?;
                    let den: f64 = den.trim().parse().map_err(|_| bad_eps(s))?;
                    num / den
                }
                [one] => one.trim().parse().map_err(|_| bad_eps(s))?,
                _ => return Err(bad_eps(s)),
            }
        }
    };
    if !(v > 0.0 && v <= 0.5) {
        return Err(Error::Config(format!("epsilon {v} must lie in (0, 1/2]")));
    }
    let inv = 1.0 / v;
    if (inv - inv.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "epsilon {v} is incommensurate: 1/epsilon must be an integer"
        )));
    }
    Ok(1.0 / inv.round())
}

fn bad_eps(s: &str) -> Error {
    Error::Config(format!("cannot parse epsilon {s:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
        id = "linear_1d"
        dimension = 1
        p = 2.0
        k = 2.0
        T = 0.05
        epsilons = ["1/8", "1/16", 0.03125]
        assert_convergence = true
        seed = 11

        [flux]
        id = "cos1d"
        base = 2.0
        amp = 1.0

        [reaction]
        id = "rsin"
        amp = 1.0

        [density]
        id = "cos"
        amp = 0.5

        [initial]
        id = "sinpi"

        [grids]
        cell_y = 128
        cell_tau = 16
        macro_x = 512
        macro_t = 400
        dns_x = 256
        dns_t = 400

        [tables]
        r = [-2.0, 2.0, 17]
        xi = [-6.0, 6.0, 25]

        [tol]
        cell = 1e-12

        [budget]
        dns_max_nodes = 100000
    "#;

    #[test]
    fn parses_full_scenario() {
        let cfg = ScenarioConfig::parse(FULL).unwrap();
        assert_eq!(cfg.id, "linear_1d");
        assert_eq!(cfg.epsilons, vec![0.125, 0.0625, 0.03125]);
        assert_eq!(cfg.flux.id.as_deref(), Some("cos1d"));
        assert_eq!(cfg.flux.param("base", 0.0), 2.0);
        assert_eq!(cfg.grids.macro_x, 512);
        assert_eq!(cfg.tables.r.unwrap().count, 17);
        assert_eq!(cfg.tol.cell, 1e-12);
        assert_eq!(cfg.tol.period, 1e-12, "unset tolerances keep defaults");
        assert_eq!(cfg.budget.dns_max_nodes, 100_000);
        assert_eq!(cfg.sha256.len(), 64);
    }

    #[test]
    fn minimal_scenario_gets_defaults() {
        let cfg = ScenarioConfig::parse("id = \"tiny\"\ndimension = 1\n").unwrap();
        assert_eq!(cfg.p, 2.0);
        assert_eq!(cfg.k, 2.0);
        assert_eq!(cfg.flux.id.as_deref(), Some("const"));
        assert_eq!(cfg.reaction.id.as_deref(), Some("zero"));
        assert_eq!(cfg.density.id.as_deref(), Some("one"));
        assert_eq!(cfg.domain, [[0.0, 1.0], [0.0, 1.0]]);
        assert!(cfg.epsilons.is_empty());
    }

    #[test]
    fn rejects_bad_values() {
        for (src, needle) in [
            ("id = \"x\"\ndimension = 3\n", "dimension"),
            ("id = \"x\"\ndimension = 1\np = 1.5\n", "p must"),
            ("id = \"x\"\ndimension = 1\nk = 0.0\n", "k must"),
            ("id = \"x\"\ndimension = 1\nT = -1.0\n", "T must"),
            ("id = \"x\"\ndimension = 1\nepsilons = [0.3]\n", "incommensurate"),
            ("id = \"x\"\ndimension = 1\nepsilons = [0.0625, 0.125]\n", "decreasing"),
            ("id = \"x\"\ndimension = 1\nepsilons = [\"2/5\"]\n", "incommensurate"),
            ("id = \"x\"\ndimension = 1\ndomain = [[1.0, 0.0]]\n", "domain"),
            ("id = \"x\"\ndimension = 2\ndomain = [[0.0, 1.0]]\n", "domain"),
            ("id = \"x\"\ndimension = 1\n[tol]\ncell = 0.0\n", "tol.cell"),
            ("id = \"x\"\ndimension = 1\nnot_a_key = 1\n", "parse"),
        ] {
            let err = ScenarioConfig::parse(src).unwrap_err().to_string();
            assert!(err.contains(needle), "error {err:?} should mention {needle:?}");
            assert!(!err.is_empty());
        }
    }

    #[test]
    fn epsilon_fractions_normalize() {
        let cfg =
            ScenarioConfig::parse("id = \"x\"\ndimension = 1\nepsilons = [\"1/8\", \"1/32\"]\n")
                .unwrap();
        assert_eq!(cfg.epsilons, vec![0.125, 0.03125]);
    }

    #[test]
    fn hash_tracks_source_exactly() {
        let a = ScenarioConfig::parse("id = \"x\"\ndimension = 1\n").unwrap();
        let b = ScenarioConfig::parse("id = \"x\"\ndimension = 1\n").unwrap();
        let c = ScenarioConfig::parse("id = \"x\"\ndimension = 1\nseed = 8\n").unwrap();
        assert_eq!(a.sha256, b.sha256);
        assert_ne!(a.sha256, c.sha256);
    }
}
