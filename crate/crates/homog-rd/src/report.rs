//! Convergence studies and their report artifacts.
//!
//! A study runs the whole pipeline for one scenario: structural validation,
//! effective law assembly, one macro solve, then one DNS per epsilon of the
//! ladder compared against the macro trajectory in L2(Q_T). The outcome is
//! a [`ConvergenceReport`] with one row per epsilon plus ladder-wide monitor
//! summaries.
//!
//! Two renderings exist. The canonical JSON artifact is byte-identical
//! across reruns with the same config and seed: field order is fixed by the
//! struct, floats round-trip exactly, and wall-clock timings are excluded
//! from serialization. The plain-text rendering is for humans and carries
//! the per-stage timings the JSON deliberately omits. The schema is
//! versioned so downstream tooling can detect layout changes.
//!
//! Thread count never changes report content: the DNS ladder runs as an
//! ordered parallel map over independent sequential solves, so the collected
//! rows are the same no matter how they were scheduled.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{self, CoefficientSet, Regime, ValidationReport};
use crate::config::ScenarioConfig;
use crate::dns::{self, DnsOutput};
use crate::effective::{self, EffectiveLaw};
use crate::error::{Error, Result};
use crate::macroscale::{self, MacroSolution};

/// Layout version of the serialized report.
pub const REPORT_SCHEMA: u32 = 1;

/// Wall-clock per pipeline stage, in milliseconds. Never serialized: the
/// JSON artifact must be byte-identical across reruns.
#[derive(Clone, Debug, Default)]
pub struct StageTimings {
    pub validate_ms: u64,
    pub effective_ms: u64,
    pub macro_ms: u64,
    /// Wall-clock of the whole DNS stage (the ladder may run in parallel).
    pub dns_ms: u64,
    pub total_ms: u64,
}

/// One epsilon of the ladder: resolved grid, error, and monitors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    /// Cells per axis actually used (commensurate refinement included).
    pub nx: Vec<usize>,
    pub nt: usize,
    /// |u_eps - u0| in L2(Q_T) against the macro trajectory.
    pub l2_qt_error: f64,
    pub sup_l2rho2: f64,
    pub w1p_integral: f64,
    pub energy_residual: f64,
    pub steps: usize,
    pub newton_iters: usize,
    pub halvings: usize,
}

/// Min/max spread of one monitor across the ladder.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MonitorSpread {
    pub min: f64,
    pub max: f64,
    /// max / min; the uniform a priori bounds keep this near 1.
    pub ratio: f64,
}

/// Everything a convergence run produces, minus wall-clock.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub tool_version: String,
    pub scenario: String,
    /// SHA-256 of the scenario source bytes.
    pub config_sha256: String,
    pub seed: u64,
    pub dimension: usize,
    pub p: f64,
    pub k: f64,
    pub regime: String,
    pub t_final: f64,
    pub rho_bar: f64,
    /// One-line digest of the effective law (bhat or table probes).
    pub effective_digest: String,
    pub macro_steps: usize,
    pub macro_newton_iters: usize,
    pub macro_halvings: usize,
    pub rows: Vec<EpsilonRow>,
    pub sup_spread: Option<MonitorSpread>,
    pub w1p_spread: Option<MonitorSpread>,
    /// Strict decrease of the error column; None for ladders shorter than 2.
    pub errors_decreasing: Option<bool>,
    /// Whether the scenario demanded the decrease.
    pub asserted: bool,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// A finished study: the report plus the solver outputs behind it, kept for
/// snapshot artifacts.
#[derive(Debug)]
pub struct StudyOutput {
    pub validation: ValidationReport,
    pub macro_solution: MacroSolution,
    pub dns: Vec<DnsOutput>,
    pub report: ConvergenceReport,
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Sub => "sub",
        Regime::Critical => "critical",
        Regime::Super => "super",
    }
}

/// Prefix a stage name onto a failure so aborted studies say where they died.
fn in_stage(stage: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{stage}: {m}")),
        Error::Validation(m) => Error::Validation(format!("{stage}: {m}")),
        Error::CellDiverged(m) => Error::CellDiverged(format!("{stage}: {m}")),
        Error::PeriodMap(m) => Error::PeriodMap(format!("{stage}: {m}")),
        Error::UnderResolved(m) => Error::UnderResolved(format!("{stage}: {m}")),
        Error::Budget(m) => Error::Budget(format!("{stage}: {m}")),
        Error::StepFailed(m) => Error::StepFailed(format!("{stage}: {m}")),
        Error::LinearSolve(m) => Error::LinearSolve(format!("{stage}: {m}")),
        Error::PartialTable(m) => Error::PartialTable(format!("{stage}: {m}")),
        Error::Format(m) => Error::Format(format!("{stage}: {m}")),
        other => other,
    }
}

fn spread(values: impl Iterator<Item = f64>) -> Option<MonitorSpread> {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return None;
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(MonitorSpread { min, max, ratio: if min > 0.0 { max / min } else { f64::INFINITY } })
}

/// Build the coefficient set and run the sampled structural checks, failing
/// on the first violated assumption.
pub fn validate(cfg: &ScenarioConfig) -> Result<(CoefficientSet, ValidationReport)> {
    let set = coefficients::build(cfg)?;
    let report = coefficients::validate_scenario(cfg, &set);
    if let Some(fail) = report.first_failure() {
        let detail =
            if fail.detail.is_empty() { String::new() } else { format!(" - {}", fail.detail) };
        return Err(Error::Validation(format!(
            "check {:?} failed: worst violation {:.3e} exceeds tolerance {:.1e}{}",
            fail.name, fail.worst, fail.tol, detail
        )));
    }
    Ok((set, report))
}

/// Run the full pipeline for one scenario.
///
/// The macro problem is solved once; each epsilon of the ladder then runs a
/// DNS against it. When the scenario sets `assert_convergence`, a ladder of
/// length two or more must show strictly decreasing errors or the study
/// fails. A partial effective table is refused up front: homogenized fluxes
/// interpolated across failed entries would corrupt every comparison.
pub fn run_convergence_study(cfg: &ScenarioConfig, cache_dir: Option<&Path>) -> Result<StudyOutput> {
    let t_start = Instant::now();
    let mut timings = StageTimings::default();

    let t0 = Instant::now();
    let (set, validation) = validate(cfg).map_err(|e| in_stage("validate", e))?;
    timings.validate_ms = t0.elapsed().as_millis() as u64;

    let t0 = Instant::now();
    let law = effective::build(cfg, &set, cache_dir).map_err(|e| in_stage("effective", e))?;
    if let EffectiveLaw::Table(t) = &law {
        if t.is_partial() {
            return Err(Error::PartialTable(format!(
                "effective: {} lattice entries failed to converge; refine cell_y/cell_tau or shrink the table lattices, then rerun",
                t.failures.len()
            )));
        }
    }
    timings.effective_ms = t0.elapsed().as_millis() as u64;

    let t0 = Instant::now();
    let macro_solution =
        macroscale::solve(cfg, &set, &law).map_err(|e| in_stage("macro", e))?;
    timings.macro_ms = t0.elapsed().as_millis() as u64;

    let t0 = Instant::now();
    let dns: Vec<DnsOutput> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| dns::solve(cfg, &set, eps, Some(&macro_solution)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| in_stage("dns", e))?;
    timings.dns_ms = t0.elapsed().as_millis() as u64;

    let rows: Vec<EpsilonRow> = dns
        .iter()
        .map(|d| EpsilonRow {
            epsilon: d.plan.epsilon,
            nx: d.plan.nx[..cfg.dimension].to_vec(),
            nt: d.plan.nt,
            l2_qt_error: d.l2_qt_error.unwrap_or(f64::NAN),
            sup_l2rho2: d.sup_l2rho2,
            w1p_integral: d.w1p_integral,
            energy_residual: d.energy_residual,
            steps: d.stats.steps,
            newton_iters: d.stats.newton_iters,
            halvings: d.stats.halvings,
        })
        .collect();

    let errors_decreasing = if rows.len() >= 2 {
        Some(rows.windows(2).all(|w| w[1].l2_qt_error < w[0].l2_qt_error))
    } else {
        None
    };
    if cfg.assert_convergence && errors_decreasing == Some(false) {
        let errs: Vec<String> = rows.iter().map(|r| format!("{:.6e}", r.l2_qt_error)).collect();
        return Err(Error::Validation(format!(
            "compare: L2(Q_T) errors do not decrease along the ladder: [{}]",
            errs.join(", ")
        )));
    }

    timings.total_ms = t_start.elapsed().as_millis() as u64;
    let report = ConvergenceReport {
        schema: REPORT_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: cfg.id.clone(),
        config_sha256: cfg.sha256.clone(),
        seed: cfg.seed,
        dimension: cfg.dimension,
        p: cfg.p,
        k: cfg.k,
        regime: regime_name(set.regime).to_string(),
        t_final: cfg.t_final,
        rho_bar: macro_solution.rho_bar,
        effective_digest: law.digest(),
        macro_steps: macro_solution.stats.steps,
        macro_newton_iters: macro_solution.stats.newton_iters,
        macro_halvings: macro_solution.stats.halvings,
        sup_spread: spread(rows.iter().map(|r| r.sup_l2rho2)),
        w1p_spread: spread(rows.iter().map(|r| r.w1p_integral)),
        errors_decreasing,
        asserted: cfg.assert_convergence,
        rows,
        timings,
    };

    Ok(StudyOutput { validation, macro_solution, dns, report })
}

/// Format an epsilon as `1/n` when it is a unit fraction.
pub fn epsilon_label(eps: f64) -> String {
    let inv = 1.0 / eps;
    if (inv - inv.round()).abs() <= 1e-9 * inv {
        format!("1/{}", inv.round() as u64)
    } else {
        format!("{eps}")
    }
}

impl ConvergenceReport {
    /// Canonical JSON artifact, byte-identical across reruns.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let r: ConvergenceReport =
            serde_json::from_str(src).map_err(|e| Error::Format(format!("report parse: {e}")))?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Format(format!(
                "report schema {} unsupported (tool speaks {REPORT_SCHEMA})",
                r.schema
            )));
        }
        Ok(r)
    }

    /// Human-readable rendering; timings appear only when they were measured.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "convergence report (schema {}, tool {})",
            self.schema, self.tool_version
        );
        let _ = writeln!(
            out,
            "scenario {}  regime {} (k = {})  dimension {}  p = {}  T = {}",
            self.scenario, self.regime, self.k, self.dimension, self.p, self.t_final
        );
        let _ = writeln!(out, "config sha256 {}  seed {}", self.config_sha256, self.seed);
        let _ = writeln!(out, "rho_bar {:.12}", self.rho_bar);
        let _ = writeln!(out, "effective {}", self.effective_digest);
        let _ = writeln!(
            out,
            "macro {} steps, {} newton iterations, {} halvings",
            self.macro_steps, self.macro_newton_iters, self.macro_halvings
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "  {:<8} {:<12} {:>6} {:>14} {:>12} {:>14} {:>14} {:>9}",
            "epsilon", "grid", "steps", "L2(QT) error", "energy res", "sup|u|^2_rho", "int W1p^p", "halvings"
        );
        for r in &self.rows {
            let grid = r
                .nx
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join("x");
            let _ = writeln!(
                out,
                "  {:<8} {:<12} {:>6} {:>14.6e} {:>12.4e} {:>14.6e} {:>14.6e} {:>9}",
                epsilon_label(r.epsilon),
                format!("{}x{}t", grid, r.nt),
                r.steps,
                r.l2_qt_error,
                r.energy_residual,
                r.sup_l2rho2,
                r.w1p_integral,
                r.halvings
            );
        }
        let _ = writeln!(out);
        if let (Some(s), Some(w)) = (&self.sup_spread, &self.w1p_spread) {
            let _ = writeln!(
                out,
                "monitor spread across the ladder: sup {:.3}x, W1p {:.3}x",
                s.ratio, w.ratio
            );
        }
        match self.errors_decreasing {
            Some(true) => {
                let _ = writeln!(
                    out,
                    "convergence: PASS, errors strictly decreasing over {} epsilons{}",
                    self.rows.len(),
                    if self.asserted { " (asserted)" } else { "" }
                );
            }
            Some(false) => {
                let _ = writeln!(out, "convergence: FAIL, errors do not decrease");
            }
            None => {
                let _ = writeln!(out, "convergence: single epsilon, nothing to compare");
            }
        }
        let t = &self.timings;
        if t.total_ms > 0 {
            let _ = writeln!(
                out,
                "timings: validate {} ms, effective {} ms, macro {} ms, dns {} ms, total {} ms",
                t.validate_ms, t.effective_ms, t.macro_ms, t.dns_ms, t.total_ms
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study_cfg(extra: &str) -> ScenarioConfig {
        ScenarioConfig::parse(&format!(
            "id = \"study\"\ndimension = 1\nk = 2.0\nT = 0.02\nepsilons = [\"1/8\", \"1/16\"]\n[flux]\nid = \"cos1d\"\n[density]\nid = \"cos\"\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 64\nmacro_x = 64\nmacro_t = 40\ndns_x = 64\ndns_t = 40\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn linear_study_produces_decreasing_errors_and_full_rows() {
        let cfg = study_cfg("");
        let out = run_convergence_study(&cfg, None).unwrap();
        let rep = &out.report;
        assert_eq!(rep.rows.len(), cfg.epsilons.len());
        assert_eq!(rep.errors_decreasing, Some(true));
        assert_eq!(rep.regime, "critical");
        assert!(rep.rows.iter().all(|r| r.l2_qt_error.is_finite()));
        assert!(rep.sup_spread.unwrap().ratio < 2.0);
        assert!(rep.w1p_spread.unwrap().ratio < 2.0);
        assert!(rep.effective_digest.contains("bhat"));
    }

    #[test]
    fn report_json_round_trips_and_is_deterministic() {
        let cfg = study_cfg("");
        let a = run_convergence_study(&cfg, None).unwrap().report;
        let b = run_convergence_study(&cfg, None).unwrap().report;
        assert_eq!(a.to_json(), b.to_json(), "canonical artifact must be byte-identical");
        let back = ConvergenceReport::from_json(&a.to_json()).unwrap();
        assert_eq!(back.rows.len(), a.rows.len());
        assert_eq!(back.config_sha256, a.config_sha256);
        assert!(!a.to_json().contains("_ms"), "wall-clock must stay out of the artifact");
    }

    #[test]
    fn single_epsilon_ladder_skips_the_monotonicity_verdict() {
        let cfg = ScenarioConfig::parse(
            "id = \"single\"\ndimension = 1\nT = 0.02\nepsilons = [\"1/8\"]\nassert_convergence = true\n[flux]\nid = \"cos1d\"\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 64\nmacro_x = 64\nmacro_t = 20\ndns_x = 64\ndns_t = 20\n",
        )
        .unwrap();
        let out = run_convergence_study(&cfg, None).unwrap();
        assert_eq!(out.report.errors_decreasing, None);
        assert!(out.report.render_text().contains("single epsilon"));
    }

    #[test]
    fn failed_validation_aborts_with_the_stage_name() {
        let cfg = ScenarioConfig::parse(
            "id = \"bad\"\ndimension = 1\nT = 0.02\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"bad_center\"\n",
        )
        .unwrap();
        let err = run_convergence_study(&cfg, None).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        let msg = err.to_string();
        assert!(msg.contains("validate:"), "{msg}");
        assert!(msg.contains("Fredholm"), "{msg}");
    }

    #[test]
    fn a_partial_table_is_refused_with_a_remediation_hint() {
        // An unreachable cell tolerance makes every nonlinear lattice entry
        // fail, so the study must refuse the partial table instead of
        // interpolating around the holes.
        let cfg = ScenarioConfig::parse(
            "id = \"partial\"\ndimension = 1\np = 4.0\nk = 1.0\nT = 0.01\nepsilons = [\"1/4\"]\n[flux]\nid = \"plap\"\namp = 0.5\n[initial]\nid = \"sinpi\"\n[grids]\ncell_y = 16\nmacro_x = 16\nmacro_t = 8\ndns_x = 16\ndns_t = 8\n[tables]\nr = [0.0, 1.0, 2]\nxi = [-1.0, 1.0, 2]\n[tol]\ncell = 1e-300\n",
        )
        .unwrap();
        let err = run_convergence_study(&cfg, None).unwrap_err();
        match err {
            Error::PartialTable(msg) => {
                assert!(msg.starts_with("effective:"), "{msg}");
                assert!(msg.contains("refine"), "{msg}");
            }
            other => panic!("expected a partial-table refusal, got {other}"),
        }
    }

    #[test]
    fn epsilon_labels_render_unit_fractions() {
        assert_eq!(epsilon_label(0.125), "1/8");
        assert_eq!(epsilon_label(1.0 / 32.0), "1/32");
    }
}
