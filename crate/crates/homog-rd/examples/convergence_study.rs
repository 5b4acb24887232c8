//! Run the full pipeline on a shipped scenario: validate, build the
//! effective law, solve the macro problem, resolve every epsilon of the
//! ladder directly, and render the convergence report.
//!
//! This is the library form of `homog-rd verify`. The printed table is the
//! quantitative content of the homogenization statement: the L^2(Q_T)
//! distance between each direct solution and the homogenized trajectory
//! falls as eps does, while the a priori monitors stay within a fixed band,
//! exactly the uniform bounds the compactness argument needs. The report
//! struct also serializes to the canonical `report.json` artifact, byte
//! deterministic for a fixed scenario.
//!
//! Pass another scenario path to study it instead; `plap_1d.cfg` exercises
//! the nonlinear table route.

use homog_rd::config::ScenarioConfig;
use homog_rd::error::Result;
use homog_rd::report::run_convergence_study;

fn main() -> Result<()> {
    let default = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/linear_1d.cfg");
    let path = std::env::args().nth(1).unwrap_or_else(|| default.to_string());

    let cfg = ScenarioConfig::load(&path)?;
    let study = run_convergence_study(&cfg, None)?;
    print!("{}", study.report.render_text());

    let json = study.report.to_json();
    println!("canonical artifact: {} bytes of report.json", json.len());
    Ok(())
}
