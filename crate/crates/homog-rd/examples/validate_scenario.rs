//! Validate the structural assumptions A1 to A5 of a scenario file.
//!
//! The validator samples the coefficient closures at seeded quasi-random
//! points and fits the monotonicity, growth, Lipschitz, periodicity, and
//! centering constants the homogenization theory needs. Run it on the
//! shipped linear scenario (the default), or point it at any other file:
//!
//! ```text
//! cargo run --example validate_scenario -- crates/homog-rd/scenarios/plap_1d.cfg
//! ```
//!
//! The counterexample `bad_centering.cfg` shows a failure: its reaction has
//! a nonvanishing cell mean, so no corrector can exist and the run reports
//! the violated Fredholm condition instead of a pass.

use homog_rd::coefficients::{build, validate_scenario};
use homog_rd::config::ScenarioConfig;
use homog_rd::error::Result;

fn main() -> Result<()> {
    let default = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/linear_1d.cfg");
    let path = std::env::args().nth(1).unwrap_or_else(|| default.to_string());

    let cfg = ScenarioConfig::load(&path)?;
    let set = build(&cfg)?;
    let report = validate_scenario(&cfg, &set);
    print!("{}", report.render());

    match report.first_failure() {
        None => {
            println!("scenario {:?} satisfies A1 to A5", cfg.id);
            Ok(())
        }
        Some(fail) => {
            println!("scenario {:?} violates check {:?}: {}", cfg.id, fail.name, fail.detail);
            std::process::exit(2);
        }
    }
}
