//! Resolve one epsilon of the ladder directly and inspect the resolution
//! plan, the a priori monitors, and the discrete energy identity.
//!
//! The direct solver refuses grids that cannot represent the oscillation:
//! the mesh must be commensurate with the eps-periodic coefficients and
//! fine enough per period, and in the critical regime the step size must
//! track the eps^2 time scale. The plan printed below shows what those
//! rules chose for eps = 1/8. The monitors are the two quantities the
//! compactness argument bounds uniformly in eps, and the energy residual is
//! the defect of the discrete energy identity, which contracts only with
//! the discretization, not with eps.

use homog_rd::coefficients::build;
use homog_rd::config::ScenarioConfig;
use homog_rd::dns;
use homog_rd::error::Result;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/linear_1d.cfg");
    let cfg = ScenarioConfig::load(path)?;
    let set = build(&cfg)?;

    let eps = 0.125;
    let plan = dns::plan(&cfg, &set, eps)?;
    println!("resolution plan for eps = 1/8:");
    println!(
        "  {} cells ({} periods x {} cells per period), {} time steps, dt = {:.2e}",
        plan.nx[0],
        plan.periods[0],
        plan.cells_per_period.expect("oscillating scenario"),
        plan.nt,
        plan.dt
    );

    let out = dns::solve(&cfg, &set, eps, None)?;
    println!("monitors over [0, T]:");
    println!("  sup_t |u|^2 in L^2_rho = {:.8}", out.sup_l2rho2);
    println!("  int |u|_W1p^p dt       = {:.8}", out.w1p_integral);
    println!("  energy identity defect = {:.3e}", out.energy_residual);
    println!(
        "  {} steps, {} newton iterations, {} halvings",
        out.stats.steps, out.stats.newton_iters, out.stats.halvings
    );

    // the same scenario on a grid that cannot hold one period per cell
    let mut starved = cfg.clone();
    starved.budget.dns_max_nodes = 100;
    match dns::plan(&starved, &set, eps) {
        Err(e) => println!("starved budget refused as expected: {e}"),
        Ok(_) => unreachable!("a 100 node budget cannot resolve 8 periods"),
    }
    Ok(())
}
