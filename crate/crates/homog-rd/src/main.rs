//! Thin command-line front end over the library pipeline.
//!
//! Exit codes: 0 on success, 1 on usage or config errors (unusable input),
//! 2 when a well-formed scenario fails a check (validation, Fredholm,
//! partial table, budget, solver divergence).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use homog_rd::cell::{cell_solve, CellInput, CellParams};
use homog_rd::coefficients::{self, CoeffArgs};
use homog_rd::config::ScenarioConfig;
use homog_rd::dns;
use homog_rd::effective::{self, cache_dir_from_env, EffectiveLaw};
use homog_rd::error::{Error, Result};
use homog_rd::macroscale::{self, MacroSolution};
use homog_rd::report::{epsilon_label, run_convergence_study, ConvergenceReport};
use homog_rd::torus::{write_field_csv, TorusGrid};

#[derive(Parser)]
#[command(
    name = "homog-rd",
    version,
    about = "Periodic homogenization toolkit: correctors, effective laws, macro solves, DNS ladders"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifacts (created if missing)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario's sampling seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores; results never depend on this)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the structural assumptions A1-A5 by seeded sampling
    Validate(Common),
    /// Solve the potential pair (R, G) of the reaction on the cell grid
    Potential(Common),
    /// Solve one corrector cell problem at a frozen macro state
    Cell {
        #[command(flatten)]
        common: Common,
        /// Frozen gradient, comma-separated per axis (e.g. "1.0" or "1.0,0.5")
        #[arg(long, default_value = "1.0")]
        xi: String,
        /// Frozen solution value
        #[arg(long, default_value_t = 0.0)]
        r: f64,
    },
    /// Build and inspect the effective law (table or linear assembly)
    Effective(Common),
    /// Solve the homogenized macro problem and write trajectory snapshots
    Macro {
        #[command(flatten)]
        common: Common,
        /// Keep every n-th frame in the snapshot CSV
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Run the uniqueness probe at this perturbation size
        #[arg(long)]
        probe: Option<f64>,
    },
    /// Direct numerical simulation at one epsilon of the ladder
    Dns {
        #[command(flatten)]
        common: Common,
        /// Override the ladder (accepts "1/32" or a decimal)
        #[arg(long)]
        epsilon: Option<String>,
    },
    /// Full pipeline: validate, effective, macro, DNS ladder, report
    Verify(Common),
    /// Re-render a stored report.json as text
    Report {
        /// Directory holding report.json
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Validate(c) => with_pool(&c, cmd_validate),
        Cmd::Potential(c) => with_pool(&c, cmd_potential),
        Cmd::Cell { common, xi, r } => {
            let xi = parse_xi(&xi)?;
            with_pool(&common, |c| cmd_cell(c, xi, r))
        }
        Cmd::Effective(c) => with_pool(&c, cmd_effective),
        Cmd::Macro { common, stride, probe } => {
            with_pool(&common, |c| cmd_macro(c, stride.max(1), probe))
        }
        Cmd::Dns { common, epsilon } => {
            let eps = epsilon.map(|s| parse_epsilon(&s)).transpose()?;
            with_pool(&common, |c| cmd_dns(c, eps))
        }
        Cmd::Verify(c) => with_pool(&c, cmd_verify),
        Cmd::Report { out } => cmd_report(&out),
    }
}

/// Load the scenario, apply the seed override, and run `f` inside a rayon
/// pool of the requested width.
fn with_pool(common: &Common, f: impl FnOnce(Ctx) -> Result<()> + Send) -> Result<()> {
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&common.out)?;
    let ctx = Ctx { cfg, out: common.out.clone() };
    match common.threads {
        None => f(ctx),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(move || f(ctx)),
    }
}

struct Ctx {
    cfg: ScenarioConfig,
    out: PathBuf,
}

fn parse_epsilon(s: &str) -> Result<f64> {
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad_epsilon(s))?;
            let den: f64 = den.trim().parse().map_err(|_| bad_epsilon(s))?;
            num / den
        }
        None => s.trim().parse().map_err(|_| bad_epsilon(s))?,
    };
    if !(v > 0.0 && v <= 1.0) {
        return Err(bad_epsilon(s));
    }
    Ok(v)
}

fn bad_epsilon(s: &str) -> Error {
    Error::Config(format!("epsilon {s:?} must be a fraction like 1/32 or a decimal in (0, 1]"))
}

fn parse_xi(s: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.is_empty() || parts.len() > 2 {
        return Err(Error::Config(format!("xi {s:?} must have one or two components")));
    }
    let mut xi = [0.0; 2];
    for (i, part) in parts.iter().enumerate() {
        xi[i] = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("xi component {part:?} is not a number")))?;
    }
    Ok(xi)
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_validate(ctx: Ctx) -> Result<()> {
    let set = coefficients::build(&ctx.cfg)?;
    let report = coefficients::validate_scenario(&ctx.cfg, &set);
    print!("{}", report.render());
    write_text(
        &ctx.out.join("validation.json"),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&report).expect("validation serialization")
        ),
    )?;
    if let Some(fail) = report.first_failure() {
        let detail =
            if fail.detail.is_empty() { String::new() } else { format!(" - {}", fail.detail) };
        return Err(Error::Validation(format!(
            "check {:?} failed: worst violation {:.3e} exceeds tolerance {:.1e}{}",
            fail.name, fail.worst, fail.tol, detail
        )));
    }
    println!("all checks passed");
    Ok(())
}

fn cmd_potential(ctx: Ctx) -> Result<()> {
    let set = coefficients::build(&ctx.cfg)?;
    let grid = TorusGrid::new(set.dimension, ctx.cfg.grids.cell_y, ctx.cfg.grids.cell_tau)?;
    let (r_lat, _) = effective::default_lattices(&ctx.cfg, &set);
    let r_samples = r_lat.points();
    let reaction = set.reaction.clone();
    let pair = homog_rd::torus::build_potential(
        grid,
        move |y, tau, r| reaction.g(&CoeffArgs::at_cell(y, tau), r),
        &r_samples,
    )?;
    println!(
        "potential pair on {} cell grid, {} r samples",
        ctx.cfg.grids.cell_y, pair.r_samples.len()
    );
    println!(
        "fitted |G| <= {:.6e} |r|, Lipschitz constant {:.6e}",
        pair.fitted_bound, pair.fitted_lipschitz
    );
    for (i, r) in pair.r_samples.iter().enumerate() {
        let path = ctx.out.join(format!("potential_r{i}.csv"));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        write_field_csv(&pair.scalar[i], &mut w)?;
        w.flush()?;
        println!("  r = {r:<8} R field -> {}", path.display());
    }
    Ok(())
}

fn cmd_cell(ctx: Ctx, xi: [f64; 2], r: f64) -> Result<()> {
    let set = coefficients::build(&ctx.cfg)?;
    let grid = TorusGrid::new(set.dimension, ctx.cfg.grids.cell_y, ctx.cfg.grids.cell_tau)?;
    let params = CellParams { x: [0.0; 2], t: 0.0, r, xi };
    let input = CellInput::new(&set, grid, params, ctx.cfg.tol);
    let sol = cell_solve(&input)?;
    let q = effective::effective_flux_q(&sol);
    let q0 = effective::effective_reaction_q0(&input, &sol);
    println!("cell solve at r = {r}, xi = [{}, {}] via {}", xi[0], xi[1], sol.fast_path);
    println!(
        "residual {:.3e} ({} newton, {} picard, {} cg iterations)",
        sol.residual, sol.newton_iters, sol.picard_iters, sol.cg_iters
    );
    if set.dimension == 1 {
        println!("q = {:.12}  q0 = {:.12}", q[0], q0);
    } else {
        println!("q = [{:.12}, {:.12}]  q0 = {:.12}", q[0], q[1], q0);
    }
    let path = ctx.out.join("pi.csv");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    write_field_csv(&sol.pi, &mut w)?;
    w.flush()?;
    println!("corrector field -> {}", path.display());
    Ok(())
}

fn cmd_effective(ctx: Ctx) -> Result<()> {
    let set = coefficients::build(&ctx.cfg)?;
    let cache = cache_dir_from_env();
    let law = effective::build(&ctx.cfg, &set, cache.as_deref())?;
    println!("effective {}", law.digest());
    if let EffectiveLaw::Table(t) = &law {
        if t.is_partial() {
            for line in t.failures.iter().take(8) {
                println!("  failed entry: {line}");
            }
            return Err(Error::PartialTable(format!(
                "{} lattice entries failed; refine cell_y/cell_tau or shrink the table lattices",
                t.failures.len()
            )));
        }
    }
    if let Some(dir) = cache {
        println!("cache dir {}", dir.display());
    }
    Ok(())
}

fn write_macro_csv(path: &Path, sol: &MacroSolution, stride: usize) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if sol.dim == 1 {
        writeln!(w, "t,x,u")?;
    } else {
        writeln!(w, "t,x1,x2,u")?;
    }
    let dt = sol.t_final / sol.nt as f64;
    for fi in (0..sol.frames.len()).filter(|i| i % stride == 0 || *i == sol.frames.len() - 1) {
        let t = fi as f64 * dt;
        let frame = &sol.frames[fi];
        let m = sol.nx + 1;
        for (i, u) in frame.iter().enumerate() {
            if sol.dim == 1 {
                let x = sol.domain[0][0]
                    + (sol.domain[0][1] - sol.domain[0][0]) * i as f64 / sol.nx as f64;
                writeln!(w, "{t},{x},{u}")?;
            } else {
                let (ix, iy) = (i % m, i / m);
                let x1 = sol.domain[0][0]
                    + (sol.domain[0][1] - sol.domain[0][0]) * ix as f64 / sol.nx as f64;
                let x2 = sol.domain[1][0]
                    + (sol.domain[1][1] - sol.domain[1][0]) * iy as f64 / sol.nx as f64;
                writeln!(w, "{t},{x1},{x2},{u}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_macro(ctx: Ctx, stride: usize, probe: Option<f64>) -> Result<()> {
    let set = coefficients::build(&ctx.cfg)?;
    let law = effective::build(&ctx.cfg, &set, cache_dir_from_env().as_deref())?;
    let sol = macroscale::solve(&ctx.cfg, &set, &law)?;
    println!(
        "macro solve: {} frames on {} cells, rho_bar {:.12}",
        sol.frames.len(),
        sol.nx,
        sol.rho_bar
    );
    println!(
        "stats: {} steps, {} newton iterations, {} halvings, sup |u| = {:.6e}",
        sol.stats.steps,
        sol.stats.newton_iters,
        sol.stats.halvings,
        sol.sup_abs()
    );
    let path = ctx.out.join("macro.csv");
    write_macro_csv(&path, &sol, stride)?;
    println!("snapshots (stride {stride}) -> {}", path.display());
    if let Some(eta) = probe {
        let probe = macroscale::uniqueness_probe(&ctx.cfg, &set, &law, eta)?;
        println!(
            "uniqueness probe: eta {:.3e}, trajectory divergence {:.6e}, ratio {:.6e} (informational)",
            probe.eta, probe.divergence, probe.ratio
        );
    }
    Ok(())
}

fn cmd_dns(ctx: Ctx, eps: Option<f64>) -> Result<()> {
    let set = coefficients::build(&ctx.cfg)?;
    let eps = match eps {
        Some(e) => e,
        None => *ctx
            .cfg
            .epsilons
            .first()
            .ok_or_else(|| Error::Config("scenario has an empty epsilon ladder".into()))?,
    };
    let plan = dns::plan(&ctx.cfg, &set, eps)?;
    println!(
        "dns plan for epsilon {}: {} cells per axis ({} per period), {} steps",
        epsilon_label(eps),
        plan.nx[..set.dimension].iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x"),
        plan.cells_per_period.map_or("n/a".to_string(), |s| s.to_string()),
        plan.nt
    );
    let out = dns::solve(&ctx.cfg, &set, eps, None)?;
    println!(
        "monitors: sup |u|^2_rho {:.6e}, int W1p^p {:.6e}, energy residual {:.3e}",
        out.sup_l2rho2, out.w1p_integral, out.energy_residual
    );
    println!(
        "stats: {} steps, {} newton iterations, {} halvings",
        out.stats.steps, out.stats.newton_iters, out.stats.halvings
    );

    let final_path = ctx.out.join("dns_final.csv");
    let mut w = BufWriter::new(fs::File::create(&final_path)?);
    if set.dimension == 1 {
        writeln!(w, "x,u")?;
        for (i, u) in out.final_frame.iter().enumerate() {
            let x = ctx.cfg.domain[0][0] + i as f64 * plan.h[0];
            writeln!(w, "{x},{u}")?;
        }
    } else {
        writeln!(w, "x1,x2,u")?;
        let m = plan.nx[0] + 1;
        for (i, u) in out.final_frame.iter().enumerate() {
            let x1 = ctx.cfg.domain[0][0] + (i % m) as f64 * plan.h[0];
            let x2 = ctx.cfg.domain[1][0] + (i / m) as f64 * plan.h[1];
            writeln!(w, "{x1},{x2},{u}")?;
        }
    }
    w.flush()?;
    println!("final frame -> {}", final_path.display());

    let mon_path = ctx.out.join("dns_monitors.csv");
    let mut w = BufWriter::new(fs::File::create(&mon_path)?);
    writeln!(w, "t,l2rho2,w1p")?;
    for row in &out.series {
        writeln!(w, "{},{},{}", row[0], row[1], row[2])?;
    }
    w.flush()?;
    println!("monitor series -> {}", mon_path.display());
    Ok(())
}

fn cmd_verify(ctx: Ctx) -> Result<()> {
    let study = run_convergence_study(&ctx.cfg, cache_dir_from_env().as_deref())?;
    let text = study.report.render_text();
    print!("{text}");
    fs::write(ctx.out.join("report.json"), study.report.to_json())?;
    fs::write(ctx.out.join("report.txt"), &text)?;
    println!("report -> {} and report.txt", ctx.out.join("report.json").display());
    Ok(())
}

fn cmd_report(out: &Path) -> Result<()> {
    let path = out.join("report.json");
    let src = fs::read_to_string(&path)?;
    let report = ConvergenceReport::from_json(&src)?;
    print!("{}", report.render_text());
    Ok(())
}
