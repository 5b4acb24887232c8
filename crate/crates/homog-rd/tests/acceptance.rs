//! Acceptance suite: the ten primary criteria, one test per criterion.
//!
//! Every test prints exactly one `PASS criterion N: ...` or `FAIL criterion
//! N: ...` line carrying the asserted tolerance and the measured runtime,
//! then asserts. Criteria 6 and 7 share one ladder study; everything else
//! is self-contained. Runtime budgets are asserted against the wall clock
//! of the suite process (tests compile at opt-level 2).

use std::f64::consts::PI;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homog_rd::cell::{
    cell_solve, orbit_pairing_defect, solve_elliptic, solve_parabolic, CellInput, CellParams,
};
use homog_rd::coefficients::{self, CoefficientSet};
use homog_rd::config::ScenarioConfig;
use homog_rd::dns;
use homog_rd::effective::{
    assemble_linear, effective_flux_q, effective_point, tabulate, EffectiveLaw,
};
use homog_rd::report::{run_convergence_study, StudyOutput};
use homog_rd::torus::{project_weighted, weighted_mean, Field, TorusGrid};

/// Tests in this binary serialize on one lock so every runtime budget is
/// measured without contention from concurrently running criteria.
fn budget_lock() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// The harness redirects the `print!` macro family; writing the verdict
/// straight to the process stdout keeps one visible line per criterion in
/// default runs, not only under `--nocapture`.
fn check(ok: bool, line: &str) {
    use std::io::Write;
    let shown = format!("{} {line}", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(format!("{shown}\n").as_bytes());
    assert!(ok, "{shown}");
}

fn scenario_path(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn setup(src: &str) -> (ScenarioConfig, CoefficientSet) {
    let cfg = ScenarioConfig::parse(src).unwrap();
    let set = coefficients::build(&cfg).unwrap();
    (cfg, set)
}

/// Criteria 6 and 7 share this study of the shipped linear scenario; the
/// second element is the wall-clock seconds the study itself took, recorded
/// at initialization so the reported runtime does not depend on which
/// criterion reached it first.
fn linear_study() -> &'static (StudyOutput, f64) {
    static STUDY: OnceLock<(StudyOutput, f64)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let t0 = Instant::now();
        let cfg = ScenarioConfig::load(scenario_path("linear_1d.cfg")).unwrap();
        let out = run_convergence_study(&cfg, None).unwrap();
        (out, t0.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_01_harmonic_mean_recovery() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    let (cfg, set) = setup(
        "id = \"c1\"\ndimension = 1\n[flux]\nid = \"cos1d\"\n[grids]\ncell_y = 256\n[tables]\nr = [0.0, 0.0, 1]\n",
    );
    let law = homog_rd::effective::build(&cfg, &set, None).unwrap();
    let bhat = match &law {
        EffectiveLaw::Linear(l) => l.bhat[0][0],
        _ => unreachable!("cos1d is linear"),
    };
    let err = (bhat - 3.0f64.sqrt()).abs();
    let dt = t0.elapsed();
    check(
        err <= 1e-6 && dt.as_secs_f64() < 1.0,
        &format!(
            "criterion 1: harmonic mean bhat = {bhat:.10} vs sqrt(3), error {err:.2e} (tol 1e-6, cell res 256, {:.2} s < 1 s)",
            dt.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_effective_reaction_oracle() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    let (cfg, set) = setup(
        "id = \"c2\"\ndimension = 1\nk = 1.0\n[flux]\nid = \"const\"\n[reaction]\nid = \"rsin\"\n[grids]\ncell_y = 128\n",
    );
    let grid = TorusGrid::new(1, cfg.grids.cell_y, cfg.grids.cell_tau).unwrap();
    let mut worst = 0.0f64;
    for r in [1.0, -0.7, 0.3] {
        let params = CellParams { r, xi: [0.0; 2], ..Default::default() };
        let input = CellInput::new(&set, grid, params, cfg.tol);
        let (_, q0, _) = effective_point(&input).unwrap();
        worst = worst.max((q0 - r / (8.0 * PI * PI)).abs());
    }
    let dt = t0.elapsed();
    check(
        worst <= 1e-8 && dt.as_secs_f64() < 1.0,
        &format!(
            "criterion 2: q0(r) = r/(8 pi^2) for k < 2, worst error {worst:.2e} (tol 1e-8, res 128, {:.2} s < 1 s)",
            dt.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_linear_nonlinear_pipeline_agreement() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    let (cfg, set) = setup(
        "id = \"c3\"\ndimension = 1\nk = 2.0\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[grids]\ncell_y = 64\ncell_tau = 16\n",
    );
    let grid = TorusGrid::new(1, cfg.grids.cell_y, cfg.grids.cell_tau).unwrap();
    let input = CellInput::new(&set, grid, CellParams::default(), cfg.tol);
    let r_probes: Vec<f64> = (0..5).map(|i| -1.0 + 0.5 * i as f64).collect();
    let xi_probes: Vec<f64> = (0..5).map(|i| -2.0 + i as f64).collect();
    let table = tabulate(&input, &r_probes, &xi_probes).unwrap();
    let linear = assemble_linear(&input, &r_probes).unwrap();
    let mut worst = 0.0f64;
    for &r in &r_probes {
        for &xi in &xi_probes {
            let (q_tab, _) = table.query(r, [xi, 0.0]).unwrap();
            let q_lin = linear.q(r, [xi, 0.0]);
            worst = worst.max((q_tab[0] - q_lin[0]).abs());
        }
    }
    let dt = t0.elapsed();
    check(
        worst <= 1e-8 && dt.as_secs_f64() < 10.0,
        &format!(
            "criterion 3: tabulated q vs bhat xi + F1(r) on 5x5 probes, worst gap {worst:.2e} (tol 1e-8, {:.2} s < 10 s)",
            dt.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_04_critical_parabolic_matches_elliptic() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    let (cfg, set) = setup(
        "id = \"c4\"\ndimension = 1\nk = 2.0\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[density]\nid = \"cos\"\namp = 0.5\n[grids]\ncell_y = 64\ncell_tau = 16\n",
    );
    let grid = TorusGrid::new(1, cfg.grids.cell_y, cfg.grids.cell_tau).unwrap();
    let params = CellParams { r: 1.0, xi: [1.0, 0.0], ..Default::default() };
    let input = CellInput::new(&set, grid, params, cfg.tol);
    let par = solve_parabolic(&input).unwrap();
    let ell = solve_elliptic(&input, 0.0).unwrap();
    let mut field_gap = 0.0f64;
    for it in 0..par.grid.m {
        for (a, b) in par.pi.slice_tau(it).iter().zip(ell.pi.slice_tau(0)) {
            field_gap = field_gap.max((a - b).abs());
        }
    }
    let q_gap = (effective_flux_q(&par)[0] - effective_flux_q(&ell)[0]).abs();
    let defect = orbit_pairing_defect(&set, &par);
    let dt = t0.elapsed();
    check(
        field_gap <= 1e-8 && q_gap <= 1e-8 && defect <= 1e-9 && dt.as_secs_f64() < 5.0,
        &format!(
            "criterion 4: k=2 parabolic vs elliptic gap {field_gap:.2e} (q gap {q_gap:.2e}, tol 1e-8), pairing defect {defect:.2e} (tol 1e-9) ({:.2} s < 5 s)",
            dt.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_05_super_regime_tau_averaging() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    // tau-modulated weight with unit-mean modulation: the tau average is
    // the plain cos1d law, solved here through two different code paths.
    let (cfg_m, set_m) = setup(
        "id = \"c5m\"\ndimension = 1\nk = 3.0\n[flux]\nid = \"cos1d\"\ntmod = 0.5\n[reaction]\nid = \"rsin\"\n[grids]\ncell_y = 64\ncell_tau = 64\n",
    );
    let (cfg_p, set_p) = setup(
        "id = \"c5p\"\ndimension = 1\nk = 3.0\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[grids]\ncell_y = 64\n",
    );
    let params = CellParams { r: 0.5, xi: [1.0, 0.0], ..Default::default() };
    let grid_m = TorusGrid::new(1, cfg_m.grids.cell_y, cfg_m.grids.cell_tau).unwrap();
    let grid_p = TorusGrid::new(1, cfg_p.grids.cell_y, cfg_p.grids.cell_tau).unwrap();
    let sup = cell_solve(&CellInput::new(&set_m, grid_m, params, cfg_m.tol)).unwrap();
    let avg = solve_elliptic(&CellInput::new(&set_p, grid_p, params, cfg_p.tol), 0.0).unwrap();
    let tau_slices = sup.pi.grid.m;
    let mut field_gap = 0.0f64;
    for (a, b) in sup.pi.slice_tau(0).iter().zip(avg.pi.slice_tau(0)) {
        field_gap = field_gap.max((a - b).abs());
    }
    let q_gap = (effective_flux_q(&sup)[0] - effective_flux_q(&avg)[0]).abs();
    let dt = t0.elapsed();
    check(
        tau_slices == 1 && field_gap <= 1e-8 && q_gap <= 1e-8 && dt.as_secs_f64() < 5.0,
        &format!(
            "criterion 5: k>2 corrector has {tau_slices} tau slice (variance 0), gap to analytically averaged law {field_gap:.2e} (q gap {q_gap:.2e}, tol 1e-8) ({:.2} s < 5 s)",
            dt.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_06_theorem_5_3_ladder() {
    let _guard = budget_lock();
    let (study, secs) = linear_study();
    let errors: Vec<f64> = study.report.rows.iter().map(|r| r.l2_qt_error).collect();
    let decreasing = study.report.errors_decreasing == Some(true);
    let rendered: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    check(
        decreasing && errors.len() == 3 && *secs < 300.0,
        &format!(
            "criterion 6: |u_eps - u0| in L2(Q_T) strictly decreasing over {{1/8, 1/16, 1/32}}: [{}] ({secs:.1} s < 300 s)",
            rendered.join(", ")
        ),
    );
}

#[test]
fn criterion_07_uniform_bound_monitors() {
    let _guard = budget_lock();
    let (study, _) = linear_study();
    let rows = &study.report.rows;
    let mut worst_ratio = 1.0f64;
    for row in &rows[1..] {
        for (v, base) in [
            (row.sup_l2rho2, rows[0].sup_l2rho2),
            (row.w1p_integral, rows[0].w1p_integral),
        ] {
            worst_ratio = worst_ratio.max((v / base).max(base / v));
        }
    }
    check(
        worst_ratio < 2.0,
        &format!(
            "criterion 7: sup_t |u|^2 and int |u|_W1p^p within {worst_ratio:.3}x of their eps = 1/8 values (tol 2x, within criterion 6's runs)"
        ),
    );
}

#[test]
fn criterion_08_energy_identity_contraction() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    let cfg = ScenarioConfig::load(scenario_path("heat_oracle.cfg")).unwrap();
    let set = coefficients::build(&cfg).unwrap();
    let mut cfg_fine = cfg.clone();
    cfg_fine.grids.dns_x *= 2;
    cfg_fine.grids.dns_t *= 2;
    let coarse = dns::solve(&cfg, &set, 0.125, None).unwrap();
    let fine = dns::solve(&cfg_fine, &set, 0.125, None).unwrap();
    let ratio = coarse.energy_residual / fine.energy_residual;
    let dt = t0.elapsed();
    check(
        ratio >= 1.8 && dt.as_secs_f64() < 30.0,
        &format!(
            "criterion 8: energy identity residual {:.3e} -> {:.3e} under (h, dt) halving, ratio {ratio:.2} (tol >= 1.8, {:.2} s < 30 s)",
            coarse.energy_residual,
            fine.energy_residual,
            dt.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_09_monotonicity_and_invariants() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    // interpolated effective law of the nonlinear scenario
    let (cfg, set) = setup(
        "id = \"c9\"\ndimension = 1\np = 4.0\nk = 1.0\n[flux]\nid = \"plap\"\namp = 0.5\n[reaction]\nid = \"rsin\"\n[grids]\ncell_y = 32\n[tables]\nr = [-1.0, 1.0, 5]\nxi = [-2.0, 2.0, 9]\n",
    );
    let law = homog_rd::effective::build(&cfg, &set, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut worst_dot = f64::INFINITY;
    for _ in 0..1000 {
        let r = rng.gen_range(-1.0..1.0);
        let (x1, x2) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let q1 = law.q(r, [x1, 0.0]).unwrap();
        let q2 = law.q(r, [x2, 0.0]).unwrap();
        worst_dot = worst_dot.min((q1[0] - q2[0]) * (x1 - x2));
    }

    // zero flux at zero gradient when the reaction is off
    let (cfg_z, set_z) = setup(
        "id = \"c9z\"\ndimension = 1\np = 4.0\nk = 1.0\n[flux]\nid = \"plap\"\namp = 0.5\n[grids]\ncell_y = 32\n",
    );
    let grid = TorusGrid::new(1, cfg_z.grids.cell_y, cfg_z.grids.cell_tau).unwrap();
    let params = CellParams { r: 0.7, xi: [0.0; 2], ..Default::default() };
    let (q_zero, _, sol_z) =
        effective_point(&CellInput::new(&set_z, grid, params, cfg_z.tol)).unwrap();

    // weighted projection idempotence and centering of every corrector here
    let sgrid = TorusGrid::steady(1, 64).unwrap();
    let rho = Field::from_fn(sgrid, |y, _| 1.0 + 0.5 * (2.0 * PI * y[0]).cos());
    let f = Field::from_fn(sgrid, |y, _| (2.0 * PI * y[0]).sin() + 0.3);
    let p1 = project_weighted(&rho, &f);
    let p2 = project_weighted(&rho, &p1);
    let mut idem = 0.0f64;
    for (a, b) in p1.data.iter().zip(&p2.data) {
        idem = idem.max((a - b).abs());
    }
    let mean_p = weighted_mean(&rho, &p1).abs();

    let (cfg_c, set_c) = setup(
        "id = \"c9c\"\ndimension = 1\nk = 2.0\n[flux]\nid = \"cos1d\"\n[reaction]\nid = \"rsin\"\n[density]\nid = \"cos\"\namp = 0.5\n[grids]\ncell_y = 64\n",
    );
    let grid_c = TorusGrid::new(1, 64, 16).unwrap();
    let params_c = CellParams { r: 1.0, xi: [1.0, 0.0], ..Default::default() };
    let sol_c = cell_solve(&CellInput::new(&set_c, grid_c, params_c, cfg_c.tol)).unwrap();
    let rho_c = Field::from_fn(TorusGrid::steady(1, 64).unwrap(), |y, _| {
        set_c.density.rho(y)
    });
    let rho_z = Field::from_fn(TorusGrid::steady(1, 32).unwrap(), |_, _| 1.0);
    let mut centering = weighted_mean(&rho_c, &sol_c.pi).abs();
    centering = centering.max(weighted_mean(&rho_z, &sol_z.pi).abs());

    let dt = t0.elapsed();
    check(
        worst_dot >= -1e-10
            && q_zero[0].abs() <= 1e-12
            && idem <= 1e-12
            && mean_p <= 1e-12
            && centering <= 1e-10
            && dt.as_secs_f64() < 30.0,
        &format!(
            "criterion 9: monotonicity over 1000 pairs (min dot {worst_dot:.2e} >= -1e-10), q(r, 0) = {:.2e} with g = 0, projection idempotent to {idem:.2e}, corrector means <= {centering:.2e} ({:.2} s < 30 s)",
            q_zero[0],
            dt.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_10_nonlinear_regime_smoke() {
    let _guard = budget_lock();
    let t0 = Instant::now();
    let cfg = ScenarioConfig::load(scenario_path("plap_1d.cfg")).unwrap();
    let study = run_convergence_study(&cfg, None).unwrap();
    let rep = &study.report;
    let errors: Vec<String> = rep.rows.iter().map(|r| format!("{:.3e}", r.l2_qt_error)).collect();
    let newton_ok = study.macro_solution.stats.halvings == 0;
    let dt = t0.elapsed();
    check(
        rep.errors_decreasing == Some(true) && newton_ok && dt.as_secs_f64() < 300.0,
        &format!(
            "criterion 10: p = 4 ladder completes, DNS errors decrease [{}], macro newton converged at every step ({} iterations, 0 halvings) ({:.1} s < 300 s)",
            errors.join(", "),
            study.macro_solution.stats.newton_iters,
            dt.as_secs_f64()
        ),
    );
}
