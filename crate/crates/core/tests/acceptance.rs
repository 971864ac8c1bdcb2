//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them). The criteria
//! pin the tolerances; nothing here is calibrated to the implementation.

use ignis::config::RunConfig;
use ignis::driver::{self, SimulateOutcome, EXIT_OK, EXIT_WATCHDOG};
use ignis::grid::{Field, Grid, PhiBc, ScalarBc, State, VectorField, VelocityPath};
use ignis::monitors::{CompatVerdict, WatchQuantity};
use ignis::oracle::{self, MmsCase};
use ignis::params::SimParams;
use ignis::picard::{self, InitialData, IterationControls};
use ignis::presets;
use ignis::transport;
use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

fn fitted_order(pairs: &[(f64, f64)]) -> f64 {
    oracle::fitted_order(pairs)
}

fn bump(x: f64, center: f64, width: f64) -> f64 {
    let s = (x - center) / width;
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

struct PresetRun {
    cfg: RunConfig,
    outcome: SimulateOutcome,
    _dir: tempfile::TempDir,
}

fn run_preset(name: &str) -> PresetRun {
    let cfg = presets::preset_config(name).expect("preset exists");
    let dir = tempfile::tempdir().expect("tempdir");
    let outcome = driver::run_simulate(&cfg, dir.path()).expect("run completes");
    PresetRun {
        cfg,
        outcome,
        _dir: dir,
    }
}

fn hotspot_run() -> &'static PresetRun {
    static RUN: OnceLock<PresetRun> = OnceLock::new();
    RUN.get_or_init(|| run_preset("hotspot"))
}

fn all_preset_runs() -> &'static Vec<(String, PresetRun)> {
    static RUNS: OnceLock<Vec<(String, PresetRun)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        presets::PRESET_NAMES
            .iter()
            .map(|&n| (n.to_string(), run_preset(n)))
            .collect()
    })
}

#[test]
fn c01_transport_fidelity() {
    let start = Instant::now();
    let c = 0.8;
    let t_final = 0.25;
    let mut pairs = Vec::new();
    for &cells in &[64usize, 128, 256] {
        let n = cells + 1;
        let g = Grid::line(n, 1.0 / cells as f64, 0.0).unwrap();
        let dt_ode = 0.5 * g.spacing()[0] / c; // fixed CFL
        let v = VelocityPath::stationary(VectorField::from_fn(&g, |_| [c, 0.0, 0.0]), t_final);
        let rho0 = Field::from_fn(&g, |x| bump(x[0], 0.3, 0.2));
        let trace = transport::trace_characteristics(&v, t_final, dt_ode).unwrap();
        let rho = transport::advance_density(&rho0, &trace).unwrap();
        let exact = Field::from_fn(&g, |x| bump(x[0] - c * t_final, 0.3, 0.2));
        pairs.push((g.spacing()[0], rho.zip(&exact, |a, b| (a - b).abs()).max()));
    }
    let order = fitted_order(&pairs);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(order >= 1.8, "fitted order {order}, errors {pairs:?}");
    assert!(elapsed < 10.0, "runtime {elapsed:.2}s exceeds 10s");
    println!(
        "PASS criterion 1 (transport fidelity): fitted order {order:.2} over grids 64/128/256, runtime {elapsed:.2}s"
    );
}

#[test]
fn c02_representation_formula_exactness() {
    // v(x) = x on [0,1]: density evolves as rho0(x e^-t) e^-t
    let t = 0.8;
    let mut pairs = Vec::new();
    for &n in &[33usize, 65, 129] {
        let g = Grid::line(n, 1.0 / (n as f64 - 1.0), 0.0).unwrap();
        let dt_ode = g.spacing()[0]; // joint refinement: dt_ode ~ h
        let v = VelocityPath::stationary(VectorField::from_fn(&g, |x| [x[0], 0.0, 0.0]), t);
        let rho0 = Field::from_fn(&g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
        let trace = transport::trace_characteristics(&v, t, dt_ode).unwrap();
        let rho = transport::advance_density(&rho0, &trace).unwrap();
        let exact = Field::from_fn(&g, |x| {
            (1.0 + 0.5 * (2.0 * PI * x[0] * (-t).exp()).sin()) * (-t).exp()
        });
        pairs.push((g.spacing()[0], rho.zip(&exact, |a, b| (a - b).abs()).max()));
    }
    let order = fitted_order(&pairs);
    assert!(order >= 1.8, "fitted order {order}, errors {pairs:?}");
    println!(
        "PASS criterion 2 (representation-formula exactness): measured order {order:.2} in (h, dt_ode)"
    );
}

#[test]
fn c03_poisson_cross_validation() {
    let start = Instant::now();
    // 33 nodes per axis = 32^3 unique periodic nodes
    let n = 33;
    let g = Grid::new(
        3,
        &[n, n, n],
        &[1.0 / 32.0; 3],
        &[0.0; 3],
        ScalarBc::DirichletZero,
        PhiBc::ZeroMeanPeriodic,
    )
    .unwrap();
    let mut state = 0x5eed_1234_u64;
    let rho = Field::from_fn(&g, |_| driver::lcg_uniform(&mut state));
    let fast = ignis::gravity::solve_poisson(&rho, 1.0, PhiBc::ZeroMeanPeriodic).unwrap();
    let direct = oracle::poisson_direct_eigenmode(&rho, 1.0);
    let rel = ignis::norms::lp_norm(&fast.phi.zip(&direct, |a, b| a - b), 2.0)
        / ignis::norms::lp_norm(&direct, 2.0);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(rel <= 1e-6, "fast vs eigenmode reference: relative L2 {rel:.3e}");
    assert!(
        fast.residual_l2 <= 1e-10,
        "discrete residual {:.3e}",
        fast.residual_l2
    );
    assert!(elapsed < 60.0, "runtime {elapsed:.2}s exceeds 60s");
    println!(
        "PASS criterion 3 (poisson cross-validation): rel L2 {rel:.2e}, residual {:.2e}, runtime {elapsed:.2}s",
        fast.residual_l2
    );
}

#[test]
fn c04_mass_fraction_maximum_principle() {
    let run = hotspot_run();
    let d = &run.outcome.diagnostics;
    assert!(d.len() >= 201, "hotspot must run >= 200 steps, got {}", d.len() - 1);
    let min_z = d.min_z.iter().copied().fold(f64::INFINITY, f64::min);
    let max_z = d.max_z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(min_z >= -1e-10, "min Z {min_z}");
    assert!(max_z <= 1.0 + 1e-10, "max Z {max_z}");
    println!(
        "PASS criterion 4 (mass-fraction maximum principle): Z in [{min_z:.3e}, {max_z:.12}] over {} steps",
        d.len() - 1
    );
}

#[test]
fn c05_reaction_monotonicity() {
    for (name, run) in all_preset_runs() {
        let d = &run.outcome.diagnostics;
        for (n, w) in d.int_rho_z.windows(2).enumerate() {
            let allowance = 1e-12 * w[0].abs().max(1e-300);
            assert!(
                w[1] <= w[0] + allowance,
                "{name}: weighted reactant mass grew at step {}: {} -> {}",
                n + 1,
                w[0],
                w[1]
            );
        }
    }
    // strict decrease on the hotspot once the temperature is warm
    let run = hotspot_run();
    let d = &run.outcome.diagnostics;
    let e_act = run.cfg.params.e_act;
    for n in 1..d.len() {
        if d.max_theta[n - 1] > 0.01 * e_act {
            assert!(
                d.int_rho_z[n] < d.int_rho_z[n - 1],
                "hotspot step {n}: reactant mass not strictly decreasing"
            );
        }
    }
    println!(
        "PASS criterion 5 (reaction monotonicity): weighted reactant mass non-increasing on all presets, strictly decreasing on hotspot"
    );
}

#[test]
fn c06_temperature_positivity() {
    for (name, run) in all_preset_runs() {
        let d = &run.outcome.diagnostics;
        let min_theta = d.min_theta.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min_theta >= -1e-10, "{name}: min theta {min_theta}");
    }
    println!("PASS criterion 6 (temperature positivity): min theta >= -1e-10 on every preset");
}

#[test]
fn c07_mass_accounting() {
    let base = hotspot_run();
    let drift_base = base.outcome.diagnostics.mass_drift();
    assert!(
        drift_base <= 5e-3,
        "base-resolution mass drift {drift_base:.3e} exceeds 0.5%"
    );

    // double resolution: same preset formulas on a refined grid
    let mut cfg = presets::preset_config("hotspot").unwrap();
    let fine = Grid::new(
        1,
        &[129],
        &[2.0 / 128.0],
        &[-1.0],
        ScalarBc::DirichletZero,
        PhiBc::ZeroMeanPeriodic,
    )
    .unwrap();
    cfg.grid = fine;
    let dir = tempfile::tempdir().unwrap();
    let fine_out = driver::run_simulate(&cfg, dir.path()).unwrap();
    assert_eq!(fine_out.exit_code, EXIT_OK);
    let drift_fine = fine_out.diagnostics.mass_drift();
    // halving or better, with a round-off guard should both drifts sit at
    // machine level
    assert!(
        drift_fine <= 0.5 * drift_base || (drift_base < 1e-10 && drift_fine < 1e-10),
        "drift did not halve: base {drift_base:.3e}, fine {drift_fine:.3e}"
    );

    // conservative reference: exact mass conservation to round-off
    let g = Grid::line(65, 2.0 / 64.0, -1.0).unwrap();
    let v = VectorField::from_fn(&g, |x| [0.3 * (PI * (x[0] + 1.0) / 2.0).sin(), 0.0, 0.0]);
    let mut rho = Field::from_fn(&g, |x| 1.0 + bump(x[0], 0.0, 0.5));
    let mass0 = ignis::norms::integral(&rho);
    let dt = 0.4 * g.spacing()[0] / 0.3;
    for _ in 0..100 {
        rho = transport::conservative_update_oracle(&rho, &v, dt).unwrap();
    }
    let oracle_drift = (ignis::norms::integral(&rho) - mass0).abs() / mass0;
    assert!(
        oracle_drift <= 1e-13,
        "conservative reference drift {oracle_drift:.3e}"
    );
    println!(
        "PASS criterion 7 (mass accounting): drift {drift_base:.2e} (base) -> {drift_fine:.2e} (double), conservative reference {oracle_drift:.1e}"
    );
}

fn short_hotspot_cfg() -> RunConfig {
    let mut cfg = presets::preset_config("hotspot").unwrap();
    cfg.run.t_final = 0.016; // 32 steps at the preset dt
    cfg.run.picard_tol = 1e-8;
    cfg.run.picard_max_iter = 30;
    cfg
}

#[test]
fn c08_picard_contraction() {
    let cfg = short_hotspot_cfg();
    let ics = driver::load_initial_data(&cfg).unwrap();
    let controls = IterationControls::default();
    let report = picard::picard_iterate(
        &ics,
        &cfg.params,
        cfg.run.t_final,
        cfg.run.dt,
        1e-8,
        30,
        &controls,
        None,
    )
    .unwrap();
    assert!(
        report.converged && report.iterations <= 30,
        "not converged within 30 iterations: {:?}",
        report.psi_sups
    );
    // monotone decrease with ratio <= 0.9 from the third sweep on
    for (k, w) in report.psi_sups.windows(2).enumerate() {
        assert!(
            w[1] <= 0.9 * w[0],
            "gap ratio {} at comparison {k}: {:?}",
            w[1] / w[0],
            report.psi_sups
        );
    }
    let ratio = report.contraction_ratio().unwrap_or(0.0);
    println!(
        "PASS criterion 8 (fixed-point contraction): {} sweeps, mean ratio {ratio:.3}, sup gap history {:?}",
        report.iterations, report.psi_sups
    );
}

#[test]
fn c09_vacuum_continuation() {
    let cfg = presets::preset_config("vacuum-blob").unwrap();
    let ics = driver::load_initial_data(&cfg).unwrap();
    let controls = IterationControls::default();
    let entries = picard::vacuum_continuation(
        &ics,
        &cfg.params,
        &[1e-2, 1e-3, 1e-4],
        cfg.run.t_final,
        cfg.run.dt,
        cfg.run.picard_tol,
        cfg.run.picard_max_iter,
        &controls,
    )
    .unwrap();
    assert_eq!(entries.len(), 3);
    for e in &entries {
        assert!(e.error.is_none(), "delta {} failed: {:?}", e.delta, e.error);
        assert!(e.report.as_ref().unwrap().converged, "delta {}", e.delta);
    }
    let d12 = entries[1].distance_to_prev.unwrap();
    let d23 = entries[2].distance_to_prev.unwrap();
    assert!(
        d23 < d12,
        "successive distances not decreasing: {d12:.3e} vs {d23:.3e}"
    );
    println!(
        "PASS criterion 9 (vacuum continuation): distances {d12:.3e} -> {d23:.3e} strictly decreasing"
    );
}

#[test]
fn c10_mms_orders() {
    let prm = SimParams::test_defaults(1);
    let cases = [
        ("temperature", MmsCase::TemperatureCosine),
        ("momentum", MmsCase::MomentumSine),
        ("mass fraction", MmsCase::MassFractionSine),
    ];
    let mut summary = Vec::new();
    for (label, case) in cases {
        let pairs = oracle::mms_spatial_study(case, &prm, &[17, 33, 65], 4e-4, 0.05).unwrap();
        let s_order = fitted_order(&pairs);
        assert!(
            s_order >= 1.8,
            "{label}: spatial order {s_order}, errors {pairs:?}"
        );
        let diffs = oracle::mms_temporal_study(case, &prm, 129, 4e-3, 4, 0.04).unwrap();
        let t_order = fitted_order(&diffs);
        assert!(
            t_order >= 0.9,
            "{label}: temporal order {t_order}, diffs {diffs:?}"
        );
        summary.push(format!("{label} {s_order:.2}/{t_order:.2}"));
    }
    println!(
        "PASS criterion 10 (manufactured-solution orders, space/time): {}",
        summary.join(", ")
    );
}

#[test]
fn c11_compatibility_checker() {
    let g = Grid::line(33, 1.0 / 32.0, 0.0).unwrap();
    let params = SimParams::test_defaults(1);
    let dir = tempfile::tempdir().unwrap();

    let run_with_snapshot = |tag: &str, ics: &InitialData| -> (i32, CompatVerdict) {
        let state = State {
            time: 0.0,
            rho: ics.rho0.clone(),
            theta: ics.theta0.clone(),
            u: ics.u0.clone(),
            z: ics.z0.clone(),
            phi: Field::zeros(ics.grid()),
        };
        let snap = dir.path().join(format!("{tag}.snap"));
        ignis::snapshot::write_state(&snap, &state).unwrap();
        let mut cfg = presets::preset_config("trivial").unwrap();
        cfg.grid = ics.grid().clone();
        cfg.params = params.clone();
        cfg.ic.preset = None;
        cfg.ic.snapshot = Some(snap);
        let out = dir.path().join(format!("{tag}_out"));
        let (code, rep) = driver::run_check_ic(&cfg, &out).unwrap();
        (code, rep.verdict)
    };

    // constant density, zero fields: compatible
    let ics1 = InitialData::new(
        Field::constant(&g, 2.0),
        Field::zeros(&g),
        VectorField::zeros(&g),
        Field::zeros(&g),
    )
    .unwrap();
    let (code1, v1) = run_with_snapshot("const", &ics1);
    assert_eq!(v1, CompatVerdict::Compatible);
    assert_eq!(code1, EXIT_OK);

    // vacuum region, temperature harmonic there by construction: compatible
    let rho0 = Field::from_fn(&g, |x| if x[0] <= 0.5 { 2.0 * (0.5 - x[0]) } else { 0.0 });
    let theta0 = Field::from_fn(&g, |x| bump(x[0], 0.2, 0.15) * 0.3);
    let ics2 = InitialData::new(rho0, theta0, VectorField::zeros(&g), Field::zeros(&g)).unwrap();
    let (code2, v2) = run_with_snapshot("vacuum_ok", &ics2);
    assert_eq!(v2, CompatVerdict::Compatible);
    assert_eq!(code2, EXIT_OK);

    // velocity structure inside the vacuum: incompatible
    let rho0 = Field::from_fn(&g, |x| if x[0] < 0.4 { 1.0 } else { 0.0 });
    let u0 = VectorField::from_fn(&g, |x| [bump(x[0], 0.7, 0.15), 0.0, 0.0]);
    let ics3 = InitialData::new(rho0, Field::zeros(&g), u0, Field::zeros(&g)).unwrap();
    let (code3, v3) = run_with_snapshot("vacuum_bad", &ics3);
    assert_eq!(v3, CompatVerdict::Incompatible);
    assert_eq!(code3, driver::EXIT_INCOMPATIBLE);

    println!(
        "PASS criterion 11 (compatibility checker): verdicts compatible/compatible/incompatible with exit codes {code1}/{code2}/{code3}"
    );
}

#[test]
fn c12_watchdog_soundness() {
    // calm presets: zero events
    for (name, run) in all_preset_runs() {
        assert!(
            run.outcome.events.is_empty(),
            "{name}: unexpected events {:?}",
            run.outcome.events
        );
    }

    // forced ignition: huge heat release in per-step mode
    let mut cfg = presets::preset_config("hotspot").unwrap();
    cfg.params.q_heat = 1e6;
    cfg.run.t_final = 0.05;
    cfg.run.dt = 1e-3;
    cfg.run.mode = "per_step".into();
    cfg.thresholds.window = 2;
    cfg.thresholds.growth_rate = 500.0;
    let dir = tempfile::tempdir().unwrap();
    let outcome = driver::run_simulate(&cfg, dir.path()).unwrap();
    assert_eq!(outcome.exit_code, EXIT_WATCHDOG, "expected watchdog abort");
    let nan_step = outcome
        .events
        .iter()
        .find(|e| e.quantity == WatchQuantity::Nan)
        .map(|e| e.step)
        .expect("a nan event must fire");
    let growth_step = outcome
        .events
        .iter()
        .filter(|e| e.growth_rate > 0.0)
        .map(|e| e.step)
        .min()
        .expect("a growth event must fire");
    assert!(
        growth_step < nan_step,
        "growth event (step {growth_step}) must come strictly before the nan event (step {nan_step})"
    );
    // the breakdown accumulator grows at least tenfold before the nan
    let bkm = &outcome.diagnostics;
    let totals: Vec<f64> = (0..bkm.len())
        .map(|i| bkm.sup_theta[i] + bkm.bkm_grad_u[i] + bkm.bkm_grad_z[i])
        .collect();
    let first_pos = totals.iter().position(|&v| v > 0.0).expect("accumulator moves");
    let last = totals.last().copied().unwrap();
    assert!(
        last >= 10.0 * totals[first_pos],
        "breakdown accumulator grew only {last:.3e} from {:.3e}",
        totals[first_pos]
    );
    println!(
        "PASS criterion 12 (watchdog soundness): growth event at step {growth_step}, nan at step {nan_step}, accumulator x{:.1e}, calm presets quiet",
        last / totals[first_pos]
    );
}

#[test]
fn c13_determinism() {
    let cfg = short_hotspot_cfg();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let o1 = driver::run_simulate(&cfg, d1.path()).unwrap();
    let o2 = driver::run_simulate(&cfg, d2.path()).unwrap();
    assert_eq!(o1.exit_code, EXIT_OK);
    assert_eq!(o2.exit_code, EXIT_OK);
    let t1 = std::fs::read(d1.path().join("diagnostics.tsv")).unwrap();
    let t2 = std::fs::read(d2.path().join("diagnostics.tsv")).unwrap();
    assert_eq!(t1, t2, "diagnostics tables differ between identical runs");
    println!(
        "PASS criterion 13 (determinism): {} identical bytes of diagnostics",
        t1.len()
    );
}
