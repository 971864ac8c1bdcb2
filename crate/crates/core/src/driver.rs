//! Batch orchestration: load a configuration, run the requested mode, audit
//! the result, and write the artifacts (diagnostics table, snapshots,
//! iteration report). Every artifact is written to a temporary name and
//! renamed into place.

use crate::config::{RunConfig, RunMode};
use crate::error::{Result, SimError};
use crate::grid::{State, Trajectory};
use crate::monitors::{
    self, CompatVerdict, CompatibilityReport, DiagnosticsSeries, WatchQuantity, WatchdogEvent,
    WatchdogScanner,
};
use crate::oracle::{self, MmsCase, SolverId};
use crate::picard::{self, InitialData, IterationControls, PicardReport};
use crate::presets;
use crate::snapshot;
use crate::transport;
use crate::grid::{Field, VectorField, VelocityPath};
use crate::params::SimParams;
use std::fmt::Write as _;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INCOMPATIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;
pub const EXIT_WATCHDOG: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug)]
pub struct SimulateOutcome {
    pub exit_code: i32,
    pub diagnostics: DiagnosticsSeries,
    pub events: Vec<WatchdogEvent>,
    pub report: Option<PicardReport>,
    pub steps_completed: usize,
}

/// Resolve the configured initial data (preset formulas or snapshot file).
pub fn load_initial_data(cfg: &RunConfig) -> Result<InitialData> {
    if let Some(name) = &cfg.ic.preset {
        return presets::build_initial_data(name, &cfg.grid, &cfg.params);
    }
    if let Some(path) = &cfg.ic.snapshot {
        let state = snapshot::read_state(path, cfg.grid.bc_theta, cfg.grid.bc_phi)?;
        snapshot::check_grid_matches(&state, &cfg.grid)?;
        return InitialData::new(state.rho, state.theta, state.u, state.z);
    }
    Err(SimError::Config(
        "configuration names neither an ic preset nor an ic snapshot".into(),
    ))
}

fn controls_of(cfg: &RunConfig) -> IterationControls {
    IterationControls {
        ode_substeps: cfg.run.ode_substeps,
        ..IterationControls::default()
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_snapshots(out: &Path, traj: &Trajectory, cadence: usize) -> Result<()> {
    for (n, s) in traj.states().iter().enumerate() {
        if n % cadence == 0 || n + 1 == traj.len() {
            let path = out.join(format!("state_{n:06}.snap"));
            snapshot::write_state(&path, s)?;
        }
    }
    Ok(())
}

fn merge_events(d: &mut DiagnosticsSeries, events: &[WatchdogEvent]) {
    for e in events {
        if e.step < d.events.len() {
            if !d.events[e.step].is_empty() {
                d.events[e.step].push(';');
            }
            d.events[e.step].push_str(&e.label());
        }
    }
}

fn picard_report_text(report: &PicardReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "iterations: {}", report.iterations);
    let _ = writeln!(s, "converged: {}", report.converged);
    if let Some(r) = report.contraction_ratio() {
        let _ = writeln!(s, "contraction_ratio: {r:.6e}");
    }
    if let Some(a) = &report.aborted {
        let _ = writeln!(s, "aborted: {a}");
    }
    let _ = writeln!(s, "sup_psi_per_iteration:");
    for (k, p) in report.psi_sups.iter().enumerate() {
        let _ = writeln!(s, "  {}: {p:.12e}", k + 2);
    }
    let _ = writeln!(s, "gap_dissipation_per_iteration:");
    for (k, p) in report.dissipation.iter().enumerate() {
        let _ = writeln!(s, "  {}: {p:.12e}", k + 2);
    }
    s
}

/// Run the configured simulation end to end and write diagnostics,
/// snapshots and the iteration report under `out`.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateOutcome> {
    std::fs::create_dir_all(out)?;
    let ics = load_initial_data(cfg)?;
    let controls = controls_of(cfg);
    match cfg.mode() {
        RunMode::WholeInterval => {
            let report = picard::picard_iterate(
                &ics,
                &cfg.params,
                cfg.run.t_final,
                cfg.run.dt,
                cfg.run.picard_tol,
                cfg.run.picard_max_iter,
                &controls,
                None,
            )?;
            let mut diagnostics = monitors::invariant_audit(&report.trajectory, &cfg.params);
            let events =
                monitors::watchdog_scan(&report.trajectory, cfg.thresholds, cfg.params.q_sob);
            merge_events(&mut diagnostics, &events);
            write_atomic(&out.join("diagnostics.tsv"), &diagnostics.to_table())?;
            write_atomic(&out.join("picard_report.txt"), &picard_report_text(&report))?;
            write_snapshots(out, &report.trajectory, cfg.run.snapshot_cadence)?;
            let nan_seen = events.iter().any(|e| e.quantity == WatchQuantity::Nan);
            let exit_code = if nan_seen {
                EXIT_WATCHDOG
            } else if !report.converged {
                EXIT_NONCONVERGED
            } else {
                EXIT_OK
            };
            let steps = report.trajectory.len() - 1;
            Ok(SimulateOutcome {
                exit_code,
                diagnostics,
                events,
                report: Some(report),
                steps_completed: steps,
            })
        }
        RunMode::PerStep => {
            let delta_floor = controls.delta_floor_rel * ics.rho0.max().max(0.0);
            let mut scanner = WatchdogScanner::new(cfg.thresholds, cfg.params.q_sob);
            let mut states = Vec::new();
            let first = initial_state_of(&ics, &cfg.params)?;
            scanner.observe(&first, cfg.run.dt);
            states.push(first);
            let total_steps = cfg.steps();
            let mut solver_failure: Option<String> = None;
            for _n in 0..total_steps {
                if scanner.nan_seen() {
                    break;
                }
                let prev = states.last().unwrap();
                match picard::per_step_advance(
                    prev,
                    &cfg.params,
                    cfg.run.dt,
                    &controls,
                    delta_floor,
                    cfg.run.per_step_inner_iters,
                ) {
                    Ok(next) => {
                        scanner.observe(&next, cfg.run.dt);
                        states.push(next);
                    }
                    Err(SimError::NonFinite(m)) => {
                        // overflow inside a sub-solve: the monitored pipeline
                        // has gone non-finite
                        scanner.emit_nan(prev.time + cfg.run.dt);
                        solver_failure = Some(m);
                        break;
                    }
                    Err(e) => {
                        solver_failure = Some(e.to_string());
                        break;
                    }
                }
            }
            let traj = Trajectory::new(cfg.run.dt, states)?;
            let mut diagnostics = monitors::invariant_audit(&traj, &cfg.params);
            merge_events(&mut diagnostics, &scanner.events);
            write_atomic(&out.join("diagnostics.tsv"), &diagnostics.to_table())?;
            write_snapshots(out, &traj, cfg.run.snapshot_cadence)?;
            let nan_seen = scanner.nan_seen();
            let exit_code = if nan_seen {
                EXIT_WATCHDOG
            } else if solver_failure.is_some() || traj.len() - 1 < total_steps {
                EXIT_NONCONVERGED
            } else {
                EXIT_OK
            };
            if let Some(m) = solver_failure {
                write_atomic(&out.join("abort_reason.txt"), &format!("{m}\n"))?;
            }
            let steps = traj.len() - 1;
            Ok(SimulateOutcome {
                exit_code,
                diagnostics,
                events: scanner.events,
                report: None,
                steps_completed: steps,
            })
        }
    }
}

fn initial_state_of(ics: &InitialData, params: &SimParams) -> Result<State> {
    let g = ics.grid();
    let phi = if params.g_grav > 0.0 {
        crate::gravity::solve_poisson(&ics.rho0, params.g_grav, g.bc_phi)?.phi
    } else {
        Field::zeros(g)
    };
    Ok(State {
        time: 0.0,
        rho: ics.rho0.clone(),
        theta: ics.theta0.clone(),
        u: ics.u0.clone(),
        z: ics.z0.clone(),
        phi,
    })
}

fn compat_report_text(rep: &CompatibilityReport) -> String {
    let verdict = match rep.verdict {
        CompatVerdict::Compatible => "compatible",
        CompatVerdict::Incompatible => "incompatible",
        CompatVerdict::Vacuous => "vacuous",
    };
    format!(
        "verdict: {verdict}\nl2_g1: {:.12e}\nl2_g2: {:.12e}\nvacuum_nodes: {}\nvacuum_residual: {:.12e}\n",
        rep.l2_g1, rep.l2_g2, rep.vacuum_nodes, rep.vacuum_residual
    )
}

/// Check the configured initial data and write the report. Exit code 0 for
/// compatible or vacuous data.
pub fn run_check_ic(cfg: &RunConfig, out: &Path) -> Result<(i32, CompatibilityReport)> {
    std::fs::create_dir_all(out)?;
    let ics = load_initial_data(cfg)?;
    let rep = monitors::check_compatibility(
        &ics,
        &cfg.params,
        monitors::default_eps_vac(&ics.rho0),
    );
    write_atomic(&out.join("compatibility_report.txt"), &compat_report_text(&rep))?;
    let code = match rep.verdict {
        CompatVerdict::Compatible | CompatVerdict::Vacuous => EXIT_OK,
        CompatVerdict::Incompatible => EXIT_INCOMPATIBLE,
    };
    Ok((code, rep))
}

/// Run the vacuum continuation configured in `[continuation]` and write a
/// summary table. Exit 0 when every lift completed and the successive
/// distances decrease.
pub fn run_continue_delta(cfg: &RunConfig, out: &Path) -> Result<(i32, String)> {
    std::fs::create_dir_all(out)?;
    let ics = load_initial_data(cfg)?;
    let controls = controls_of(cfg);
    let entries = picard::vacuum_continuation(
        &ics,
        &cfg.params,
        &cfg.continuation_deltas,
        cfg.run.t_final,
        cfg.run.dt,
        cfg.run.picard_tol,
        cfg.run.picard_max_iter,
        &controls,
    )?;
    let mut table = String::from("delta\titerations\tconverged\tdistance_to_prev\n");
    let mut ok = true;
    let mut prev_distance: Option<f64> = None;
    for e in &entries {
        match (&e.report, &e.error) {
            (Some(r), _) => {
                if !r.converged {
                    ok = false;
                }
                let dist = e
                    .distance_to_prev
                    .map(|d| format!("{d:.12e}"))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    table,
                    "{:.3e}\t{}\t{}\t{}",
                    e.delta, r.iterations, r.converged, dist
                );
                if let (Some(prev), Some(curr)) = (prev_distance, e.distance_to_prev) {
                    if curr >= prev {
                        ok = false;
                    }
                }
                if e.distance_to_prev.is_some() {
                    prev_distance = e.distance_to_prev;
                }
            }
            (None, Some(err)) => {
                ok = false;
                let _ = writeln!(table, "{:.3e}\t-\tfalse\t{err}", e.delta);
            }
            (None, None) => unreachable!("entry without report or error"),
        }
    }
    write_atomic(&out.join("continuation.tsv"), &table)?;
    Ok((if ok { EXIT_OK } else { EXIT_NONCONVERGED }, table))
}

// ---------------------------------------------------------------------------
// convergence studies

/// Deterministic uniform numbers in (-1, 1) for the study densities
/// (keeps the library free of external RNG state).
pub fn lcg_uniform(state: &mut u64) -> f64 {
    // splitmix64 step
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Fitted-order verification for transport, the potential solve and each
/// implicit sub-solver. Returns the table written to `studies.txt`.
pub fn run_convergence_study(levels: usize, seed: u64, out: &Path) -> Result<String> {
    if levels < 3 {
        return Err(SimError::Rejected(format!(
            "convergence study needs at least 3 levels, got {levels}"
        )));
    }
    std::fs::create_dir_all(out)?;
    let mut table = String::from("study\tlevel\th_or_dt\terror\tfitted_order\n");

    // transport: constant-velocity translation at fixed CFL
    {
        let c = 0.8;
        let t_final = 0.25;
        let mut pairs = Vec::new();
        for l in 0..levels {
            let n = 64 * (1 << l) + 1;
            let g = crate::grid::Grid::line(n, 1.0 / (n as f64 - 1.0), 0.0)?;
            let dt_ode = 0.5 * g.spacing()[0] / c;
            let v = VelocityPath::stationary(VectorField::from_fn(&g, |_| [c, 0.0, 0.0]), t_final);
            let profile = |x: f64| {
                let s: f64 = (x - 0.3) / 0.2;
                if s.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            };
            let rho0 = Field::from_fn(&g, |x| profile(x[0]));
            let trace = transport::trace_characteristics(&v, t_final, dt_ode)?;
            let rho = transport::advance_density(&rho0, &trace)?;
            let exact = Field::from_fn(&g, |x| profile(x[0] - c * t_final));
            pairs.push((g.spacing()[0], rho.zip(&exact, |a, b| (a - b).abs()).max()));
        }
        let order = oracle::fitted_order(&pairs);
        for (l, (h, e)) in pairs.iter().enumerate() {
            let _ = writeln!(table, "transport\t{l}\t{h:.6e}\t{e:.6e}\t{order:.3}");
        }
    }

    // potential solve against the direct eigenmode reference
    {
        let mut state = seed.wrapping_mul(2654435761).wrapping_add(1);
        for l in 0..levels.min(3) {
            let n = [9usize, 17, 33][l];
            let g = crate::grid::Grid::new(
                3,
                &[n, n, n],
                &[1.0 / (n as f64 - 1.0); 3],
                &[0.0; 3],
                crate::grid::ScalarBc::DirichletZero,
                crate::grid::PhiBc::ZeroMeanPeriodic,
            )?;
            let rho = Field::from_fn(&g, |_| lcg_uniform(&mut state));
            let fast = crate::gravity::solve_poisson(&rho, 1.0, crate::grid::PhiBc::ZeroMeanPeriodic)?;
            let direct = oracle::poisson_direct_eigenmode(&rho, 1.0);
            let rel = crate::norms::lp_norm(&fast.phi.zip(&direct, |a, b| a - b), 2.0)
                / crate::norms::lp_norm(&direct, 2.0).max(1e-300);
            let _ = writeln!(
                table,
                "poisson\t{l}\t{:.6e}\t{rel:.6e}\t{:.3e}",
                g.spacing()[0],
                fast.residual_l2
            );
        }
    }

    // implicit sub-solvers: spatial and temporal orders on manufactured
    // problems
    let prm = SimParams::test_defaults(1);
    let cases = [
        ("temperature", MmsCase::TemperatureCosine, SolverId::Temperature),
        ("momentum", MmsCase::MomentumSine, SolverId::Momentum),
        ("mass_fraction", MmsCase::MassFractionSine, SolverId::MassFraction),
    ];
    for (label, case, _solver) in cases {
        let ns: Vec<usize> = (0..levels).map(|l| 16 * (1 << l) + 1).collect();
        let pairs = oracle::mms_spatial_study(case, &prm, &ns, 4e-4, 0.05)?;
        let order = oracle::fitted_order(&pairs);
        for (l, (h, e)) in pairs.iter().enumerate() {
            let _ = writeln!(table, "{label}_space\t{l}\t{h:.6e}\t{e:.6e}\t{order:.3}");
        }
        let diffs = oracle::mms_temporal_study(case, &prm, 129, 4e-3, levels, 0.04)?;
        let torder = oracle::fitted_order(&diffs);
        for (l, (dt, e)) in diffs.iter().enumerate() {
            let _ = writeln!(table, "{label}_time\t{l}\t{dt:.6e}\t{e:.6e}\t{torder:.3}");
        }
    }

    write_atomic(&out.join("studies.txt"), &table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset_config;

    #[test]
    fn trivial_preset_runs_clean() {
        let cfg = preset_config("trivial").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_simulate(&cfg, dir.path()).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
        assert!(outcome.events.is_empty());
        assert!(outcome.diagnostics.violations.is_empty());
        assert!(dir.path().join("diagnostics.tsv").exists());
        assert!(dir.path().join("picard_report.txt").exists());
        assert!(dir.path().join("state_000000.snap").exists());
        // all-constant diagnostics
        let d = &outcome.diagnostics;
        for w in d.mass.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn every_preset_audits_clean() {
        for name in crate::presets::PRESET_NAMES {
            let cfg = preset_config(name).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let outcome = run_simulate(&cfg, dir.path()).unwrap();
            assert_eq!(outcome.exit_code, EXIT_OK, "{name}");
            assert!(
                outcome.diagnostics.violations.is_empty(),
                "{name}: {:?}",
                outcome.diagnostics.violations.first()
            );
            assert!(outcome.events.is_empty(), "{name}: {:?}", outcome.events);
        }
    }

    #[test]
    fn check_ic_exit_codes() {
        let cfg = preset_config("vacuum-blob").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (code, rep) = run_check_ic(&cfg, dir.path()).unwrap();
        assert_eq!(code, EXIT_OK);
        assert_eq!(rep.verdict, CompatVerdict::Compatible);
        assert!(dir.path().join("compatibility_report.txt").exists());
    }

    #[test]
    fn study_rejects_too_few_levels() {
        let dir = tempfile::tempdir().unwrap();
        assert!(run_convergence_study(2, 7, dir.path()).is_err());
    }

    #[test]
    fn study_reports_design_orders() {
        let dir = tempfile::tempdir().unwrap();
        let table = run_convergence_study(3, 7, dir.path()).unwrap();
        assert!(dir.path().join("studies.txt").exists());
        // parse fitted orders (last column) per study label
        let mut poisson_rel_finest = f64::INFINITY;
        for line in table.lines().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            let label = cols[0];
            let err: f64 = cols[3].parse().unwrap();
            let order: f64 = cols[4].parse().unwrap();
            match label {
                "transport" => assert!(order >= 1.8, "{line}"),
                "poisson" => poisson_rel_finest = err, // rows arrive coarse-to-fine
                l if l.ends_with("_space") => assert!(order >= 1.8, "{line}"),
                l if l.ends_with("_time") => assert!(order >= 0.9, "{line}"),
                _ => panic!("unexpected study label {label}"),
            }
        }
        assert!(
            poisson_rel_finest <= 1e-6,
            "potential solve vs direct reference: {poisson_rel_finest:.3e}"
        );
    }

    #[test]
    fn snapshot_ic_round_trip_through_simulate() {
        let cfg = preset_config("trivial").unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_simulate(&cfg, dir.path()).unwrap();
        // restart from the first snapshot

        let mut cfg2 = cfg.clone();
        cfg2.ic.preset = None;
        cfg2.ic.snapshot = Some(dir.path().join("state_000000.snap"));
        let dir2 = tempfile::tempdir().unwrap();
        let outcome = run_simulate(&cfg2, dir2.path()).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
    }
}
