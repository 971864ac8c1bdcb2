//! Built-in run presets. Each preset pairs a full default configuration
//! with analytic initial fields that can be evaluated on any grid, so
//! resolution studies reuse the same data.
//!
//! Signatures the auditors expect:
//! - `trivial`: constant density, all other fields zero; every diagnostic
//!   series stays constant.
//! - `hotspot`: reaction-diffusion ignition of a temperature bump in a
//!   uniform fuel bed; weighted reactant mass strictly decreases.
//! - `vacuum-blob`: compactly supported density with a hot core, the
//!   starting point of the vacuum continuation.
//! - `collapse`: self-gravitating periodic density ripple with insulated
//!   (zero-flux) temperature walls.

use crate::config::{
    ConfigFile, GridSection, IcSection, RunConfig, RunSection, WatchdogSection,
};
use crate::error::{Result, SimError};
use crate::grid::{Field, Grid, VectorField};
use crate::params::SimParams;
use crate::picard::InitialData;
use std::sync::Arc;

pub const PRESET_NAMES: [&str; 4] = ["trivial", "hotspot", "vacuum-blob", "collapse"];

/// Smooth bump supported on |s| < 1 with unit peak.
fn mollifier(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn base_run(t_final: f64, dt: f64) -> RunSection {
    RunSection {
        t_final,
        dt,
        picard_tol: 1e-8,
        picard_max_iter: 30,
        mode: "auto".into(),
        snapshot_cadence: 50,
        ode_substeps: 4,
        per_step_inner_iters: 1,
    }
}

fn base_watchdog() -> WatchdogSection {
    WatchdogSection {
        phi_max: 1e5,
        j_max: 1e9,
        bkm_max: 1e4,
        theta_inf_max: 1e3,
        // spin-up from rest shows transient relative rates of ~50 on the
        // freshly started accumulators; runaway runs sit in the thousands
        growth_rate: 500.0,
        window: 4,
    }
}

/// Full default configuration of a named preset.
pub fn preset_config(name: &str) -> Result<RunConfig> {
    let file = match name {
        "trivial" => ConfigFile {
            params: SimParams {
                mu: 0.1,
                lambda: 0.0,
                c_v: 1.0,
                r_gas: 1.0,
                k_heat: 0.1,
                d_diff: 0.1,
                q_heat: 1.0,
                k_rate: 1.0,
                e_act: 1.0,
                alpha: 0.5,
                g_grav: 0.0,
                q_sob: 6.0,
                dim: 1,
                strict_viscosity: false,
            },
            grid: GridSection {
                dim: 1,
                extents: vec![33],
                spacing: None,
                lengths: Some(vec![1.0]),
                origin: Some(vec![0.0]),
                bc_theta: "dirichlet_zero".into(),
                bc_phi: "zero_mean_periodic".into(),
            },
            run: base_run(0.02, 1e-3),
            ic: IcSection {
                preset: Some("trivial".into()),
                snapshot: None,
            },
            watchdog: base_watchdog(),
            continuation: None,
        },
        "hotspot" => ConfigFile {
            params: SimParams {
                mu: 0.15,
                lambda: 0.0,
                c_v: 1.0,
                r_gas: 1.0,
                k_heat: 0.05,
                d_diff: 0.05,
                q_heat: 5.0,
                k_rate: 2.0,
                e_act: 1.0,
                alpha: 0.5,
                g_grav: 0.0,
                q_sob: 6.0,
                dim: 1,
                strict_viscosity: false,
            },
            grid: GridSection {
                dim: 1,
                extents: vec![65],
                spacing: None,
                lengths: Some(vec![2.0]),
                origin: Some(vec![-1.0]),
                bc_theta: "dirichlet_zero".into(),
                bc_phi: "zero_mean_periodic".into(),
            },
            run: base_run(0.1, 5e-4),
            ic: IcSection {
                preset: Some("hotspot".into()),
                snapshot: None,
            },
            watchdog: base_watchdog(),
            continuation: None,
        },
        "vacuum-blob" => ConfigFile {
            params: SimParams {
                mu: 0.15,
                lambda: 0.0,
                c_v: 1.0,
                r_gas: 1.0,
                k_heat: 0.05,
                d_diff: 0.02,
                q_heat: 1.0,
                k_rate: 1.0,
                e_act: 0.5,
                alpha: 0.5,
                g_grav: 0.0,
                q_sob: 6.0,
                dim: 1,
                strict_viscosity: false,
            },
            grid: GridSection {
                dim: 1,
                extents: vec![65],
                spacing: None,
                lengths: Some(vec![2.0]),
                origin: Some(vec![-1.0]),
                bc_theta: "dirichlet_zero".into(),
                bc_phi: "zero_mean_periodic".into(),
            },
            run: base_run(0.016, 5e-4),
            ic: IcSection {
                preset: Some("vacuum-blob".into()),
                snapshot: None,
            },
            watchdog: base_watchdog(),
            continuation: None,
        },
        "collapse" => ConfigFile {
            params: SimParams {
                mu: 0.2,
                lambda: 0.0,
                c_v: 1.0,
                r_gas: 0.5,
                k_heat: 0.05,
                d_diff: 0.05,
                q_heat: 0.3,
                k_rate: 1.0,
                e_act: 0.5,
                alpha: 0.5,
                g_grav: 0.5,
                q_sob: 6.0,
                dim: 2,
                strict_viscosity: true,
            },
            grid: GridSection {
                dim: 2,
                extents: vec![33, 33],
                spacing: None,
                lengths: Some(vec![1.0, 1.0]),
                origin: Some(vec![0.0, 0.0]),
                bc_theta: "neumann_zero".into(),
                bc_phi: "zero_mean_periodic".into(),
            },
            run: base_run(0.08, 2.5e-3),
            ic: IcSection {
                preset: Some("collapse".into()),
                snapshot: None,
            },
            watchdog: base_watchdog(),
            continuation: None,
        },
        other => {
            return Err(SimError::Config(format!(
                "unknown preset '{other}'; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    RunConfig::from_config_file(file)
}

/// Evaluate a preset's initial fields on a grid. Dirichlet fields are
/// zeroed exactly on the boundary.
pub fn build_initial_data(name: &str, grid: &Arc<Grid>, _params: &SimParams) -> Result<InitialData> {
    let mut rho0;
    let mut theta0;
    let u0 = VectorField::zeros(grid);
    let mut z0;
    match name {
        "trivial" => {
            rho0 = Field::constant(grid, 1.0);
            theta0 = Field::zeros(grid);
            z0 = Field::zeros(grid);
        }
        "hotspot" => {
            rho0 = Field::constant(grid, 1.0);
            theta0 = Field::from_fn(grid, |x| 0.8 * (-x[0] * x[0] / 0.04).exp());
            z0 = Field::constant(grid, 1.0);
        }
        "vacuum-blob" => {
            rho0 = Field::from_fn(grid, |x| 0.8 * mollifier(x[0] / 0.5));
            theta0 = Field::from_fn(grid, |x| 0.3 * mollifier(x[0] / 0.25));
            z0 = Field::from_fn(grid, |x| 0.9 * mollifier(x[0] / 0.45));
        }
        "collapse" => {
            rho0 = Field::from_fn(grid, |x| {
                1.0 + 0.5
                    * (2.0 * std::f64::consts::PI * (x[0] - 0.5)).cos()
                    * (2.0 * std::f64::consts::PI * (x[1] - 0.5)).cos()
            });
            theta0 = Field::constant(grid, 0.5);
            z0 = Field::from_fn(grid, |x| {
                0.8 * (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin()
            });
        }
        other => {
            return Err(SimError::Config(format!(
                "unknown preset '{other}'; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    }
    // enforce exact boundary values for the Dirichlet fields
    let zero_boundary = |f: &mut Field| {
        let g = f.grid().clone();
        let data = f.data_mut();
        g.for_each_node(|c, idx| {
            if g.is_boundary(c) {
                data[idx] = 0.0;
            }
        });
    };
    zero_boundary(&mut z0);
    if grid.bc_theta == crate::grid::ScalarBc::DirichletZero {
        zero_boundary(&mut theta0);
    }
    // scrub round-off negatives from the analytic profiles
    rho0 = rho0.map(|v| v.max(0.0));
    theta0 = theta0.map(|v| v.max(0.0));
    z0 = z0.map(|v| v.clamp(0.0, 1.0));
    InitialData::new(rho0, theta0, u0, z0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitors::{check_compatibility, default_eps_vac, CompatVerdict};

    #[test]
    fn all_presets_build_and_validate() {
        for name in PRESET_NAMES {
            let cfg = preset_config(name).unwrap();
            let ics = build_initial_data(name, &cfg.grid, &cfg.params).unwrap();
            assert_eq!(ics.grid().dim(), cfg.params.dim, "{name}");
        }
        assert!(preset_config("nope").is_err());
    }

    #[test]
    fn presets_pass_the_compatibility_check() {
        for name in PRESET_NAMES {
            let cfg = preset_config(name).unwrap();
            let ics = build_initial_data(name, &cfg.grid, &cfg.params).unwrap();
            let rep = check_compatibility(&ics, &cfg.params, default_eps_vac(&ics.rho0));
            assert_eq!(
                rep.verdict,
                CompatVerdict::Compatible,
                "{name}: vacuum residual {}",
                rep.vacuum_residual
            );
        }
    }

    #[test]
    fn hotspot_reaction_is_active_from_the_start() {
        let cfg = preset_config("hotspot").unwrap();
        let ics = build_initial_data("hotspot", &cfg.grid, &cfg.params).unwrap();
        assert!(ics.theta0.max() > 0.01 * cfg.params.e_act);
        assert_eq!(ics.z0.interp([0.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn vacuum_blob_has_true_vacuum() {
        let cfg = preset_config("vacuum-blob").unwrap();
        let ics = build_initial_data("vacuum-blob", &cfg.grid, &cfg.params).unwrap();
        assert_eq!(ics.rho0.min(), 0.0);
        assert!(ics.rho0.max() > 0.5);
    }
}
