//! Run configuration: structured text (TOML) with sections mirroring the
//! parameter and grid field names, plus run, initial-condition and watchdog
//! controls.

use crate::error::{Result, SimError};
use crate::grid::{Grid, PhiBc, ScalarBc};
use crate::monitors::WatchdogThresholds;
use crate::params::SimParams;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Deserialize)]
pub struct GridSection {
    pub dim: usize,
    /// Nodes per axis.
    pub extents: Vec<usize>,
    /// Node spacing per axis; alternatively give `lengths`.
    #[serde(default)]
    pub spacing: Option<Vec<f64>>,
    /// Domain extent per axis; spacing is derived as length / (n - 1).
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
    #[serde(default)]
    pub origin: Option<Vec<f64>>,
    #[serde(default = "default_bc_theta")]
    pub bc_theta: String,
    #[serde(default = "default_bc_phi")]
    pub bc_phi: String,
}

fn default_bc_theta() -> String {
    "dirichlet_zero".into()
}

fn default_bc_phi() -> String {
    "zero_mean_periodic".into()
}

impl GridSection {
    pub fn build(&self) -> Result<Arc<Grid>> {
        let bc_theta = match self.bc_theta.as_str() {
            "dirichlet_zero" => ScalarBc::DirichletZero,
            "neumann_zero" => ScalarBc::NeumannZero,
            other => {
                return Err(SimError::Config(format!(
                    "unknown bc_theta '{other}' (dirichlet_zero | neumann_zero)"
                )))
            }
        };
        let bc_phi = match self.bc_phi.as_str() {
            "zero_mean_periodic" => PhiBc::ZeroMeanPeriodic,
            "dirichlet_zero" => PhiBc::DirichletZero,
            "free_space_green" => PhiBc::FreeSpaceGreen,
            other => {
                return Err(SimError::Config(format!(
                    "unknown bc_phi '{other}' (zero_mean_periodic | dirichlet_zero | free_space_green)"
                )))
            }
        };
        let spacing = match (&self.spacing, &self.lengths) {
            (Some(s), None) => s.clone(),
            (None, Some(l)) => {
                if l.len() != self.extents.len() {
                    return Err(SimError::Config("lengths/extents size mismatch".into()));
                }
                l.iter()
                    .zip(&self.extents)
                    .map(|(&len, &n)| len / (n as f64 - 1.0))
                    .collect()
            }
            (Some(_), Some(_)) => {
                return Err(SimError::Config("give spacing or lengths, not both".into()))
            }
            (None, None) => return Err(SimError::Config("grid needs spacing or lengths".into())),
        };
        let origin = self.origin.clone().unwrap_or_else(|| vec![0.0; self.dim]);
        Grid::new(self.dim, &self.extents, &spacing, &origin, bc_theta, bc_phi)
            .map_err(|e| SimError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunSection {
    /// Final time.
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iter")]
    pub picard_max_iter: usize,
    /// whole_interval | per_step | auto (whole interval up to 512 slices).
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_cadence")]
    pub snapshot_cadence: usize,
    /// Characteristic-ODE substeps per dt.
    #[serde(default = "default_substeps")]
    pub ode_substeps: usize,
    /// Inner velocity refreshes per step in per-step mode.
    #[serde(default = "default_inner")]
    pub per_step_inner_iters: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    30
}

fn default_mode() -> String {
    "auto".into()
}

fn default_cadence() -> usize {
    50
}

fn default_substeps() -> usize {
    4
}

fn default_inner() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct IcSection {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct WatchdogSection {
    pub phi_max: f64,
    pub j_max: f64,
    pub bkm_max: f64,
    pub theta_inf_max: f64,
    pub growth_rate: f64,
    pub window: usize,
}

impl Default for WatchdogSection {
    fn default() -> Self {
        let d = WatchdogThresholds::default();
        WatchdogSection {
            phi_max: d.phi_max,
            j_max: d.j_max,
            bkm_max: d.bkm_max,
            theta_inf_max: d.theta_inf_max,
            growth_rate: d.growth_rate,
            window: d.window,
        }
    }
}

impl WatchdogSection {
    pub fn thresholds(&self) -> WatchdogThresholds {
        WatchdogThresholds {
            phi_max: self.phi_max,
            j_max: self.j_max,
            bkm_max: self.bkm_max,
            theta_inf_max: self.theta_inf_max,
            growth_rate: self.growth_rate,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct ContinuationSection {
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

fn default_deltas() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConfigFile {
    pub params: SimParams,
    pub grid: GridSection,
    pub run: RunSection,
    #[serde(default)]
    pub ic: IcSection,
    #[serde(default)]
    pub watchdog: WatchdogSection,
    #[serde(default)]
    pub continuation: Option<ContinuationSection>,
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: SimParams,
    pub grid: Arc<Grid>,
    pub run: RunSection,
    pub ic: IcSection,
    pub thresholds: WatchdogThresholds,
    pub continuation_deltas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    WholeInterval,
    PerStep,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        RunConfig::from_config_file(file)
    }

    pub fn from_config_file(file: ConfigFile) -> Result<RunConfig> {
        file.params
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let grid = file.grid.build()?;
        if grid.dim() != file.params.dim {
            return Err(SimError::Config(format!(
                "grid dim {} does not match params dim {}",
                grid.dim(),
                file.params.dim
            )));
        }
        let run = file.run;
        if !(run.t_final > 0.0) {
            return Err(SimError::Config("T must be positive".into()));
        }
        if !(run.dt > 0.0) {
            return Err(SimError::Config("dt must be positive".into()));
        }
        if run.snapshot_cadence == 0 {
            return Err(SimError::Config("snapshot_cadence must be >= 1".into()));
        }
        match run.mode.as_str() {
            "auto" | "whole_interval" | "per_step" => {}
            other => {
                return Err(SimError::Config(format!(
                    "unknown mode '{other}' (auto | whole_interval | per_step)"
                )))
            }
        }
        if file.ic.preset.is_some() && file.ic.snapshot.is_some() {
            return Err(SimError::Config(
                "give ic.preset or ic.snapshot, not both".into(),
            ));
        }
        let continuation_deltas = file
            .continuation
            .map(|c| c.deltas)
            .unwrap_or_else(default_deltas);
        Ok(RunConfig {
            params: file.params,
            grid,
            run,
            ic: file.ic,
            thresholds: file.watchdog.thresholds(),
            continuation_deltas,
        })
    }

    pub fn steps(&self) -> usize {
        (self.run.t_final / self.run.dt).round() as usize
    }

    /// Resolve the run mode: whole-interval iteration up to 512 slices,
    /// per-step beyond that.
    pub fn mode(&self) -> RunMode {
        match self.run.mode.as_str() {
            "whole_interval" => RunMode::WholeInterval,
            "per_step" => RunMode::PerStep,
            _ => {
                if self.steps() <= 512 {
                    RunMode::WholeInterval
                } else {
                    RunMode::PerStep
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[params]
mu = 0.15
lambda = 0.0
c_v = 1.0
R = 1.0
k_heat = 0.05
D = 0.05
q_heat = 5.0
K_rate = 2.0
E = 1.0
G = 0.0
dim = 1

[grid]
dim = 1
extents = [65]
lengths = [2.0]
origin = [-1.0]

[run]
T = 0.1
dt = 5e-4

[ic]
preset = "hotspot"
"#;

    #[test]
    fn parses_sample_with_defaults() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.params.alpha, 0.5);
        assert_eq!(cfg.params.q_sob, 6.0);
        assert_eq!(cfg.grid.shape()[0], 65);
        assert!((cfg.grid.spacing()[0] - 2.0 / 64.0).abs() < 1e-15);
        assert_eq!(cfg.run.picard_max_iter, 30);
        assert_eq!(cfg.steps(), 200);
        assert_eq!(cfg.mode(), RunMode::WholeInterval);
        assert_eq!(cfg.continuation_deltas, vec![1e-2, 1e-3, 1e-4]);
    }

    #[test]
    fn rejects_bad_dt_and_bad_bc() {
        let bad_dt = SAMPLE.replace("dt = 5e-4", "dt = 0.0");
        assert!(matches!(
            RunConfig::from_toml_str(&bad_dt),
            Err(SimError::Config(_))
        ));
        let bad_bc = SAMPLE.replace("origin = [-1.0]", "origin = [-1.0]\nbc_theta = \"weird\"");
        assert!(RunConfig::from_toml_str(&bad_bc).is_err());
    }

    #[test]
    fn per_step_mode_kicks_in_for_long_runs() {
        let long = SAMPLE.replace("T = 0.1", "T = 1.0");
        let cfg = RunConfig::from_toml_str(&long).unwrap();
        assert_eq!(cfg.steps(), 2000);
        assert_eq!(cfg.mode(), RunMode::PerStep);
    }
}
