//! Physical and numerical constants of the model.

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

/// All physical constants of the flow model plus discretization controls.
///
/// Serialized keys mirror the field names below (`mu`, `lambda`, `c_v`, `R`,
/// `k_heat`, `D`, `q_heat`, `K_rate`, `E`, `alpha`, `G`, `q_sob`, `dim`,
/// `strict_viscosity`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimParams {
    /// Shear viscosity, > 0.
    pub mu: f64,
    /// Second (bulk-related) viscosity; constrained by `3*lambda + 2*mu >= 0`.
    #[serde(default)]
    pub lambda: f64,
    /// Specific heat at constant volume, > 0.
    pub c_v: f64,
    /// Gas constant in the polytropic law `p = R * rho * theta`, > 0.
    #[serde(rename = "R")]
    pub r_gas: f64,
    /// Heat conductivity, >= 0.
    pub k_heat: f64,
    /// Species diffusivity, > 0.
    #[serde(rename = "D")]
    pub d_diff: f64,
    /// Heat release per unit reacted mass, >= 0.
    pub q_heat: f64,
    /// Reaction-rate prefactor, >= 0.
    #[serde(rename = "K_rate")]
    pub k_rate: f64,
    /// Activation energy, > 0.
    #[serde(rename = "E")]
    pub e_act: f64,
    /// Rate-law temperature exponent; 1/2 by default.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Gravitational constant, >= 0 (0 disables self-gravity).
    #[serde(rename = "G", default)]
    pub g_grav: f64,
    /// Sobolev exponent used by the growth functionals, in (3, 6].
    #[serde(default = "default_q_sob")]
    pub q_sob: f64,
    /// Spatial dimension, 1..=3.
    pub dim: usize,
    /// Require the stronger viscosity relation `7*mu > lambda` used by the
    /// gradient-based breakdown monitor.
    #[serde(default)]
    pub strict_viscosity: bool,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_q_sob() -> f64 {
    6.0
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SimError::InvalidInput(m));
        if !(self.mu > 0.0) {
            return fail(format!("mu must be > 0, got {}", self.mu));
        }
        if 3.0 * self.lambda + 2.0 * self.mu < 0.0 {
            return fail(format!(
                "3*lambda + 2*mu must be >= 0, got {}",
                3.0 * self.lambda + 2.0 * self.mu
            ));
        }
        if !(self.c_v > 0.0) {
            return fail(format!("c_v must be > 0, got {}", self.c_v));
        }
        if !(self.r_gas > 0.0) {
            return fail(format!("R must be > 0, got {}", self.r_gas));
        }
        if self.k_heat < 0.0 {
            return fail(format!("k_heat must be >= 0, got {}", self.k_heat));
        }
        if !(self.d_diff > 0.0) {
            return fail(format!("D must be > 0, got {}", self.d_diff));
        }
        if self.q_heat < 0.0 {
            return fail(format!("q_heat must be >= 0, got {}", self.q_heat));
        }
        if self.k_rate < 0.0 {
            return fail(format!("K_rate must be >= 0, got {}", self.k_rate));
        }
        if !(self.e_act > 0.0) {
            return fail(format!("E must be > 0, got {}", self.e_act));
        }
        if self.alpha < 0.0 {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.g_grav < 0.0 {
            return fail(format!("G must be >= 0, got {}", self.g_grav));
        }
        if !(self.q_sob > 3.0 && self.q_sob <= 6.0) {
            return fail(format!("q_sob must lie in (3, 6], got {}", self.q_sob));
        }
        if !(1..=3).contains(&self.dim) {
            return fail(format!("dim must be 1..=3, got {}", self.dim));
        }
        if self.strict_viscosity && !(7.0 * self.mu > self.lambda) {
            return fail(format!(
                "strict viscosity requires 7*mu > lambda (mu={}, lambda={})",
                self.mu, self.lambda
            ));
        }
        Ok(())
    }

    /// Reasonable defaults for unit-scale test problems.
    pub fn test_defaults(dim: usize) -> SimParams {
        SimParams {
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
            dim,
            strict_viscosity: false,
        }
    }
}
