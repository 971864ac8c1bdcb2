//! Density transport by backward characteristics.
//!
//! The linear transport equation with a known velocity field is solved
//! exactly along characteristics: the density at `(t, x)` is the initial
//! density at the characteristic foot point times the exponential of minus
//! the divergence accumulated along the path. The ODE for the foot point is
//! integrated backward with the midpoint rule while the divergence line
//! integral is accumulated with the trapezoidal rule.

use crate::error::{Result, SimError};
use crate::grid::{Field, Grid, VectorField, VelocityPath};
use crate::ops;
use std::sync::Arc;

/// Per-node characteristic data for one target time.
#[derive(Debug, Clone)]
pub struct CharacteristicTrace {
    grid: Arc<Grid>,
    /// Target time the trace was computed for.
    pub t_hi: f64,
    /// Time the backward integration stopped at.
    pub t_lo: f64,
    /// Foot point per node, clamped to the closed domain.
    pub feet: Vec<[f64; 3]>,
    /// Accumulated divergence line integral per node.
    pub div_integral: Vec<f64>,
    /// Number of ODE substeps that left the domain and were clamped.
    pub clamp_events: u64,
}

impl CharacteristicTrace {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Largest accumulated `|∫ div v|` over the grid.
    pub fn max_abs_div_integral(&self) -> f64 {
        self.div_integral.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

/// Backward-characteristic tracer for a fixed velocity path. Divergence
/// slices are computed once at construction and shared by every trace.
pub struct CharacteristicTracer<'a> {
    v: &'a VelocityPath,
    divs: Vec<Field>,
}

impl<'a> CharacteristicTracer<'a> {
    pub fn new(v: &'a VelocityPath) -> CharacteristicTracer<'a> {
        let divs = v.slices().iter().map(ops::divergence).collect();
        CharacteristicTracer { v, divs }
    }

    fn sample_div(&self, t: f64, x: [f64; 3]) -> f64 {
        let (i0, i1, w) = self.v.bracket(t);
        let d0 = self.divs[i0].interp(x);
        if i0 == i1 || w == 0.0 {
            return d0;
        }
        (1.0 - w) * d0 + w * self.divs[i1].interp(x)
    }

    /// Trace every node backward from `t_hi` to `t_lo` with substep `dt_ode`.
    pub fn trace_between(&self, t_hi: f64, t_lo: f64, dt_ode: f64) -> Result<CharacteristicTrace> {
        if !(t_hi >= t_lo) || !(dt_ode > 0.0) {
            return Err(SimError::InvalidInput(format!(
                "trace needs t_hi >= t_lo and dt_ode > 0 (got {t_hi}, {t_lo}, {dt_ode})"
            )));
        }
        let grid = self.v.grid().clone();
        let span = t_hi - t_lo;
        let substeps = if span == 0.0 {
            0
        } else {
            (span / dt_ode).ceil() as usize
        };
        let step = if substeps > 0 { span / substeps as f64 } else { 0.0 };
        let n = grid.len();
        let mut feet = Vec::with_capacity(n);
        let mut div_integral = Vec::with_capacity(n);
        let mut clamp_events = 0u64;
        grid.for_each_node(|c, _| {
            let mut x = grid.node(c);
            let mut acc = 0.0;
            let mut s = t_hi;
            let mut d_here = self.sample_div(s, x);
            for _ in 0..substeps {
                // midpoint step backward in time for dU/ds = v(s, U)
                let v0 = self.v.sample(s, x);
                let xm = [
                    x[0] - 0.5 * step * v0[0],
                    x[1] - 0.5 * step * v0[1],
                    x[2] - 0.5 * step * v0[2],
                ];
                let (xm, _) = grid.clamp_point(xm);
                let vm = self.v.sample(s - 0.5 * step, xm);
                let mut x1 = [
                    x[0] - step * vm[0],
                    x[1] - step * vm[1],
                    x[2] - step * vm[2],
                ];
                let (clamped_x, was_clamped) = grid.clamp_point(x1);
                x1 = clamped_x;
                if was_clamped {
                    clamp_events += 1;
                }
                let s1 = s - step;
                let d_next = self.sample_div(s1, x1);
                acc += 0.5 * step * (d_here + d_next);
                x = x1;
                s = s1;
                d_here = d_next;
            }
            feet.push(x);
            div_integral.push(acc);
        });
        if div_integral.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite("divergence line integral".into()));
        }
        Ok(CharacteristicTrace {
            grid,
            t_hi,
            t_lo,
            feet,
            div_integral,
            clamp_events,
        })
    }
}

/// Trace all characteristics backward from time `t` to 0.
pub fn trace_characteristics(
    v_path: &VelocityPath,
    t: f64,
    dt_ode: f64,
) -> Result<CharacteristicTrace> {
    CharacteristicTracer::new(v_path).trace_between(t, 0.0, dt_ode)
}

/// Advance the density from the trace's lower time to its upper time:
/// composition with the foot points times the divergence exponential.
/// `rho_lo` must be the density at the trace's lower time. Output is
/// nonnegative whenever `rho_lo` is (convex interpolation, positive
/// exponential).
pub fn advance_density(rho_lo: &Field, trace: &CharacteristicTrace) -> Result<Field> {
    if rho_lo.grid().as_ref() != trace.grid().as_ref() {
        return Err(SimError::Rejected("density grid does not match trace grid".into()));
    }
    let grid = trace.grid().clone();
    let mut out = Field::zeros(&grid);
    for (i, (foot, integral)) in trace.feet.iter().zip(&trace.div_integral).enumerate() {
        out.data_mut()[i] = rho_lo.interp(*foot) * (-integral).exp();
    }
    Ok(out)
}

/// First-order upwind finite-volume step of the conservation form with zero
/// boundary flux. Nodes own trapezoidal cells (half width at the domain
/// boundary), so the weighted total mass is conserved exactly by telescoping
/// fluxes; the update is the independent cross-check of the characteristics
/// path.
pub fn conservative_update_oracle(rho_n: &Field, v: &VectorField, dt: f64) -> Result<Field> {
    let grid = rho_n.grid().clone();
    if v.grid().as_ref() != grid.as_ref() {
        return Err(SimError::Rejected("velocity grid does not match density grid".into()));
    }
    let vmax = v.max_abs();
    let hmin = (0..grid.dim()).map(|a| grid.spacing()[a]).fold(f64::INFINITY, f64::min);
    let cfl = dt * vmax / hmin;
    if cfl > 0.9 {
        return Err(SimError::Rejected(format!(
            "CFL {cfl:.3} exceeds 0.9; largest admissible dt is {:.6e}",
            0.9 * hmin / vmax
        )));
    }
    let mut out = rho_n.clone();
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let comp = v.comp(axis);
        let shape = grid.shape();
        grid.for_each_node(|c, idx| {
            // flux difference across the two faces of node c along `axis`
            let flux_at = |left: [usize; 3], right: [usize; 3]| -> f64 {
                let vf = 0.5 * (comp.at(left) + comp.at(right));
                if vf > 0.0 {
                    vf * rho_n.at(left)
                } else {
                    vf * rho_n.at(right)
                }
            };
            let mut div_flux = 0.0;
            if c[axis] + 1 < shape[axis] {
                let mut right = c;
                right[axis] += 1;
                div_flux += flux_at(c, right);
            }
            if c[axis] > 0 {
                let mut left = c;
                left[axis] -= 1;
                div_flux -= flux_at(left, c);
            }
            // boundary nodes own half a cell along this axis
            let cell = if c[axis] == 0 || c[axis] + 1 == shape[axis] {
                0.5 * h
            } else {
                h
            };
            out.data_mut()[idx] -= dt * div_flux / cell;
        });
    }
    Ok(out)
}
