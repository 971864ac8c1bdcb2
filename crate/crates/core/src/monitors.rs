//! Initial-data compatibility checking, per-step invariant auditing, and
//! breakdown watchdogs.
//!
//! The auditors only observe; they never alter a trajectory. A grid run
//! cannot certify an actual sup-norm blow-up, so the watchdogs trigger on
//! thresholds and trailing-window growth rates, and flag non-finite values
//! the moment they appear.

use crate::constitutive::{self, ArrheniusParams};
use crate::grid::{Field, ScalarBc, State, Trajectory, VectorField};
use crate::norms::{self, BlowupSeries};
use crate::ops;
use crate::params::SimParams;
use crate::picard::InitialData;

// ---------------------------------------------------------------------------
// compatibility of the initial data

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatVerdict {
    Compatible,
    Incompatible,
    /// The density vanishes identically: nothing to weigh against.
    Vacuous,
}

/// Default absolute tolerance on the residual fields inside the vacuum
/// region.
pub const VACUUM_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    /// Density-weighted heat residual, zero in the vacuum region.
    pub g1: Field,
    /// Density-weighted momentum residual, zero in the vacuum region.
    pub g2: VectorField,
    pub l2_g1: f64,
    pub l2_g2: f64,
    /// Sup over the vacuum region of both raw residual magnitudes.
    pub vacuum_residual: f64,
    pub vacuum_nodes: usize,
    pub verdict: CompatVerdict,
}

/// Default vacuum cut as a fraction of the peak initial density.
pub fn default_eps_vac(rho0: &Field) -> f64 {
    1e-10 * rho0.max().max(0.0)
}

/// Check the compatibility of the initial data: where the density is
/// positive the heat and momentum residuals must be square-integrable
/// against its inverse square root; where it vanishes the residuals
/// themselves must vanish.
pub fn check_compatibility(
    ics: &InitialData,
    params: &SimParams,
    eps_vac: f64,
) -> CompatibilityReport {
    let g = ics.grid().clone();
    let p0 = constitutive::pressure(&ics.rho0, &ics.theta0, params.r_gas);
    let q0 = constitutive::viscous_dissipation(&ics.u0, params.mu, params.lambda);
    let lap_theta = ops::laplacian(&ics.theta0, g.bc_theta);
    // raw residuals: r1 = -k lap(theta0) - Q(grad u0), r2 = L u0 + grad p0
    let r1 = lap_theta.zip(&q0, |lt, q| -params.k_heat * lt - q);
    let lame = constitutive::lame_apply(&ics.u0, params.mu, params.lambda);
    let grad_p0 = ops::gradient(&p0);
    let r2 = VectorField::from_comps(
        (0..g.dim())
            .map(|a| lame.comp(a).zip(grad_p0.comp(a), |l, gp| l + gp))
            .collect(),
    )
    .expect("dims");

    let mut g1 = Field::zeros(&g);
    let mut g2 = VectorField::zeros(&g);
    let mut vacuum_residual = 0.0f64;
    let mut vacuum_nodes = 0usize;
    g.for_each_node(|c, idx| {
        let rho = ics.rho0.data()[idx];
        if rho >= eps_vac && rho > 0.0 {
            let w = rho.sqrt();
            g1.data_mut()[idx] = r1.data()[idx] / w;
            for a in 0..g.dim() {
                g2.comp_mut(a).data_mut()[idx] = r2.comp(a).at(c) / w;
            }
        } else {
            vacuum_nodes += 1;
            vacuum_residual = vacuum_residual.max(r1.data()[idx].abs());
            for a in 0..g.dim() {
                vacuum_residual = vacuum_residual.max(r2.comp(a).data()[idx].abs());
            }
        }
    });
    let l2_g1 = norms::lp_norm(&g1, 2.0);
    let l2_g2 = norms::lp_norm_vec(&g2, 2.0);
    let verdict = if ics.rho0.max() <= 0.0 {
        CompatVerdict::Vacuous
    } else if vacuum_residual <= VACUUM_RESIDUAL_TOL && l2_g1.is_finite() && l2_g2.is_finite() {
        CompatVerdict::Compatible
    } else {
        CompatVerdict::Incompatible
    };
    CompatibilityReport {
        g1,
        g2,
        l2_g1,
        l2_g2,
        vacuum_residual,
        vacuum_nodes,
        verdict,
    }
}

// ---------------------------------------------------------------------------
// invariant audit

/// Temperature floor below which entropy terms are skipped (log and inverse
/// temperature are singular there).
pub const THETA_FLOOR: f64 = 1e-12;

/// Per-step record of the conserved/monotone quantities and breakdown
/// functionals of a trajectory, plus any tolerance violations found.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsSeries {
    pub time: Vec<f64>,
    pub mass: Vec<f64>,
    pub min_rho: Vec<f64>,
    pub max_rho: Vec<f64>,
    pub min_theta: Vec<f64>,
    pub max_theta: Vec<f64>,
    pub min_z: Vec<f64>,
    pub max_z: Vec<f64>,
    pub int_rho_z: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub bkm_grad_u: Vec<f64>,
    pub bkm_grad_z: Vec<f64>,
    pub sup_theta: Vec<f64>,
    /// Weighted mass-fraction energy plus accumulated gradient dissipation.
    pub z_energy: Vec<f64>,
    /// Nonnegative entropy production integral per step (0 for the first
    /// slice).
    pub entropy_production: Vec<f64>,
    /// Signed residual of the integrated entropy balance per step.
    pub entropy_residual: Vec<f64>,
    /// Nodes skipped by the entropy evaluation (temperature under the floor).
    pub entropy_skipped: Vec<usize>,
    /// Event annotations per row, empty string when quiet.
    pub events: Vec<String>,
    /// Human-readable invariant violations, empty when the run is clean.
    pub violations: Vec<String>,
    /// Which temperature boundary condition was active.
    pub theta_bc_name: String,
}

impl DiagnosticsSeries {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Relative mass drift between the first and last slice.
    pub fn mass_drift(&self) -> f64 {
        if self.mass.len() < 2 || self.mass[0] == 0.0 {
            return 0.0;
        }
        ((self.mass[self.mass.len() - 1] - self.mass[0]) / self.mass[0]).abs()
    }

    /// Flat tab-delimited table with a fixed column set and formatting, so
    /// identical runs produce byte-identical output.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "time\tmass\tmin_rho\tmax_rho\tmin_theta\tmax_theta\tmin_Z\tmax_Z\tint_rhoZ\tphi_t\tbkm_grad_u\tbkm_grad_Z\tsup_theta\tevents\n",
        );
        for i in 0..self.len() {
            let ev = if self.events[i].is_empty() {
                "-"
            } else {
                &self.events[i]
            };
            out.push_str(&format!(
                "{:.9e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{}\n",
                self.time[i],
                self.mass[i],
                self.min_rho[i],
                self.max_rho[i],
                self.min_theta[i],
                self.max_theta[i],
                self.min_z[i],
                self.max_z[i],
                self.int_rho_z[i],
                self.phi_t[i],
                self.bkm_grad_u[i],
                self.bkm_grad_z[i],
                self.sup_theta[i],
                ev
            ));
        }
        out
    }
}

/// Plain cell-weighted integral of `rho * f` over the grid (finite-volume
/// mass bookkeeping: trapezoidal node weights).
fn weighted_integral(rho: &Field, f: &Field) -> f64 {
    norms::integral(&rho.zip(f, |r, x| r * x))
}

/// Face-difference gradient energy with homogeneous Dirichlet walls; the
/// quantity the implicit diffusion steps dissipate exactly.
pub fn face_gradient_energy(f: &Field) -> f64 {
    let g = f.grid();
    let hv = g.cell_volume();
    let mut total = 0.0;
    for axis in 0..g.dim() {
        let h = g.spacing()[axis];
        g.for_each_node(|c, _| {
            if c[axis] + 1 < g.shape()[axis] {
                let mut hi = c;
                hi[axis] += 1;
                let d = (f.at(hi) - f.at(c)) / h;
                total += d * d * hv;
            }
        });
    }
    total
}

/// Audit every inequality the scheme is supposed to preserve along a
/// trajectory and record the monitored series. Violations beyond the stated
/// tolerances are reported as strings, not panics.
pub fn invariant_audit(traj: &Trajectory, params: &SimParams) -> DiagnosticsSeries {
    let dt = traj.dt();
    let states = traj.states();
    let g = states[0].grid().clone();
    let arr = ArrheniusParams::new(params.alpha, params.e_act);
    let mut d = DiagnosticsSeries {
        theta_bc_name: match g.bc_theta {
            ScalarBc::DirichletZero => "dirichlet_zero".into(),
            ScalarBc::NeumannZero => "neumann_zero".into(),
        },
        ..Default::default()
    };
    let theta0_nonneg = states[0].theta.min() >= 0.0;
    let rho0_min = states[0].rho.min();
    let rho0_max = states[0].rho.max();
    let velocity_free = states.iter().all(|s| s.u.max_abs() == 0.0);

    let mut series = BlowupSeries::new();
    let mut z_grad_accum = 0.0;
    let mut div_u_accum: f64 = 0.0; // envelope exponent
    let mut prev_div_inf = 0.0;
    let mut prev_int_rho_z = f64::INFINITY;
    let mut prev_z_energy = f64::INFINITY;

    for (n, s) in states.iter().enumerate() {
        if !s.is_all_finite() {
            d.violations
                .push(format!("step {n}: non-finite state value"));
        }
        norms::bkm_accumulate(&mut series, s, dt, params.q_sob)
            .expect("states arrive in time order");

        d.time.push(s.time);
        d.mass.push(norms::integral(&s.rho));
        d.min_rho.push(s.rho.min());
        d.max_rho.push(s.rho.max());
        d.min_theta.push(s.theta.min());
        d.max_theta.push(s.theta.max());
        d.min_z.push(s.z.min());
        d.max_z.push(s.z.max());
        let int_rz = weighted_integral(&s.rho, &s.z);
        d.int_rho_z.push(int_rz);
        d.phi_t.push(*series.phi.last().unwrap());
        d.sup_theta.push(series.sup_theta);
        // accumulators exclude the current slice (left-endpoint rule)
        let grad_u_inf = series.int_grad_u
            - norms::lp_norm(&jacobian_magnitude(&s.u), f64::INFINITY) * dt;
        let grad_z_inf = series.int_grad_z
            - norms::lp_norm_vec(&ops::gradient(&s.z), f64::INFINITY) * dt;
        d.bkm_grad_u.push(grad_u_inf.max(0.0));
        d.bkm_grad_z.push(grad_z_inf.max(0.0));

        // mass-fraction bounds
        if s.z.min() < -1e-10 || s.z.max() > 1.0 + 1e-10 {
            d.violations.push(format!(
                "step {n}: mass fraction out of [0,1]: [{}, {}]",
                s.z.min(),
                s.z.max()
            ));
        }
        // density nonnegativity
        if s.rho.min() < -1e-10 {
            d.violations
                .push(format!("step {n}: negative density {}", s.rho.min()));
        }
        // temperature positivity (only meaningful when it held initially)
        if theta0_nonneg && s.theta.min() < -1e-10 {
            d.violations
                .push(format!("step {n}: negative temperature {}", s.theta.min()));
        }
        // two-sided density envelope from the accumulated dilation: on each
        // step the transport velocity is a convex time-combination of the
        // bracketing slices, so the max of their divergence sup norms bounds
        // the line integral; the relative slack absorbs the gap between the
        // audited velocity and the frozen iterate that actually moved the
        // density
        let div_inf_here = norms::lp_norm(&ops::divergence(&s.u), f64::INFINITY);
        if n > 0 {
            div_u_accum += dt * div_inf_here.max(prev_div_inf);
        }
        prev_div_inf = div_inf_here;
        let slack = 1e-3 * rho0_max.max(1.0);
        let lo = rho0_min * (-div_u_accum).exp();
        let hi = rho0_max * div_u_accum.exp();
        if s.rho.min() < lo - slack || s.rho.max() > hi + slack {
            d.violations.push(format!(
                "step {n}: density escaped the dilation envelope [{lo}, {hi}]: [{}, {}]",
                s.rho.min(),
                s.rho.max()
            ));
        }

        // weighted reactant mass must not grow
        if n > 0 {
            let allowance = 1e-12 * prev_int_rho_z.abs().max(1e-300);
            if int_rz > prev_int_rho_z + allowance {
                d.violations.push(format!(
                    "step {n}: weighted reactant mass grew from {prev_int_rho_z} to {int_rz}"
                ));
            }
        }
        prev_int_rho_z = int_rz;

        // mass-fraction energy (checked only in diffusion-only runs where
        // the implicit step dissipates it exactly): half the weighted
        // square norm plus the dissipation accumulated through this slice
        let rho_floor = 1e-12 * rho0_max.max(1.0);
        if n > 0 {
            z_grad_accum += params.d_diff * dt * face_gradient_energy(&s.z);
        }
        let half_sq =
            0.5 * norms::integral(&s.rho.zip(&s.z, |r, z| r.max(rho_floor) * z * z));
        let energy = half_sq + z_grad_accum;
        if n > 0 && velocity_free && energy > prev_z_energy + 1e-9 {
            d.violations.push(format!(
                "step {n}: mass-fraction energy grew from {prev_z_energy} to {energy}"
            ));
        }
        d.z_energy.push(energy);
        prev_z_energy = energy;

        // entropy bookkeeping
        if n == 0 {
            d.entropy_production.push(0.0);
            d.entropy_residual.push(0.0);
            d.entropy_skipped.push(0);
        } else {
            let prev = &states[n - 1];
            let (prod, resid, skipped) = entropy_step(prev, s, params, arr, dt);
            if prod < -1e-10 {
                d.violations
                    .push(format!("step {n}: negative entropy production {prod}"));
            }
            d.entropy_production.push(prod);
            d.entropy_residual.push(resid);
            d.entropy_skipped.push(skipped);
        }
        d.events.push(String::new());
    }
    d
}

fn jacobian_magnitude(u: &VectorField) -> Field {
    let jac = ops::jacobian(u);
    let g = u.grid().clone();
    let mut out = Field::zeros(&g);
    for row in &jac {
        for comp in row.comps() {
            for (o, &v) in out.data_mut().iter_mut().zip(comp.data()) {
                *o += v * v;
            }
        }
    }
    for o in out.data_mut().iter_mut() {
        *o = o.sqrt();
    }
    out
}

/// Entropy production integral and signed balance residual over one step,
/// skipping nodes with temperature under the floor.
fn entropy_step(
    prev: &State,
    cur: &State,
    params: &SimParams,
    arr: ArrheniusParams,
    dt: f64,
) -> (f64, f64, usize) {
    let g = cur.grid().clone();
    let hv = g.cell_volume();
    let q = constitutive::viscous_dissipation(&cur.u, params.mu, params.lambda);
    let grad_th = ops::gradient(&cur.theta);
    let div_u = ops::divergence(&cur.u);
    let mut production = 0.0;
    let mut dilation = 0.0;
    let mut entropy_cur = 0.0;
    let mut entropy_prev = 0.0;
    let mut skipped = 0usize;
    g.for_each_node(|c, i| {
        let w = norms::quad_weight(&g, c) * hv;
        let th = cur.theta.data()[i];
        let th_p = prev.theta.data()[i];
        if th < THETA_FLOOR || th_p < THETA_FLOOR {
            skipped += 1;
            return;
        }
        let mut grad_sq = 0.0;
        for a in 0..g.dim() {
            let gx = grad_th.comp(a).data()[i];
            grad_sq += gx * gx;
        }
        production += w
            * (q.data()[i] / th
                + params.k_heat * grad_sq / (th * th)
                + cur.rho.data()[i]
                    * params.q_heat
                    * params.k_rate
                    * constitutive::arrhenius(th, arr)
                    * cur.z.data()[i]
                    / th);
        dilation += w * params.r_gas * cur.rho.data()[i] * div_u.data()[i];
        entropy_cur += w * cur.rho.data()[i] * th.ln();
        entropy_prev += w * prev.rho.data()[i] * th_p.ln();
    });
    let residual = (entropy_cur - entropy_prev) / dt + dilation - production;
    (production, residual, skipped)
}

// ---------------------------------------------------------------------------
// watchdogs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WatchQuantity {
    Phi,
    J,
    Bkm,
    ThetaInf,
    Nan,
}

impl WatchQuantity {
    pub fn name(&self) -> &'static str {
        match self {
            WatchQuantity::Phi => "phi",
            WatchQuantity::J => "J",
            WatchQuantity::Bkm => "bkm",
            WatchQuantity::ThetaInf => "theta_inf",
            WatchQuantity::Nan => "nan",
        }
    }
}

#[derive(Debug, Clone)]
pub struct WatchdogEvent {
    pub time: f64,
    pub step: usize,
    pub quantity: WatchQuantity,
    pub value: f64,
    pub threshold: f64,
    /// Trailing-window growth rate at emission (0 for plain threshold and
    /// nan events).
    pub growth_rate: f64,
}

impl WatchdogEvent {
    pub fn label(&self) -> String {
        format!("{}@{:.6e}", self.quantity.name(), self.time)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WatchdogThresholds {
    pub phi_max: f64,
    pub j_max: f64,
    pub bkm_max: f64,
    pub theta_inf_max: f64,
    /// Exponential growth rate (1/time) that counts as runaway.
    pub growth_rate: f64,
    /// Trailing window length in steps for the growth estimate.
    pub window: usize,
}

impl Default for WatchdogThresholds {
    fn default() -> Self {
        WatchdogThresholds {
            phi_max: 1e4,
            j_max: 1e6,
            bkm_max: 1e4,
            theta_inf_max: 1e4,
            growth_rate: 50.0,
            window: 4,
        }
    }
}

/// Streaming scanner: feed states in time order, collect events. Threshold
/// and growth events fire once per quantity; a non-finite value fires a nan
/// event immediately.
pub struct WatchdogScanner {
    thresholds: WatchdogThresholds,
    q_sob: f64,
    series: BlowupSeries,
    history: Vec<(f64, [f64; 4])>,
    fired_threshold: std::collections::HashSet<WatchQuantity>,
    fired_growth: std::collections::HashSet<WatchQuantity>,
    nan_fired: bool,
    prev_state: Option<State>,
    j_integral: f64,
    step: usize,
    pub events: Vec<WatchdogEvent>,
}

impl WatchdogScanner {
    pub fn new(thresholds: WatchdogThresholds, q_sob: f64) -> WatchdogScanner {
        WatchdogScanner {
            thresholds,
            q_sob,
            series: BlowupSeries::new(),
            history: Vec::new(),
            fired_threshold: std::collections::HashSet::new(),
            fired_growth: std::collections::HashSet::new(),
            nan_fired: false,
            prev_state: None,
            j_integral: 0.0,
            step: 0,
            events: Vec::new(),
        }
    }
}

impl WatchdogScanner {
    /// Record a non-finite observation directly (used by drivers when a
    /// sub-solver overflows before a state can even be formed).
    pub fn emit_nan(&mut self, time: f64) {
        let step = self.step;
        self.emit_nan_at(time, step);
    }

    fn emit_nan_at(&mut self, time: f64, step: usize) {
        if !self.nan_fired {
            self.nan_fired = true;
            self.events.push(WatchdogEvent {
                time,
                step,
                quantity: WatchQuantity::Nan,
                value: f64::NAN,
                threshold: f64::NAN,
                growth_rate: 0.0,
            });
        }
    }

    pub fn nan_seen(&self) -> bool {
        self.nan_fired
    }

    /// Feed the next state; returns how many events this observation added.
    pub fn observe(&mut self, s: &State, dt: f64) -> usize {
        let before = self.events.len();
        let step = self.step;
        self.step += 1;

        if !s.is_all_finite() {
            self.emit_nan_at(s.time, step);
            return self.events.len() - before;
        }
        if norms::bkm_accumulate(&mut self.series, s, dt, self.q_sob).is_err() {
            // out-of-order state: treat as a monitoring fault, not a crash
            self.emit_nan_at(s.time, step);
            return self.events.len() - before;
        }
        let phi = *self.series.phi.last().unwrap();
        let bkm = self.series.bkm_total();
        let theta_inf = norms::lp_norm(&s.theta, f64::INFINITY);
        let j = self.j_value(s, dt);
        let quantities = [
            (WatchQuantity::Phi, phi, self.thresholds.phi_max),
            (WatchQuantity::J, j, self.thresholds.j_max),
            (WatchQuantity::Bkm, bkm, self.thresholds.bkm_max),
            (
                WatchQuantity::ThetaInf,
                theta_inf,
                self.thresholds.theta_inf_max,
            ),
        ];
        if quantities.iter().any(|(_, v, _)| !v.is_finite()) {
            self.emit_nan_at(s.time, step);
            return self.events.len() - before;
        }
        for (q, value, threshold) in quantities {
            if value >= threshold && !self.fired_threshold.contains(&q) {
                self.fired_threshold.insert(q);
                self.events.push(WatchdogEvent {
                    time: s.time,
                    step,
                    quantity: q,
                    value,
                    threshold,
                    growth_rate: 0.0,
                });
            }
        }
        // trailing-window growth rates
        self.history.push((s.time, [phi, j, bkm, theta_inf]));
        let w = self.thresholds.window.max(1);
        if self.history.len() > w {
            let (t0, old) = self.history[self.history.len() - 1 - w];
            let (t1, new) = *self.history.last().unwrap();
            let span = t1 - t0;
            if span > 0.0 {
                let names = [
                    WatchQuantity::Phi,
                    WatchQuantity::J,
                    WatchQuantity::Bkm,
                    WatchQuantity::ThetaInf,
                ];
                for (i, q) in names.into_iter().enumerate() {
                    if old[i] > 0.0 && new[i] > 0.0 && !self.fired_growth.contains(&q) {
                        let rate = (new[i] / old[i]).ln() / span;
                        if rate >= self.thresholds.growth_rate {
                            self.fired_growth.insert(q);
                            self.events.push(WatchdogEvent {
                                time: s.time,
                                step,
                                quantity: q,
                                value: new[i],
                                threshold: self.thresholds.growth_rate,
                                growth_rate: rate,
                            });
                        }
                    }
                }
            }
        }
        self.prev_state = Some(s.clone());
        self.events.len() - before
    }

    /// Regularity-class functional: norms of the state, its discrete time
    /// derivatives against the previous state, and the running time
    /// integral of the gradient norms of those derivatives.
    fn j_value(&mut self, s: &State, dt: f64) -> f64 {
        let bc = s.grid().bc_theta;
        let q = self.q_sob;
        let mut j = 1.0 + norms::h1_w1q_norm(&s.rho, q);
        for f in [&s.theta, &s.z] {
            let h1 = norms::sobolev_norm(f, 1, 2.0, bc);
            let h2 = norms::sobolev_norm(f, 2, 2.0, bc);
            j += h1.max(h2);
            let w2q = norms::sobolev_norm(f, 2, q, bc);
            j += w2q * w2q;
            j += norms::lp_norm(&s.rho.zip(f, |r, x| r.max(0.0).sqrt() * x), 2.0);
        }
        let h1u = norms::sobolev_norm_vec(&s.u, 1, 2.0, ScalarBc::DirichletZero);
        let h2u = norms::sobolev_norm_vec(&s.u, 2, 2.0, ScalarBc::DirichletZero);
        j += h1u.max(h2u);
        let w2qu = norms::sobolev_norm_vec(&s.u, 2, q, ScalarBc::DirichletZero);
        j += w2qu * w2qu;
        let mut u_mag_sq = Field::zeros(s.grid());
        for a in 0..s.u.dim() {
            for (o, &v) in u_mag_sq.data_mut().iter_mut().zip(s.u.comp(a).data()) {
                *o += v * v;
            }
        }
        j += norms::lp_norm(
            &s.rho.zip(&u_mag_sq, |r, m| r.max(0.0).sqrt() * m.sqrt()),
            2.0,
        );
        if let Some(prev) = &self.prev_state {
            let th_t = s.theta.zip(&prev.theta, |a, b| (a - b) / dt);
            let z_t = s.z.zip(&prev.z, |a, b| (a - b) / dt);
            let mut sum = norms::sobolev_norm(&th_t, 1, 2.0, bc)
                + norms::sobolev_norm(&z_t, 1, 2.0, bc);
            for a in 0..s.u.dim() {
                let u_t = s.u.comp(a).zip(prev.u.comp(a), |x, y| (x - y) / dt);
                sum += norms::sobolev_norm(&u_t, 1, 2.0, ScalarBc::DirichletZero);
            }
            let rho_t = s.rho.zip(&prev.rho, |a, b| (a - b) / dt);
            j += norms::lp_norm(&rho_t, 2.0).max(norms::lp_norm(&rho_t, q));
            self.j_integral += dt * sum;
        }
        j + self.j_integral
    }
}

/// Scan a completed trajectory in stream order.
pub fn watchdog_scan(
    traj: &Trajectory,
    thresholds: WatchdogThresholds,
    q_sob: f64,
) -> Vec<WatchdogEvent> {
    let mut scanner = WatchdogScanner::new(thresholds, q_sob);
    for s in traj.states() {
        scanner.observe(s, traj.dt());
    }
    scanner.events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, PhiBc, VelocityPath};
    use crate::picard::{self, IterationControls};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn line(n: usize) -> Arc<Grid> {
        Grid::line(n, 1.0 / (n as f64 - 1.0), 0.0).unwrap()
    }

    fn neumann_line(n: usize) -> Arc<Grid> {
        Grid::new(
            1,
            &[n],
            &[1.0 / (n as f64 - 1.0)],
            &[0.0],
            ScalarBc::NeumannZero,
            PhiBc::ZeroMeanPeriodic,
        )
        .unwrap()
    }

    fn zero_state(g: &Arc<Grid>, t: f64) -> State {
        State {
            time: t,
            rho: Field::constant(g, 1.0),
            theta: Field::zeros(g),
            u: VectorField::zeros(g),
            z: Field::zeros(g),
            phi: Field::zeros(g),
        }
    }

    #[test]
    fn compatibility_constant_density_zero_fields() {
        let g = line(17);
        let ics = InitialData::new(
            Field::constant(&g, 2.0),
            Field::zeros(&g),
            VectorField::zeros(&g),
            Field::zeros(&g),
        )
        .unwrap();
        let params = SimParams::test_defaults(1);
        let rep = check_compatibility(&ics, &params, default_eps_vac(&ics.rho0));
        assert_eq!(rep.verdict, CompatVerdict::Compatible);
        assert!(rep.l2_g1 < 1e-12);
        assert!(rep.l2_g2 < 1e-12);
        assert_eq!(rep.vacuum_nodes, 0);
    }

    #[test]
    fn compatibility_vacuum_with_harmonic_temperature() {
        // density supported on the left; temperature supported two nodes
        // inside the density support, so in the vacuum region the
        // temperature is (trivially) discrete harmonic and the pressure
        // never reaches a vacuum stencil: every vacuum residual is exactly
        // zero by construction
        let g = neumann_line(33);
        let rho0 = Field::from_fn(&g, |x| if x[0] <= 0.5 { (0.5 - x[0]) * 2.0 } else { 0.0 });
        let theta0 = Field::from_fn(&g, |x| {
            let s: f64 = (x[0] - 0.2) / 0.2;
            if s.abs() < 1.0 {
                0.3 * (1.0 - s * s).powi(2)
            } else {
                0.0
            }
        });
        let ics =
            InitialData::new(rho0, theta0, VectorField::zeros(&g), Field::zeros(&g)).unwrap();
        let params = SimParams::test_defaults(1);
        let rep = check_compatibility(&ics, &params, default_eps_vac(&ics.rho0));
        assert!(rep.vacuum_nodes > 0);
        assert!(
            rep.vacuum_residual < 1e-12,
            "vacuum residual {}",
            rep.vacuum_residual
        );
        assert_eq!(rep.verdict, CompatVerdict::Compatible);
        assert!(rep.l2_g1.is_finite() && rep.l2_g1 > 0.0);
    }

    #[test]
    fn compatibility_detects_momentum_residual_in_vacuum() {
        // velocity bump inside the vacuum region: the elliptic term does
        // not vanish there, so the data are incompatible
        let g = line(33);
        let rho0 = Field::from_fn(&g, |x| if x[0] < 0.4 { 1.0 } else { 0.0 });
        let u0 = VectorField::from_fn(&g, |x| {
            let s: f64 = (x[0] - 0.7) / 0.15;
            if s.abs() < 1.0 {
                [(1.0 - s * s).powi(2), 0.0, 0.0]
            } else {
                [0.0, 0.0, 0.0]
            }
        });
        let ics = InitialData::new(rho0, Field::zeros(&g), u0, Field::zeros(&g)).unwrap();
        let params = SimParams::test_defaults(1);
        let rep = check_compatibility(&ics, &params, default_eps_vac(&ics.rho0));
        assert_eq!(rep.verdict, CompatVerdict::Incompatible);
        assert!(rep.vacuum_residual > 1e-3);
    }

    #[test]
    fn compatibility_vacuous_when_density_identically_zero() {
        let g = line(9);
        let ics = InitialData::new(
            Field::zeros(&g),
            Field::zeros(&g),
            VectorField::zeros(&g),
            Field::zeros(&g),
        )
        .unwrap();
        let params = SimParams::test_defaults(1);
        let rep = check_compatibility(&ics, &params, 1e-10);
        assert_eq!(rep.verdict, CompatVerdict::Vacuous);
    }

    #[test]
    fn compatibility_scales_as_expected_under_velocity_doubling() {
        // with theta0 = 0 the heat residual is pure dissipation (quadratic
        // in u0) and the momentum residual is the elliptic term (linear)
        let g = line(33);
        let rho0 = Field::constant(&g, 1.5);
        let u0 = VectorField::from_fn(&g, |x| [0.2 * (PI * x[0]).sin(), 0.0, 0.0]);
        let u0x2 = VectorField::from_fn(&g, |x| [0.4 * (PI * x[0]).sin(), 0.0, 0.0]);
        let params = SimParams::test_defaults(1);
        let ics1 = InitialData::new(
            rho0.clone(),
            Field::zeros(&g),
            u0,
            Field::zeros(&g),
        )
        .unwrap();
        let ics2 = InitialData::new(rho0, Field::zeros(&g), u0x2, Field::zeros(&g)).unwrap();
        let r1 = check_compatibility(&ics1, &params, 1e-12);
        let r2 = check_compatibility(&ics2, &params, 1e-12);
        assert!(
            (r2.l2_g1 - 4.0 * r1.l2_g1).abs() < 1e-10 * r1.l2_g1.max(1.0),
            "dissipation part should scale quadratically: {} vs {}",
            r2.l2_g1,
            r1.l2_g1
        );
        assert!(
            (r2.l2_g2 - 2.0 * r1.l2_g2).abs() < 1e-10 * r1.l2_g2.max(1.0),
            "elliptic part should scale linearly: {} vs {}",
            r2.l2_g2,
            r1.l2_g2
        );
    }

    #[test]
    fn audit_trivial_run_is_clean_and_constant() {
        let g = line(17);
        let ics = picard::InitialData::new(
            Field::constant(&g, 1.0),
            Field::zeros(&g),
            VectorField::zeros(&g),
            Field::zeros(&g),
        )
        .unwrap();
        let params = SimParams::test_defaults(1);
        let controls = IterationControls::default();
        let report =
            picard::picard_iterate(&ics, &params, 0.03, 0.01, 1e-10, 5, &controls, None).unwrap();
        let d = invariant_audit(&report.trajectory, &params);
        assert!(d.violations.is_empty(), "violations: {:?}", d.violations);
        for w in d.mass.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
        assert!(d.phi_t.iter().all(|&p| (p - d.phi_t[0]).abs() < 1e-9));
        assert_eq!(d.theta_bc_name, "dirichlet_zero");
    }

    #[test]
    fn audit_pure_diffusion_keeps_reactant_mass_and_dissipates_energy() {
        // theta = 0 everywhere: no reaction; Z bump away from the walls so
        // no boundary outflux either; weighted mass stays, energy falls
        let g = line(65);
        let z0 = Field::from_fn(&g, |x| {
            let s: f64 = (x[0] - 0.5) / 0.2;
            if s.abs() < 1.0 {
                0.9 * (1.0 - s * s).powi(3)
            } else {
                0.0
            }
        });
        let ics = picard::InitialData::new(
            Field::constant(&g, 1.0),
            Field::zeros(&g),
            VectorField::zeros(&g),
            z0,
        )
        .unwrap();
        let mut params = SimParams::test_defaults(1);
        params.d_diff = 0.05;
        params.q_heat = 0.0;
        let controls = IterationControls::default();
        let v = VelocityPath::stationary(VectorField::zeros(&g), 0.002);
        let traj =
            picard::linearized_sweep(&v, &ics, &params, 0.01, 0.002, &controls, None).unwrap();
        let d = invariant_audit(&traj, &params);
        assert!(d.violations.is_empty(), "violations: {:?}", d.violations);
        // reactant mass constant (no reaction, no boundary flux yet)
        let drift = (d.int_rho_z.last().unwrap() - d.int_rho_z[0]).abs() / d.int_rho_z[0];
        assert!(drift < 1e-10, "reactant drift {drift}");
        // energy strictly decreasing
        for w in d.z_energy.windows(2) {
            assert!(w[1] < w[0], "energy did not fall: {:?}", d.z_energy);
        }
    }

    #[test]
    fn audit_reactive_run_burns_reactant() {
        let g = line(33);
        let ics = picard::InitialData::new(
            Field::constant(&g, 1.0),
            Field::from_fn(&g, |x| 0.8 * (PI * x[0]).sin()),
            VectorField::zeros(&g),
            Field::from_fn(&g, |x| 0.9 * (PI * x[0]).sin()),
        )
        .unwrap();
        let mut params = SimParams::test_defaults(1);
        params.k_rate = 2.0;
        params.e_act = 0.5;
        let controls = IterationControls::default();
        let v = VelocityPath::stationary(VectorField::zeros(&g), 0.005);
        let traj =
            picard::linearized_sweep(&v, &ics, &params, 0.025, 0.005, &controls, None).unwrap();
        let d = invariant_audit(&traj, &params);
        for w in d.int_rho_z.windows(2) {
            assert!(w[1] < w[0], "reactant mass not strictly decreasing");
        }
        assert!(d.entropy_production[1..].iter().all(|&p| p >= 0.0));
        assert!(d.violations.is_empty(), "violations: {:?}", d.violations);
    }

    #[test]
    fn watchdog_calm_stream_is_quiet() {
        let g = line(17);
        let mut scanner = WatchdogScanner::new(WatchdogThresholds::default(), 6.0);
        for n in 0..10 {
            let mut s = zero_state(&g, n as f64 * 0.1);
            s.theta = Field::from_fn(&g, |x| 0.1 * (PI * x[0]).sin());
            scanner.observe(&s, 0.1);
        }
        assert!(scanner.events.is_empty());
    }

    #[test]
    fn watchdog_doubling_gradient_fires_growth_before_threshold_is_far() {
        let g = line(17);
        let th = WatchdogThresholds {
            bkm_max: 1e12,
            phi_max: 1e12,
            j_max: 1e18,
            theta_inf_max: 1e12,
            growth_rate: 3.0,
            window: 3,
        };
        let mut scanner = WatchdogScanner::new(th, 6.0);
        let dt = 0.1;
        for n in 0..12 {
            let mut s = zero_state(&g, n as f64 * dt);
            let amp = 2.0f64.powi(n as i32);
            s.u = VectorField::from_fn(&g, |x| [amp * (x[0] - 0.5), 0.0, 0.0]);
            scanner.observe(&s, dt);
        }
        let growth: Vec<_> = scanner
            .events
            .iter()
            .filter(|e| e.growth_rate > 0.0)
            .collect();
        assert!(
            !growth.is_empty(),
            "no growth event on a doubling stream: {:?}",
            scanner.events
        );
        assert!(growth[0].step <= 4 + th.window, "late event: {:?}", growth[0]);
    }

    #[test]
    fn watchdog_reports_injected_nan_at_the_right_step() {
        let g = line(17);
        let mut scanner = WatchdogScanner::new(WatchdogThresholds::default(), 6.0);
        let dt = 0.05;
        for n in 0..10 {
            let mut s = zero_state(&g, n as f64 * dt);
            if n == 7 {
                s.theta.data_mut()[3] = f64::NAN;
            }
            scanner.observe(&s, dt);
        }
        let nans: Vec<_> = scanner
            .events
            .iter()
            .filter(|e| e.quantity == WatchQuantity::Nan)
            .collect();
        assert_eq!(nans.len(), 1);
        assert_eq!(nans[0].step, 7);
        assert!((nans[0].time - 0.35).abs() < 1e-12);
    }

    #[test]
    fn watchdog_raising_thresholds_only_removes_events() {
        let g = line(17);
        let mk_stream = || {
            let mut states = Vec::new();
            for n in 0..12 {
                let mut s = zero_state(&g, n as f64 * 0.1);
                let amp = 1.5f64.powi(n as i32) * 0.1;
                s.theta = Field::from_fn(&g, |x| amp * (PI * x[0]).sin());
                states.push(s);
            }
            states
        };
        let low = WatchdogThresholds {
            phi_max: 1.5,
            j_max: 5.0,
            bkm_max: 0.3,
            theta_inf_max: 0.4,
            growth_rate: 2.0,
            window: 2,
        };
        let high = WatchdogThresholds {
            phi_max: 3.0,
            j_max: 50.0,
            bkm_max: 3.0,
            theta_inf_max: 4.0,
            growth_rate: 20.0,
            window: 2,
        };
        let run = |th: WatchdogThresholds| {
            let mut sc = WatchdogScanner::new(th, 6.0);
            for s in mk_stream() {
                sc.observe(&s, 0.1);
            }
            sc.events
        };
        let ev_low = run(low);
        let ev_high = run(high);
        assert!(ev_high.len() <= ev_low.len());
        // every event kind that fired at high thresholds also fired at low
        for e in &ev_high {
            assert!(
                ev_low
                    .iter()
                    .any(|l| l.quantity == e.quantity && (l.growth_rate > 0.0) == (e.growth_rate > 0.0)),
                "event {e:?} appeared only with raised thresholds"
            );
        }
    }
}
