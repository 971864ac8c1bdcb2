//! Outer fixed-point iteration: repeatedly solve the linearized system over
//! the whole interval with the transport velocity frozen at the previous
//! iterate, measure the weighted gap between consecutive iterates, and stop
//! when it contracts below tolerance. A vacuum continuation runs the same
//! iteration for a decreasing sequence of density lifts.

use crate::constitutive::{self, ArrheniusParams};
use crate::error::{Result, SimError};
use crate::gravity;
use crate::grid::{Field, Grid, ScalarBc, State, Trajectory, VectorField, VelocityPath};
use crate::norms;
use crate::ops;
use crate::parabolic::{self, LinearStepInputs};
use crate::params::SimParams;
use crate::transport::CharacteristicTracer;
use std::sync::Arc;

/// Initial data of a run; validated against the grid's boundary conditions.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub rho0: Field,
    pub theta0: Field,
    pub u0: VectorField,
    pub z0: Field,
}

impl InitialData {
    pub fn new(rho0: Field, theta0: Field, u0: VectorField, z0: Field) -> Result<InitialData> {
        let ics = InitialData {
            rho0,
            theta0,
            u0,
            z0,
        };
        ics.validate()?;
        Ok(ics)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.rho0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid().clone();
        if self.rho0.min() < 0.0 {
            return Err(SimError::InvalidInput("initial density must be nonnegative".into()));
        }
        if self.theta0.min() < 0.0 {
            return Err(SimError::InvalidInput(
                "initial temperature must be nonnegative".into(),
            ));
        }
        if self.z0.min() < 0.0 || self.z0.max() > 1.0 {
            return Err(SimError::InvalidInput(
                "initial mass fraction must lie in [0, 1]".into(),
            ));
        }
        let boundary_tol = 1e-10;
        let mut ok = true;
        g.for_each_node(|c, idx| {
            if g.is_boundary(c) {
                if g.bc_theta == ScalarBc::DirichletZero
                    && self.theta0.data()[idx].abs() > boundary_tol
                {
                    ok = false;
                }
                if self.z0.data()[idx].abs() > boundary_tol {
                    ok = false;
                }
                for a in 0..g.dim() {
                    if self.u0.comp(a).data()[idx].abs() > boundary_tol {
                        ok = false;
                    }
                }
            }
        });
        if !ok {
            return Err(SimError::InvalidInput(
                "initial data must vanish on the boundary per the boundary conditions".into(),
            ));
        }
        Ok(())
    }

    /// Same data with the density lifted by `delta`.
    pub fn with_density_lift(&self, delta: f64) -> InitialData {
        InitialData {
            rho0: self.rho0.map(|r| r + delta),
            theta0: self.theta0.clone(),
            u0: self.u0.clone(),
            z0: self.z0.clone(),
        }
    }
}

/// Weights of the iterate-gap functional terms.
#[derive(Debug, Clone, Copy)]
pub struct PsiWeights {
    pub theta: f64,
    pub u: f64,
    pub z: f64,
}

impl Default for PsiWeights {
    fn default() -> Self {
        PsiWeights {
            theta: 1.0,
            u: 1.0,
            z: 1.0,
        }
    }
}

/// Numerical controls of the iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationControls {
    /// Characteristic-ODE substeps per dt (substep length = dt / this).
    pub ode_substeps: usize,
    /// Density floor for the implicit solves, relative to `max rho0`.
    pub delta_floor_rel: f64,
    pub weights: PsiWeights,
}

impl Default for IterationControls {
    fn default() -> Self {
        IterationControls {
            ode_substeps: 4,
            delta_floor_rel: 1e-12,
            weights: PsiWeights::default(),
        }
    }
}

/// Optional external forcing of the coupled system (manufactured-solution
/// verification hooks).
pub struct SweepForcing<'a> {
    pub theta: &'a dyn Fn([f64; 3], f64) -> f64,
    pub momentum: &'a dyn Fn([f64; 3], f64) -> [f64; 3],
    pub mass_fraction: &'a dyn Fn([f64; 3], f64) -> f64,
}

/// Outcome of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct PicardReport {
    /// Number of sweeps performed.
    pub iterations: usize,
    /// Sup over time of the gap functional, one entry per sweep from the
    /// second on.
    pub psi_sups: Vec<f64>,
    /// Full per-slice gap series matching `psi_sups`.
    pub psi_series: Vec<Vec<f64>>,
    /// Per-sweep time integral of the squared gradients of the iterate
    /// differences.
    pub dissipation: Vec<f64>,
    pub converged: bool,
    /// Populated when a sub-solver failed; the trajectory then holds the
    /// last completed sweep.
    pub aborted: Option<String>,
    pub trajectory: Trajectory,
}

impl PicardReport {
    /// Geometric mean of the consecutive gap ratios (contraction estimate).
    pub fn contraction_ratio(&self) -> Option<f64> {
        if self.psi_sups.len() < 2 {
            return None;
        }
        let mut prod = 1.0;
        let mut count = 0;
        for w in self.psi_sups.windows(2) {
            if w[0] > 0.0 && w[1] > 0.0 {
                prod *= w[1] / w[0];
                count += 1;
            }
        }
        if count == 0 {
            None
        } else {
            Some(prod.powf(1.0 / count as f64))
        }
    }
}

/// Velocity history for the first sweep: each component follows the unit
/// heat flow from the initial velocity, stepped implicitly on the run's
/// time lattice. The max norm never increases step to step.
pub fn init_velocity_heat(u0: &VectorField, t_final: f64, dt: f64) -> Result<VelocityPath> {
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(SimError::InvalidInput("heat initializer needs positive T and dt".into()));
    }
    let steps = steps_for(t_final, dt)?;
    let mut slices = Vec::with_capacity(steps + 1);
    slices.push(u0.clone());
    let mut cur = u0.clone();
    for _ in 0..steps {
        let mut comps = Vec::with_capacity(cur.dim());
        for a in 0..cur.dim() {
            comps.push(parabolic::implicit_diffusion_step(
                cur.comp(a),
                dt,
                1.0,
                ScalarBc::DirichletZero,
            )?);
        }
        cur = VectorField::from_comps(comps)?;
        slices.push(cur.clone());
    }
    VelocityPath::new(dt, slices)
}

fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    let steps = (t_final / dt).round();
    if steps < 1.0 || ((steps * dt - t_final) / t_final).abs() > 1e-9 {
        return Err(SimError::InvalidInput(format!(
            "t_final {t_final} is not a multiple of dt {dt}"
        )));
    }
    Ok(steps as usize)
}

fn initial_state(ics: &InitialData, params: &SimParams) -> Result<State> {
    let g = ics.grid();
    let phi = if params.g_grav > 0.0 {
        gravity::solve_poisson(&ics.rho0, params.g_grav, g.bc_phi)?.phi
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

/// Advance the full linearized system over `[0, t_final]` with the frozen
/// transport velocity `v`. Sub-step order per time level: density by
/// characteristics, potential and body force, temperature, mass fraction
/// (with the fresh temperature), then momentum (with the fresh pressure).
pub fn linearized_sweep(
    v: &VelocityPath,
    ics: &InitialData,
    params: &SimParams,
    t_final: f64,
    dt: f64,
    controls: &IterationControls,
    forcing: Option<&SweepForcing<'_>>,
) -> Result<Trajectory> {
    params.validate()?;
    let g = ics.grid().clone();
    let steps = steps_for(t_final, dt)?;
    let dt_ode = dt / controls.ode_substeps.max(1) as f64;
    let delta_floor = controls.delta_floor_rel * ics.rho0.max().max(0.0);
    let arr = ArrheniusParams::new(params.alpha, params.e_act);
    let tracer = CharacteristicTracer::new(v);

    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial_state(ics, params)?);

    for n in 0..steps {
        let t1 = (n + 1) as f64 * dt;
        let prev = &states[n];

        // density: representation formula traced back to the initial data
        let trace = tracer.trace_between(t1, 0.0, dt_ode)?;
        let rho1 = crate::transport::advance_density(&ics.rho0, &trace)?;
        let rho1_floored = rho1.map(|r| r.max(delta_floor));

        // potential and body force
        let (phi1, f1) = if params.g_grav > 0.0 {
            let sol = gravity::solve_poisson(&rho1, params.g_grav, g.bc_phi)
                .map_err(|e| step_err(n, e))?;
            let f = gravity::gravity_force(&sol.phi);
            (sol.phi, f)
        } else {
            (Field::zeros(&g), VectorField::zeros(&g))
        };

        // frozen velocity at the new level
        let v1 = velocity_slice(v, t1);
        let q_diss = constitutive::viscous_dissipation(&v1, params.mu, params.lambda);
        let heat =
            constitutive::heat_source(&prev.theta, &prev.z, params.q_heat, params.k_rate, arr);
        let mut theta_src = q_diss.zip(&rho1_floored.zip(&heat, |r, h| r * h), |a, b| a + b);
        if let Some(fc) = forcing {
            let extra = Field::from_fn(&g, |x| (fc.theta)(x, t1));
            theta_src = theta_src.zip(&extra, |a, b| a + b);
        }
        let p_dilation = constitutive::pressure(&rho1, &prev.theta, params.r_gas);
        let theta1 = {
            let inp = LinearStepInputs {
                rho_n: &prev.rho,
                rho_np1: &rho1,
                v: &v1,
                prev: &prev.theta,
                source: Some(&theta_src),
                dt,
                delta_floor,
            };
            parabolic::solve_temperature_step(&inp, &p_dilation, params)
                .map_err(|e| step_err(n, e))?
        };

        let z1 = {
            let src = forcing.map(|fc| Field::from_fn(&g, |x| (fc.mass_fraction)(x, t1)));
            let inp = LinearStepInputs {
                rho_n: &prev.rho,
                rho_np1: &rho1,
                v: &v1,
                prev: &prev.z,
                source: src.as_ref(),
                dt,
                delta_floor,
            };
            parabolic::solve_massfraction_step(&inp, &theta1, params).map_err(|e| step_err(n, e))?
        };

        let p1 = constitutive::pressure(&rho1, &theta1, params.r_gas);
        let u1 = {
            let src = forcing.map(|fc| VectorField::from_fn(&g, |x| (fc.momentum)(x, t1)));
            let inp = LinearStepInputs {
                rho_n: &prev.rho,
                rho_np1: &rho1,
                v: &v1,
                prev: &prev.u,
                source: src.as_ref(),
                dt,
                delta_floor,
            };
            parabolic::solve_momentum_step(&inp, &p1, &f1, params).map_err(|e| step_err(n, e))?
        };

        states.push(State {
            time: t1,
            rho: rho1,
            theta: theta1,
            u: u1,
            z: z1,
            phi: phi1,
        });
    }
    Trajectory::new(dt, states)
}

fn step_err(step: usize, e: SimError) -> SimError {
    match e {
        SimError::Diverged {
            what,
            iterations,
            residual,
        } => SimError::Diverged {
            what: format!("step {step}: {what}"),
            iterations,
            residual,
        },
        SimError::NonFinite(m) => SimError::NonFinite(format!("step {step}: {m}")),
        other => other,
    }
}

/// Nodal velocity slice of a path at a lattice time (time-interpolated,
/// no spatial interpolation).
fn velocity_slice(v: &VelocityPath, t: f64) -> VectorField {
    let (i0, i1, w) = v.bracket(t);
    if i0 == i1 || w == 0.0 {
        return v.slices()[i0].clone();
    }
    if (w - 1.0).abs() < 1e-12 {
        return v.slices()[i1].clone();
    }
    let a = &v.slices()[i0];
    let b = &v.slices()[i1];
    let comps = (0..a.dim())
        .map(|c| a.comp(c).zip(b.comp(c), |x, y| (1.0 - w) * x + w * y))
        .collect();
    VectorField::from_comps(comps).expect("matching dims")
}

/// Weighted squared-difference functional between two trajectories on the
/// same lattice, per time slice, using the second trajectory's density as
/// the weight. Returns the series and its sup.
pub fn psi_functional(
    traj_a: &Trajectory,
    traj_b: &Trajectory,
    weights: PsiWeights,
) -> Result<(Vec<f64>, f64)> {
    if traj_a.len() != traj_b.len() || (traj_a.dt() - traj_b.dt()).abs() > 1e-12 * traj_a.dt() {
        return Err(SimError::Rejected(
            "trajectories live on different time lattices".into(),
        ));
    }
    let mut series = Vec::with_capacity(traj_a.len());
    let mut sup = 0.0f64;
    for (sa, sb) in traj_a.states().iter().zip(traj_b.states()) {
        let g = sa.grid();
        let hv = g.cell_volume();
        let mut terms = Vec::with_capacity(4 * g.len());
        g.for_each_node(|c, idx| {
            let w = norms::quad_weight(g, c) * hv;
            let rho_w = sb.rho.data()[idx];
            let dr = sb.rho.data()[idx] - sa.rho.data()[idx];
            terms.push(dr * dr * w);
            let dth = sb.theta.data()[idx] - sa.theta.data()[idx];
            terms.push(weights.theta * rho_w * dth * dth * w);
            let mut du2 = 0.0;
            for a in 0..g.dim() {
                let du = sb.u.comp(a).data()[idx] - sa.u.comp(a).data()[idx];
                du2 += du * du;
            }
            terms.push(weights.u * rho_w * du2 * w);
            let dz = sb.z.data()[idx] - sa.z.data()[idx];
            terms.push(weights.z * rho_w * dz * dz * w);
        });
        let psi = crate::grid::pairwise_sum(&terms);
        sup = sup.max(psi);
        series.push(psi);
    }
    Ok((series, sup))
}

/// Time integral of the squared gradient norms of the iterate differences
/// (the dissipation controlled alongside the gap functional).
fn gap_dissipation(traj_a: &Trajectory, traj_b: &Trajectory) -> f64 {
    let dt = traj_a.dt();
    let mut total = 0.0;
    for (sa, sb) in traj_a.states().iter().zip(traj_b.states()).skip(1) {
        let dth = sb.theta.zip(&sa.theta, |a, b| a - b);
        let dz = sb.z.zip(&sa.z, |a, b| a - b);
        let gth = norms::lp_norm_vec(&ops::gradient(&dth), 2.0);
        let gz = norms::lp_norm_vec(&ops::gradient(&dz), 2.0);
        let mut gu = 0.0;
        for a in 0..sa.u.dim() {
            let du = sb.u.comp(a).zip(sa.u.comp(a), |x, y| x - y);
            let g = norms::lp_norm_vec(&ops::gradient(&du), 2.0);
            gu += g * g;
        }
        total += dt * (gth * gth + gu + gz * gz);
    }
    total
}

/// Run the fixed-point iteration until the sup-in-time gap functional drops
/// below `tol` or `max_iter` sweeps have been spent. Sub-solver failures
/// after the first sweep produce an aborted report carrying the last
/// completed sweep.
#[allow(clippy::too_many_arguments)]
pub fn picard_iterate(
    ics: &InitialData,
    params: &SimParams,
    t_final: f64,
    dt: f64,
    tol: f64,
    max_iter: usize,
    controls: &IterationControls,
    forcing: Option<&SweepForcing<'_>>,
) -> Result<PicardReport> {
    if max_iter == 0 {
        return Err(SimError::InvalidInput("max_iter must be >= 1".into()));
    }
    let u0_path = init_velocity_heat(&ics.u0, t_final, dt)?;
    let mut prev = linearized_sweep(&u0_path, ics, params, t_final, dt, controls, forcing)?;
    let mut report = PicardReport {
        iterations: 1,
        psi_sups: Vec::new(),
        psi_series: Vec::new(),
        dissipation: Vec::new(),
        converged: tol.is_infinite(),
        aborted: None,
        trajectory: prev.clone(),
    };
    if report.converged {
        return Ok(report);
    }
    for _k in 2..=max_iter {
        let v: VelocityPath = prev.velocity_path();
        let next = match linearized_sweep(&v, ics, params, t_final, dt, controls, forcing) {
            Ok(t) => t,
            Err(e) => {
                report.aborted = Some(e.to_string());
                report.trajectory = prev;
                return Ok(report);
            }
        };
        report.iterations += 1;
        let (series, sup) = psi_functional(&prev, &next, controls.weights)?;
        report.psi_sups.push(sup);
        report.psi_series.push(series);
        report.dissipation.push(gap_dissipation(&prev, &next));
        prev = next;
        if sup <= tol {
            report.converged = true;
            break;
        }
    }
    report.trajectory = prev;
    Ok(report)
}

/// One fully nonlinear step for long runs: the velocity is refreshed within
/// the step by up to `inner_iters` passes of the linearized solve on
/// `[t, t+dt]`. The density composes incrementally from the previous state.
pub fn per_step_advance(
    prev: &State,
    params: &SimParams,
    dt: f64,
    controls: &IterationControls,
    delta_floor: f64,
    inner_iters: usize,
) -> Result<State> {
    let g = prev.grid().clone();
    let arr = ArrheniusParams::new(params.alpha, params.e_act);
    let dt_ode = dt / controls.ode_substeps.max(1) as f64;
    let mut u_new = prev.u.clone();
    let mut out: Option<State> = None;
    for _ in 0..inner_iters.max(1) {
        let path = VelocityPath::new(dt, vec![prev.u.clone(), u_new.clone()])?;
        let tracer = CharacteristicTracer::new(&path);
        let trace = tracer.trace_between(dt, 0.0, dt_ode)?;
        let rho1 = crate::transport::advance_density(&prev.rho, &trace)?;
        let rho1_floored = rho1.map(|r| r.max(delta_floor));
        let (phi1, f1) = if params.g_grav > 0.0 {
            let sol = gravity::solve_poisson(&rho1, params.g_grav, g.bc_phi)?;
            let f = gravity::gravity_force(&sol.phi);
            (sol.phi, f)
        } else {
            (Field::zeros(&g), VectorField::zeros(&g))
        };
        let v1 = u_new.clone();
        let q_diss = constitutive::viscous_dissipation(&v1, params.mu, params.lambda);
        let heat =
            constitutive::heat_source(&prev.theta, &prev.z, params.q_heat, params.k_rate, arr);
        let theta_src = q_diss.zip(&rho1_floored.zip(&heat, |r, h| r * h), |a, b| a + b);
        let p_dilation = constitutive::pressure(&rho1, &prev.theta, params.r_gas);
        let theta1 = {
            let inp = LinearStepInputs {
                rho_n: &prev.rho,
                rho_np1: &rho1,
                v: &v1,
                prev: &prev.theta,
                source: Some(&theta_src),
                dt,
                delta_floor,
            };
            parabolic::solve_temperature_step(&inp, &p_dilation, params)?
        };
        let z1 = {
            let inp = LinearStepInputs {
                rho_n: &prev.rho,
                rho_np1: &rho1,
                v: &v1,
                prev: &prev.z,
                source: None,
                dt,
                delta_floor,
            };
            parabolic::solve_massfraction_step(&inp, &theta1, params)?
        };
        let p1 = constitutive::pressure(&rho1, &theta1, params.r_gas);
        let u1 = {
            let inp = LinearStepInputs {
                rho_n: &prev.rho,
                rho_np1: &rho1,
                v: &v1,
                prev: &prev.u,
                source: None,
                dt,
                delta_floor,
            };
            parabolic::solve_momentum_step(&inp, &p1, &f1, params)?
        };
        u_new = u1.clone();
        out = Some(State {
            time: prev.time + dt,
            rho: rho1,
            theta: theta1,
            u: u1,
            z: z1,
            phi: phi1,
        });
    }
    Ok(out.expect("at least one inner pass"))
}

/// Entry of a vacuum-continuation run.
#[derive(Debug)]
pub struct ContinuationEntry {
    pub delta: f64,
    pub report: Option<PicardReport>,
    /// Sup-in-time unweighted L2 distance to the previous entry's
    /// trajectory, when both completed.
    pub distance_to_prev: Option<f64>,
    pub error: Option<String>,
}

/// Sup over time of the summed L2 field distances between two trajectories.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SimError::Rejected("trajectory lengths differ".into()));
    }
    let mut sup = 0.0f64;
    for (sa, sb) in a.states().iter().zip(b.states()) {
        let mut d = norms::lp_norm(&sa.rho.zip(&sb.rho, |x, y| x - y), 2.0);
        d += norms::lp_norm(&sa.theta.zip(&sb.theta, |x, y| x - y), 2.0);
        d += norms::lp_norm(&sa.z.zip(&sb.z, |x, y| x - y), 2.0);
        for c in 0..sa.u.dim() {
            d += norms::lp_norm(&sa.u.comp(c).zip(sb.u.comp(c), |x, y| x - y), 2.0);
        }
        sup = sup.max(d);
    }
    Ok(sup)
}

/// Run the iteration for each density lift in `deltas` (strictly
/// decreasing) and report successive trajectory distances, which must
/// shrink for the continuation to be accepted as convergent.
#[allow(clippy::too_many_arguments)]
pub fn vacuum_continuation(
    ics: &InitialData,
    params: &SimParams,
    deltas: &[f64],
    t_final: f64,
    dt: f64,
    tol: f64,
    max_iter: usize,
    controls: &IterationControls,
) -> Result<Vec<ContinuationEntry>> {
    if deltas.is_empty() {
        return Err(SimError::InvalidInput("need at least one delta".into()));
    }
    for w in deltas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(SimError::InvalidInput(
                "deltas must be strictly decreasing".into(),
            ));
        }
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        return Err(SimError::InvalidInput("deltas must lie in (0, 1)".into()));
    }
    let mut entries: Vec<ContinuationEntry> = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let lifted = ics.with_density_lift(delta);
        match picard_iterate(&lifted, params, t_final, dt, tol, max_iter, controls, None) {
            Ok(report) => {
                let distance_to_prev = entries
                    .last()
                    .and_then(|e| e.report.as_ref())
                    .map(|prev| trajectory_distance(&prev.trajectory, &report.trajectory))
                    .transpose()?;
                entries.push(ContinuationEntry {
                    delta,
                    report: Some(report),
                    distance_to_prev,
                    error: None,
                });
            }
            Err(e) => entries.push(ContinuationEntry {
                delta,
                report: None,
                distance_to_prev: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(entries)
}

/// Discrete residual of the original nonlinear system along a trajectory
/// (the frozen transport velocity replaced by the trajectory's own
/// velocity), reported as sup-in-time interior L2 norms per equation:
/// mass, temperature, momentum, mass fraction. Checks that the fixed point
/// is consistent with the coupled system.
pub fn nonlinear_residual(
    traj: &Trajectory,
    params: &SimParams,
    forcing: Option<&SweepForcing<'_>>,
    delta_floor: f64,
) -> [f64; 4] {
    let dt = traj.dt();
    let arr = ArrheniusParams::new(params.alpha, params.e_act);
    let mut worst = [0.0f64; 4];
    for w in traj.states().windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let g = cur.grid().clone();
        let rho_t = cur.rho.map(|r| r.max(delta_floor));
        let t1 = cur.time;

        // mass: (rho^{n+1} - rho^n)/dt + div(rho^{n+1} u^{n+1})
        let rho_u = VectorField::from_comps(
            (0..g.dim())
                .map(|a| cur.rho.zip(cur.u.comp(a), |r, u| r * u))
                .collect(),
        )
        .expect("dims");
        let div_rho_u = ops::divergence(&rho_u);
        let mut mass_res = Field::zeros(&g);
        for i in 0..g.len() {
            mass_res.data_mut()[i] =
                (cur.rho.data()[i] - prev.rho.data()[i]) / dt + div_rho_u.data()[i];
        }
        worst[0] = worst[0].max(interior_l2(&mass_res));

        // temperature
        let q = constitutive::viscous_dissipation(&cur.u, params.mu, params.lambda);
        let heat = constitutive::heat_source(&cur.theta, &cur.z, params.q_heat, params.k_rate, arr);
        let lap_th = ops::laplacian(&cur.theta, g.bc_theta);
        let grad_th = ops::gradient(&cur.theta);
        let div_u = ops::divergence(&cur.u);
        let mut th_res = Field::zeros(&g);
        g.for_each_node(|c, i| {
            let mut adv = 0.0;
            for a in 0..g.dim() {
                adv += cur.u.comp(a).data()[i] * grad_th.comp(a).data()[i];
            }
            let r = rho_t.data()[i];
            let mut val = params.c_v * r * ((cur.theta.data()[i] - prev.theta.data()[i]) / dt + adv)
                + params.r_gas * cur.rho.data()[i] * cur.theta.data()[i] * div_u.data()[i]
                - params.k_heat * lap_th.data()[i]
                - q.data()[i]
                - r * heat.data()[i];
            if let Some(fc) = forcing {
                val -= (fc.theta)(g.node(c), t1);
            }
            th_res.data_mut()[i] = val;
        });
        worst[1] = worst[1].max(interior_l2(&th_res));

        // momentum
        let lame = constitutive::lame_apply(&cur.u, params.mu, params.lambda);
        let p = constitutive::pressure(&cur.rho, &cur.theta, params.r_gas);
        let grad_p = ops::gradient(&p);
        let f = if params.g_grav > 0.0 {
            gravity::gravity_force(&cur.phi)
        } else {
            VectorField::zeros(&g)
        };
        let jac = ops::jacobian(&cur.u);
        let mut mom_res = Field::zeros(&g);
        g.for_each_node(|c, i| {
            let mut sq = 0.0;
            for comp in 0..g.dim() {
                let mut adv = 0.0;
                for a in 0..g.dim() {
                    adv += cur.u.comp(a).data()[i] * jac[comp].comp(a).data()[i];
                }
                let r = rho_t.data()[i];
                let mut val = r
                    * ((cur.u.comp(comp).data()[i] - prev.u.comp(comp).data()[i]) / dt + adv)
                    + lame.comp(comp).data()[i]
                    + grad_p.comp(comp).data()[i]
                    - r * f.comp(comp).data()[i];
                if let Some(fc) = forcing {
                    val -= (fc.momentum)(g.node(c), t1)[comp];
                }
                sq += val * val;
            }
            mom_res.data_mut()[i] = sq.sqrt();
        });
        worst[2] = worst[2].max(interior_l2(&mom_res));

        // mass fraction
        let lap_z = ops::laplacian(&cur.z, ScalarBc::DirichletZero);
        let grad_z = ops::gradient(&cur.z);
        let mut z_res = Field::zeros(&g);
        g.for_each_node(|c, i| {
            let mut adv = 0.0;
            for a in 0..g.dim() {
                adv += cur.u.comp(a).data()[i] * grad_z.comp(a).data()[i];
            }
            let r = rho_t.data()[i];
            let mut val = r * ((cur.z.data()[i] - prev.z.data()[i]) / dt + adv)
                + params.k_rate * constitutive::arrhenius(cur.theta.data()[i], arr) * r
                    * cur.z.data()[i]
                - params.d_diff * lap_z.data()[i];
            if let Some(fc) = forcing {
                val -= (fc.mass_fraction)(g.node(c), t1);
            }
            z_res.data_mut()[i] = val;
        });
        worst[3] = worst[3].max(interior_l2(&z_res));
    }
    worst
}

/// L2 norm over interior nodes only (boundary rows are constraint rows,
/// not discretized equations).
fn interior_l2(f: &Field) -> f64 {
    let g = f.grid();
    let hv = g.cell_volume();
    let mut terms = Vec::new();
    g.for_each_node(|c, i| {
        if !g.is_boundary(c) {
            terms.push(f.data()[i] * f.data()[i] * hv);
        }
    });
    crate::grid::pairwise_sum(&terms).sqrt()
}
