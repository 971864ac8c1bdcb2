//! Independent verification machinery: manufactured solutions with
//! hand-differentiated forcing, analytic reference computations, a direct
//! eigenmode solve for the periodic potential, and a scalar maximizer.
//!
//! Everything here is deliberately implementation-independent of the module
//! it checks: the manufactured forcings are closed-form, the eigenmode solve
//! uses naive direct transforms rather than the production FFT, and the
//! derivative formulas are unit-tested against central finite differences
//! before use.

use crate::constitutive::{self, ArrheniusParams};
use crate::error::{Result, SimError};
use crate::grid::{Field, Grid, PhiBc, ScalarBc, VectorField};
use crate::parabolic::{self, LinearStepInputs};
use crate::params::SimParams;

// ---------------------------------------------------------------------------
// scalar maximization

/// Golden-section search for the maximum of a continuous function on a
/// bracket; converges the argument to ~1e-12 relative. For monotone
/// functions the better endpoint is returned.
pub fn scalar_max_search(f: &dyn Fn(f64) -> f64, bracket: (f64, f64)) -> Result<(f64, f64)> {
    let (mut a, mut b) = bracket;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(SimError::Rejected(format!("invalid bracket ({a}, {b})")));
    }
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let tol = 1e-12 * (1.0 + a.abs() + b.abs());
    let (a0, b0) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = ((a + b) / 2.0, f((a + b) / 2.0));
    for cand in [a0, b0] {
        let v = f(cand);
        if v > best.1 {
            best = (cand, v);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// direct eigenmode solve for the periodic potential

/// Direct (naive transform) solve of the periodic potential problem; the
/// independent reference for the production spectral path. O(n^4) per axis.
pub fn poisson_direct_eigenmode(rho: &Field, g_grav: f64) -> Field {
    let grid = rho.grid().clone();
    let dim = grid.dim();
    let mut m = [1usize; 3];
    for a in 0..dim {
        m[a] = grid.shape()[a] - 1;
    }
    let count = m[0] * m[1] * m[2];
    let mut re = vec![0.0f64; count];
    let mut im = vec![0.0f64; count];
    let midx = |i: usize, j: usize, k: usize| (k * m[1] + j) * m[0] + i;
    for k in 0..m[2] {
        for j in 0..m[1] {
            for i in 0..m[0] {
                re[midx(i, j, k)] = rho.at([i, j, k]);
            }
        }
    }
    let mean = re.iter().sum::<f64>() / count as f64;
    let scale = 4.0 * std::f64::consts::PI * g_grav;
    for v in re.iter_mut() {
        *v = scale * (*v - mean);
    }

    let dft_axis = |re: &mut Vec<f64>, im: &mut Vec<f64>, axis: usize, sign: f64| {
        let n = m[axis];
        if n <= 1 {
            return;
        }
        let (na, nb) = match axis {
            0 => (m[1], m[2]),
            1 => (m[0], m[2]),
            _ => (m[0], m[1]),
        };
        let mut line_re = vec![0.0; n];
        let mut line_im = vec![0.0; n];
        for b in 0..nb {
            for a in 0..na {
                let pos = |i: usize| match axis {
                    0 => midx(i, a, b),
                    1 => midx(a, i, b),
                    _ => midx(a, b, i),
                };
                for kk in 0..n {
                    let mut sr = 0.0;
                    let mut si = 0.0;
                    for jj in 0..n {
                        let ang = sign * 2.0 * std::f64::consts::PI * (kk * jj % n) as f64
                            / n as f64;
                        let (c, s) = (ang.cos(), ang.sin());
                        let xr = re[pos(jj)];
                        let xi = im[pos(jj)];
                        sr += xr * c - xi * s;
                        si += xr * s + xi * c;
                    }
                    line_re[kk] = sr;
                    line_im[kk] = si;
                }
                for kk in 0..n {
                    re[pos(kk)] = line_re[kk];
                    im[pos(kk)] = line_im[kk];
                }
            }
        }
    };

    for a in 0..dim {
        dft_axis(&mut re, &mut im, a, -1.0);
    }
    for k2 in 0..m[2] {
        for k1 in 0..m[1] {
            for k0 in 0..m[0] {
                let idx = midx(k0, k1, k2);
                if k0 == 0 && k1 == 0 && k2 == 0 {
                    re[idx] = 0.0;
                    im[idx] = 0.0;
                    continue;
                }
                let mut sym = 0.0;
                let kv = [k0, k1, k2];
                for a in 0..dim {
                    let ang = 2.0 * std::f64::consts::PI * kv[a] as f64 / m[a] as f64;
                    sym += (2.0 * ang.cos() - 2.0)
                        / (grid.spacing()[a] * grid.spacing()[a]);
                }
                re[idx] /= sym;
                im[idx] /= sym;
            }
        }
    }
    for a in 0..dim {
        dft_axis(&mut re, &mut im, a, 1.0);
    }
    for v in re.iter_mut() {
        *v /= count as f64;
    }

    let mut out = Field::zeros(&grid);
    grid.for_each_node(|c, idx| {
        let i = c[0] % m[0];
        let j = if grid.shape()[1] > 1 { c[1] % m[1] } else { 0 };
        let k = if grid.shape()[2] > 1 { c[2] % m[2] } else { 0 };
        out.data_mut()[idx] = re[midx(i, j, k)];
    });
    out
}

// ---------------------------------------------------------------------------
// manufactured cases for the linear sub-solvers

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverId {
    Temperature,
    Momentum,
    MassFraction,
    /// The full linearized sweep driven to its fixed point.
    CoupledSweep,
}

/// Manufactured cases; each carries the closed-form solution, the
/// coefficient fields, and the hand-differentiated forcing for its solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsCase {
    /// `theta = e^{-t} cos(pi x / 2)` on [-1, 1], Dirichlet, advecting flow.
    TemperatureCosine,
    /// Constant temperature under Neumann walls: exact discrete solution.
    TemperatureConstant,
    /// `u = e^{-t} sin(pi x)` on [0, 1] with pressure and body-force inputs.
    MomentumSine,
    /// Reaction-diffusion `Z = 0.8 e^{-t/2} sin(pi x)` on [0, 1], no flow.
    MassFractionSine,
    /// The 2-d [`CoupledCase`] solved by the whole fixed-point iteration.
    CoupledFull,
}

impl MmsCase {
    pub fn solver(&self) -> SolverId {
        match self {
            MmsCase::TemperatureCosine | MmsCase::TemperatureConstant => SolverId::Temperature,
            MmsCase::MomentumSine => SolverId::Momentum,
            MmsCase::MassFractionSine => SolverId::MassFraction,
            MmsCase::CoupledFull => SolverId::CoupledSweep,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            MmsCase::TemperatureCosine => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    fn bc_theta(&self) -> ScalarBc {
        match self {
            MmsCase::TemperatureConstant => ScalarBc::NeumannZero,
            _ => ScalarBc::DirichletZero,
        }
    }

    /// Exact solution value.
    pub fn exact(&self, x: f64, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine => (-t).exp() * (PI * x / 2.0).cos(),
            MmsCase::TemperatureConstant => 5.0,
            MmsCase::MomentumSine => (-t).exp() * (PI * x).sin(),
            MmsCase::MassFractionSine => 0.8 * (-0.5 * t).exp() * (PI * x).sin(),
            MmsCase::CoupledFull => unreachable!("coupled case uses CoupledCase fields"),
        }
    }

    pub fn exact_t(&self, x: f64, t: f64) -> f64 {
        match self {
            MmsCase::TemperatureCosine | MmsCase::MomentumSine => -self.exact(x, t),
            MmsCase::TemperatureConstant => 0.0,
            MmsCase::MassFractionSine => -0.5 * self.exact(x, t),
            MmsCase::CoupledFull => unreachable!("coupled case uses CoupledCase fields"),
        }
    }

    pub fn exact_x(&self, x: f64, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine => -(PI / 2.0) * (-t).exp() * (PI * x / 2.0).sin(),
            MmsCase::TemperatureConstant => 0.0,
            MmsCase::MomentumSine => PI * (-t).exp() * (PI * x).cos(),
            MmsCase::MassFractionSine => 0.8 * PI * (-0.5 * t).exp() * (PI * x).cos(),
            MmsCase::CoupledFull => unreachable!("coupled case uses CoupledCase fields"),
        }
    }

    pub fn exact_xx(&self, x: f64, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine => -(PI * PI / 4.0) * self.exact(x, t),
            MmsCase::TemperatureConstant => 0.0,
            MmsCase::MomentumSine | MmsCase::MassFractionSine => -PI * PI * self.exact(x, t),
            MmsCase::CoupledFull => unreachable!("coupled case uses CoupledCase fields"),
        }
    }

    /// Density coefficient.
    pub fn rho(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine => 1.5 + 0.5 * (PI * x).sin(),
            MmsCase::TemperatureConstant => 1.0,
            MmsCase::MomentumSine => 1.3 + 0.3 * (PI * x).cos(),
            MmsCase::MassFractionSine => 1.2 + 0.4 * (PI * x).sin(),
            MmsCase::CoupledFull => unreachable!("coupled case uses CoupledCase fields"),
        }
    }

    /// Frozen transport velocity.
    pub fn v(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine => 0.4 * (PI * x).sin(),
            MmsCase::MomentumSine => 0.3 * (2.0 * PI * x).sin(),
            _ => 0.0,
        }
    }

    pub fn v_x(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine => 0.4 * PI * (PI * x).cos(),
            MmsCase::MomentumSine => 0.6 * PI * (2.0 * PI * x).cos(),
            _ => 0.0,
        }
    }

    /// Stationary temperature argument of the reaction rate (mass-fraction
    /// case only).
    pub fn reaction_theta(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        0.3 + 0.2 * (PI * x).cos()
    }

    /// Pressure input field of the step (temperature dilation term and
    /// momentum gradient term).
    pub fn p_input(&self, prm: &SimParams, x: f64, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine | MmsCase::TemperatureConstant => {
                prm.r_gas * self.rho(x) * self.exact(x, t)
            }
            MmsCase::MomentumSine => 0.4 * (-t).exp() * (PI * x).cos(),
            MmsCase::MassFractionSine => 0.0,
            MmsCase::CoupledFull => unreachable!("coupled case uses CoupledCase fields"),
        }
    }

    fn p_input_x(&self, prm: &SimParams, x: f64, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::TemperatureCosine | MmsCase::TemperatureConstant => {
                prm.r_gas
                    * ((match self {
                        MmsCase::TemperatureCosine => 0.5 * PI * (PI * x).cos(),
                        _ => 0.0,
                    }) * self.exact(x, t)
                        + self.rho(x) * self.exact_x(x, t))
            }
            MmsCase::MomentumSine => -0.4 * PI * (-t).exp() * (PI * x).sin(),
            MmsCase::MassFractionSine => 0.0,
            MmsCase::CoupledFull => unreachable!("coupled case uses CoupledCase fields"),
        }
    }

    /// Body force for the momentum case.
    pub fn body_force(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            MmsCase::MomentumSine => 0.2 * (PI * x).sin(),
            _ => 0.0,
        }
    }

    /// Forcing that makes `exact` solve the continuous equation of the
    /// matching solver.
    pub fn forcing(&self, prm: &SimParams, x: f64, t: f64) -> f64 {
        match self.solver() {
            SolverId::Temperature => {
                prm.c_v * self.rho(x) * (self.exact_t(x, t) + self.v(x) * self.exact_x(x, t))
                    + prm.r_gas * self.rho(x) * self.exact(x, t) * self.v_x(x)
                    - prm.k_heat * self.exact_xx(x, t)
            }
            SolverId::Momentum => {
                self.rho(x) * (self.exact_t(x, t) + self.v(x) * self.exact_x(x, t))
                    - (2.0 * prm.mu + prm.lambda) * self.exact_xx(x, t)
                    - self.rho(x) * self.body_force(x)
                    + self.p_input_x(prm, x, t)
            }
            SolverId::MassFraction => {
                let arr = ArrheniusParams::new(prm.alpha, prm.e_act);
                self.rho(x) * self.exact_t(x, t)
                    + prm.k_rate
                        * constitutive::arrhenius(self.reaction_theta(x), arr)
                        * self.rho(x)
                        * self.exact(x, t)
                    - prm.d_diff * self.exact_xx(x, t)
            }
            SolverId::CoupledSweep => unreachable!("coupled case uses CoupledCase fields"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MmsErrors {
    pub linf: f64,
    pub l2: f64,
}

/// Run the named solver on a manufactured case and return discrete error
/// norms against the closed form at the final time. For the coupled case
/// the norms are taken over the worst of the temperature, velocity and
/// mass-fraction fields.
pub fn mms_residual(
    case: MmsCase,
    solver: SolverId,
    n: usize,
    dt: f64,
    t_final: f64,
    prm: &SimParams,
) -> Result<MmsErrors> {
    if case.solver() != solver {
        return Err(SimError::Rejected(format!(
            "case {case:?} does not match solver {solver:?}"
        )));
    }
    if case == MmsCase::CoupledFull {
        return coupled_mms_errors(n, dt, t_final, prm);
    }
    let sol = mms_solve(case, n, dt, t_final, prm)?;
    let grid = sol.grid().clone();
    let steps = (t_final / dt).round().max(1.0) as usize;
    let t_end = steps as f64 * dt;
    let exact = Field::from_fn(&grid, |x| case.exact(x[0], t_end));
    let diff = sol.zip(&exact, |a, b| a - b);
    Ok(MmsErrors {
        linf: diff.max_abs(),
        l2: crate::norms::lp_norm(&diff, 2.0),
    })
}

/// Drive the fixed-point iteration on the coupled 2-d case and measure the
/// worst field error at the final time.
fn coupled_mms_errors(n: usize, dt: f64, t_final: f64, prm: &SimParams) -> Result<MmsErrors> {
    use crate::picard::{self, InitialData, IterationControls, SweepForcing};
    if prm.dim != 2 {
        return Err(SimError::Rejected(
            "the coupled manufactured case is two-dimensional".into(),
        ));
    }
    let case = CoupledCase::default();
    let h = 1.0 / (n as f64 - 1.0);
    let grid = Grid::new(
        2,
        &[n, n],
        &[h, h],
        &[0.0, 0.0],
        ScalarBc::DirichletZero,
        PhiBc::ZeroMeanPeriodic,
    )?;
    let ics = InitialData::new(
        Field::constant(&grid, case.rho0),
        Field::from_fn(&grid, |x| case.theta(x, 0.0)),
        VectorField::from_fn(&grid, |x| case.u(x, 0.0)),
        Field::from_fn(&grid, |x| case.z(x, 0.0)),
    )?;
    let th_force = |x: [f64; 3], t: f64| case.forcing_theta(prm, x, t);
    let u_force = |x: [f64; 3], t: f64| case.forcing_u(prm, x, t);
    let z_force = |x: [f64; 3], t: f64| case.forcing_z(prm, x, t);
    let forcing = SweepForcing {
        theta: &th_force,
        momentum: &u_force,
        mass_fraction: &z_force,
    };
    let controls = IterationControls::default();
    let report = picard::picard_iterate(
        &ics,
        prm,
        t_final,
        dt,
        1e-12,
        40,
        &controls,
        Some(&forcing),
    )?;
    if !report.converged {
        return Err(SimError::Diverged {
            what: "coupled manufactured fixed point".into(),
            iterations: report.iterations,
            residual: report.psi_sups.last().copied().unwrap_or(f64::NAN),
        });
    }
    let last = report.trajectory.last();
    let t_end = last.time;
    let mut linf = 0.0f64;
    let mut l2 = 0.0f64;
    let th_exact = Field::from_fn(&grid, |x| case.theta(x, t_end));
    let z_exact = Field::from_fn(&grid, |x| case.z(x, t_end));
    let u_exact = VectorField::from_fn(&grid, |x| case.u(x, t_end));
    for (got, want) in [(&last.theta, &th_exact), (&last.z, &z_exact)] {
        let diff = got.zip(want, |a, b| a - b);
        linf = linf.max(diff.max_abs());
        l2 = l2.max(crate::norms::lp_norm(&diff, 2.0));
    }
    for a in 0..2 {
        let diff = last.u.comp(a).zip(u_exact.comp(a), |x, y| x - y);
        linf = linf.max(diff.max_abs());
        l2 = l2.max(crate::norms::lp_norm(&diff, 2.0));
    }
    Ok(MmsErrors { linf, l2 })
}

/// Discrete solution of a single-solver manufactured problem at the final
/// time; the coupled case goes through [`mms_residual`] instead.
pub fn mms_solve(case: MmsCase, n: usize, dt: f64, t_final: f64, prm: &SimParams) -> Result<Field> {
    if case == MmsCase::CoupledFull {
        return Err(SimError::Rejected(
            "the coupled case is solved by the fixed-point iteration; use mms_residual".into(),
        ));
    }
    let (lo, hi) = case.domain();
    let h = (hi - lo) / (n as f64 - 1.0);
    let grid = Grid::new(
        1,
        &[n],
        &[h],
        &[lo],
        case.bc_theta(),
        PhiBc::ZeroMeanPeriodic,
    )?;
    let rho = Field::from_fn(&grid, |x| case.rho(x[0]));
    let v = VectorField::from_fn(&grid, |x| [case.v(x[0]), 0.0, 0.0]);
    let steps = (t_final / dt).round().max(1.0) as usize;

    match case.solver() {
        SolverId::Temperature => {
            let mut th = Field::from_fn(&grid, |x| case.exact(x[0], 0.0));
            for s in 0..steps {
                let t1 = (s + 1) as f64 * dt;
                let src = Field::from_fn(&grid, |x| case.forcing(prm, x[0], t1));
                let p = Field::from_fn(&grid, |x| case.p_input(prm, x[0], t1));
                let inp = LinearStepInputs {
                    rho_n: &rho,
                    rho_np1: &rho,
                    v: &v,
                    prev: &th,
                    source: Some(&src),
                    dt,
                    delta_floor: 0.0,
                };
                th = parabolic::solve_temperature_step(&inp, &p, prm)?;
            }
            Ok(th)
        }
        SolverId::Momentum => {
            let mut u = VectorField::from_fn(&grid, |x| [case.exact(x[0], 0.0), 0.0, 0.0]);
            let f = VectorField::from_fn(&grid, |x| [case.body_force(x[0]), 0.0, 0.0]);
            for s in 0..steps {
                let t1 = (s + 1) as f64 * dt;
                let src = VectorField::from_fn(&grid, |x| [case.forcing(prm, x[0], t1), 0.0, 0.0]);
                let p = Field::from_fn(&grid, |x| case.p_input(prm, x[0], t1));
                let inp = LinearStepInputs {
                    rho_n: &rho,
                    rho_np1: &rho,
                    v: &v,
                    prev: &u,
                    source: Some(&src),
                    dt,
                    delta_floor: 0.0,
                };
                u = parabolic::solve_momentum_step(&inp, &p, &f, prm)?;
            }
            Ok(u.comp(0).clone())
        }
        SolverId::MassFraction => {
            let theta = Field::from_fn(&grid, |x| case.reaction_theta(x[0]));
            let mut z = Field::from_fn(&grid, |x| case.exact(x[0], 0.0));
            for s in 0..steps {
                let t1 = (s + 1) as f64 * dt;
                let src = Field::from_fn(&grid, |x| case.forcing(prm, x[0], t1));
                let inp = LinearStepInputs {
                    rho_n: &rho,
                    rho_np1: &rho,
                    v: &v,
                    prev: &z,
                    source: Some(&src),
                    dt,
                    delta_floor: 0.0,
                };
                z = parabolic::solve_massfraction_step(&inp, &theta, prm)?;
            }
            Ok(z)
        }
        SolverId::CoupledSweep => unreachable!("rejected above"),
    }
}

/// Least-squares slope of log(err) against log(h).
pub fn fitted_order(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let lx: Vec<f64> = pairs.iter().map(|(h, _)| h.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|(_, e)| e.max(1e-300).ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Spatial refinement study: dt shrinks quadratically with h so the
/// first-order temporal error stays subordinate. Returns (h, linf error)
/// per level.
pub fn mms_spatial_study(
    case: MmsCase,
    prm: &SimParams,
    ns: &[usize],
    dt0: f64,
    t_final: f64,
) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = case.domain();
    let h0 = (hi - lo) / (ns[0] as f64 - 1.0);
    let mut out = Vec::new();
    for &n in ns {
        let h = (hi - lo) / (n as f64 - 1.0);
        let dt = dt0 * (h / h0) * (h / h0);
        let err = mms_residual(case, case.solver(), n, dt, t_final, prm)?;
        out.push((h, err.linf));
    }
    Ok(out)
}

/// Temporal refinement study on a fixed grid: successive solutions at
/// dt, dt/2, dt/4, ... are differenced so the spatial error cancels.
/// Returns (dt, difference) pairs; a first-order scheme halves them.
pub fn mms_temporal_study(
    case: MmsCase,
    prm: &SimParams,
    n: usize,
    dt0: f64,
    levels: usize,
    t_final: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut sols = Vec::new();
    let mut dts = Vec::new();
    for l in 0..levels {
        let dt = dt0 / 2f64.powi(l as i32);
        sols.push(mms_solve(case, n, dt, t_final, prm)?);
        dts.push(dt);
    }
    let mut out = Vec::new();
    for i in 0..levels - 1 {
        let d = sols[i].zip(&sols[i + 1], |a, b| (a - b).abs()).max();
        out.push((dts[i], d));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// coupled 2-d manufactured case

/// Closed-form solution of the full coupled system on the unit square with
/// constant density, a divergence-free velocity, zero gravity and forcing
/// on the temperature, momentum and mass-fraction equations. The constant
/// density and solenoidal flow make the transport stage exact up to
/// discretization, so the whole fixed-point iteration can be verified
/// against it.
#[derive(Debug, Clone, Copy)]
pub struct CoupledCase {
    pub rho0: f64,
    pub amp_u: f64,
    pub amp_theta: f64,
    pub amp_z: f64,
}

impl Default for CoupledCase {
    fn default() -> Self {
        CoupledCase {
            rho0: 2.0,
            amp_u: 0.08,
            amp_theta: 0.5,
            amp_z: 0.4,
        }
    }
}

impl CoupledCase {
    fn a(&self, t: f64) -> f64 {
        self.amp_u * (-t).exp()
    }

    fn b(&self, t: f64) -> f64 {
        self.amp_theta * (-t).exp()
    }

    fn c(&self, t: f64) -> f64 {
        self.amp_z * (-0.5 * t).exp()
    }

    /// Velocity from the stream function `a(t) sin^2(pi x) sin^2(pi y)`.
    pub fn u(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        use std::f64::consts::PI;
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
        let a = self.a(t);
        [a * PI * sx * sx * s2y, -a * PI * s2x * sy * sy, 0.0]
    }

    pub fn u_t(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let u = self.u(x, t);
        [-u[0], -u[1], 0.0]
    }

    /// Jacobian entries: `jac[a][b] = d u_a / d x_b`.
    pub fn u_jacobian(&self, x: [f64; 3], t: f64) -> [[f64; 2]; 2] {
        use std::f64::consts::PI;
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
        let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
        let a = self.a(t);
        [
            [a * PI * PI * s2x * s2y, 2.0 * a * PI * PI * sx * sx * c2y],
            [-2.0 * a * PI * PI * c2x * sy * sy, -a * PI * PI * s2x * s2y],
        ]
    }

    pub fn u_laplacian(&self, x: [f64; 3], t: f64) -> [f64; 2] {
        use std::f64::consts::PI;
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
        let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
        let a = self.a(t);
        [
            2.0 * a * PI * PI * PI * s2y * (c2x - 2.0 * sx * sx),
            -2.0 * a * PI * PI * PI * s2x * (c2y - 2.0 * sy * sy),
        ]
    }

    /// Temperature `b(t) sin(pi x) sin^2(pi y)`: nonnegative, vanishing on
    /// the boundary, not constant along the streamlines.
    pub fn theta(&self, x: [f64; 3], t: f64) -> f64 {
        use std::f64::consts::PI;
        let sy = (PI * x[1]).sin();
        self.b(t) * (PI * x[0]).sin() * sy * sy
    }

    pub fn theta_grad(&self, x: [f64; 3], t: f64) -> [f64; 2] {
        use std::f64::consts::PI;
        let b = self.b(t);
        let (sx, cx) = ((PI * x[0]).sin(), (PI * x[0]).cos());
        let sy = (PI * x[1]).sin();
        let s2y = (2.0 * PI * x[1]).sin();
        [b * PI * cx * sy * sy, b * PI * sx * s2y]
    }

    pub fn theta_laplacian(&self, x: [f64; 3], t: f64) -> f64 {
        use std::f64::consts::PI;
        let b = self.b(t);
        let sx = (PI * x[0]).sin();
        let sy = (PI * x[1]).sin();
        let c2y = (2.0 * PI * x[1]).cos();
        b * PI * PI * sx * (2.0 * c2y - sy * sy)
    }

    /// Mass fraction `c(t) sin(pi x) sin(pi y)`; its gradient is orthogonal
    /// to the flow, so the advection term vanishes identically.
    pub fn z(&self, x: [f64; 3], t: f64) -> f64 {
        use std::f64::consts::PI;
        self.c(t) * (PI * x[0]).sin() * (PI * x[1]).sin()
    }

    pub fn z_laplacian(&self, x: [f64; 3], t: f64) -> f64 {
        use std::f64::consts::PI;
        -2.0 * PI * PI * self.z(x, t)
    }

    fn dissipation(&self, prm: &SimParams, x: [f64; 3], t: f64) -> f64 {
        let j = self.u_jacobian(x, t);
        let off = j[0][1] + j[1][0];
        0.5 * prm.mu * (4.0 * j[0][0] * j[0][0] + 4.0 * j[1][1] * j[1][1] + 2.0 * off * off)
        // div u = 0, so the lambda term drops
    }

    pub fn forcing_theta(&self, prm: &SimParams, x: [f64; 3], t: f64) -> f64 {
        let u = self.u(x, t);
        let g = self.theta_grad(x, t);
        let adv = u[0] * g[0] + u[1] * g[1];
        let arr = ArrheniusParams::new(prm.alpha, prm.e_act);
        let th = self.theta(x, t);
        prm.c_v * self.rho0 * (-th + adv) - prm.k_heat * self.theta_laplacian(x, t)
            - self.dissipation(prm, x, t)
            - self.rho0
                * prm.q_heat
                * prm.k_rate
                * constitutive::arrhenius(th, arr)
                * self.z(x, t)
    }

    pub fn forcing_u(&self, prm: &SimParams, x: [f64; 3], t: f64) -> [f64; 3] {
        let u = self.u(x, t);
        let ut = self.u_t(x, t);
        let j = self.u_jacobian(x, t);
        let lap = self.u_laplacian(x, t);
        let gth = self.theta_grad(x, t);
        let mut out = [0.0; 3];
        for comp in 0..2 {
            let conv = u[0] * j[comp][0] + u[1] * j[comp][1];
            // p = R rho0 theta, rho0 constant -> grad p = R rho0 grad theta
            out[comp] = self.rho0 * (ut[comp] + conv) - prm.mu * lap[comp]
                + prm.r_gas * self.rho0 * gth[comp];
        }
        out
    }

    pub fn forcing_z(&self, prm: &SimParams, x: [f64; 3], t: f64) -> f64 {
        let arr = ArrheniusParams::new(prm.alpha, prm.e_act);
        let z = self.z(x, t);
        self.rho0 * (-0.5 * z)
            + prm.k_rate * constitutive::arrhenius(self.theta(x, t), arr) * self.rho0 * z
            - prm.d_diff * self.z_laplacian(x, t)
    }
}
