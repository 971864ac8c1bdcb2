//! Implicit linear sub-solvers for temperature, momentum and mass fraction
//! with the transport velocity frozen.
//!
//! Each step discretizes the advective (non-divergence) form with backward
//! Euler, which stays well posed through vacuum once the density coefficient
//! is floored at `delta_floor`. Temperature and momentum advection is
//! centered; mass-fraction advection is first-order upwind so the step
//! matrix is an M-matrix and the discrete maximum principle holds. The
//! pressure-dilation term `p div v` is applied explicitly from the supplied
//! pressure field. Symmetric systems go to conjugate gradients, advective
//! ones to BiCGStab; both solve to relative residual 1e-12.

use crate::constitutive::{self, ArrheniusParams};
use crate::error::{Result, SimError};
use crate::grid::{Field, Grid, ScalarBc, VectorField};
use crate::linsolve::{self, LinearOp};
use crate::ops;
use crate::params::SimParams;
use std::sync::Arc;

pub const SOLVE_TOL: f64 = 1e-12;

/// Shared inputs of one linear implicit step. `prev` is the field being
/// advanced; `source` is an optional extra additive forcing (used by the
/// coupled sweep for dissipation/reaction heat and by manufactured-solution
/// runs).
pub struct LinearStepInputs<'a, P> {
    pub rho_n: &'a Field,
    pub rho_np1: &'a Field,
    pub v: &'a VectorField,
    pub prev: &'a P,
    pub source: Option<&'a P>,
    pub dt: f64,
    pub delta_floor: f64,
}

impl<'a, P> LinearStepInputs<'a, P> {
    fn validate_common(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(SimError::InvalidInput("dt must be positive".into()));
        }
        if self.delta_floor < 0.0 {
            return Err(SimError::InvalidInput("delta_floor must be >= 0".into()));
        }
        if self.rho_np1.min() < 0.0 || self.rho_n.min() < 0.0 {
            return Err(SimError::InvalidInput("density must be nonnegative".into()));
        }
        if !self.rho_np1.is_all_finite() || !self.rho_n.is_all_finite() || !self.v.is_all_finite()
        {
            return Err(SimError::NonFinite("linear step inputs".into()));
        }
        Ok(())
    }

    /// Floored density coefficient at the new time level.
    fn rho_floor(&self) -> Field {
        let floor = self.delta_floor;
        self.rho_np1.map(|r| r.max(floor))
    }
}

fn check_field(what: &str, f: &Field) -> Result<()> {
    if !f.is_all_finite() {
        return Err(SimError::NonFinite(what.into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// scalar operator

struct ScalarStepOp<'a> {
    grid: &'a Arc<Grid>,
    /// Coefficient of the unknown itself (time term plus reaction).
    mass: Vec<f64>,
    /// Coefficient in front of `v . grad x`.
    adv_coef: Vec<f64>,
    v: Option<&'a VectorField>,
    upwind: bool,
    diff: f64,
    bc: ScalarBc,
}

impl<'a> ScalarStepOp<'a> {
    fn dirichlet(&self) -> bool {
        self.bc == ScalarBc::DirichletZero
    }
}

impl<'a> LinearOp for ScalarStepOp<'a> {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        let dim = g.dim();
        let shape = g.shape();
        let spacing = g.spacing();
        let dirichlet = self.dirichlet();
        let read = |c: [usize; 3]| -> f64 {
            if dirichlet && g.is_boundary(c) {
                0.0
            } else {
                x[g.idx(c[0], c[1], c[2])]
            }
        };
        g.for_each_node(|c, idx| {
            if dirichlet && g.is_boundary(c) {
                y[idx] = x[idx];
                return;
            }
            let xc = x[idx];
            let mut acc = self.mass[idx] * xc;
            for a in 0..dim {
                let h = spacing[a];
                let at_lo = {
                    let mut cc = c;
                    if c[a] == 0 {
                        // mirror ghost (Neumann rows only reach here)
                        cc[a] = 1;
                    } else {
                        cc[a] -= 1;
                    }
                    read(cc)
                };
                let at_hi = {
                    let mut cc = c;
                    if c[a] + 1 == shape[a] {
                        cc[a] = shape[a] - 2;
                    } else {
                        cc[a] += 1;
                    }
                    read(cc)
                };
                // diffusion: compact stencil
                acc -= self.diff * (at_lo - 2.0 * xc + at_hi) / (h * h);
                // advection
                if let Some(v) = self.v {
                    let va = v.comp(a).at(c);
                    if va != 0.0 {
                        let deriv = if self.upwind {
                            if va > 0.0 {
                                (xc - at_lo) / h
                            } else {
                                (at_hi - xc) / h
                            }
                        } else {
                            (at_hi - at_lo) / (2.0 * h)
                        };
                        acc += self.adv_coef[idx] * va * deriv;
                    }
                }
            }
            y[idx] = acc;
        });
    }

    fn diag(&self) -> Vec<f64> {
        let g = self.grid;
        let spacing = g.spacing();
        let dirichlet = self.dirichlet();
        let mut d = vec![0.0; g.len()];
        g.for_each_node(|c, idx| {
            if dirichlet && g.is_boundary(c) {
                d[idx] = 1.0;
                return;
            }
            let mut val = self.mass[idx];
            for a in 0..g.dim() {
                val += 2.0 * self.diff / (spacing[a] * spacing[a]);
                if self.upwind {
                    if let Some(v) = self.v {
                        val += self.adv_coef[idx] * v.comp(a).at(c).abs() / spacing[a];
                    }
                }
            }
            d[idx] = if val != 0.0 { val } else { 1.0 };
        });
        d
    }
}

fn scalar_solve(
    what: &str,
    op: &ScalarStepOp<'_>,
    rhs: &[f64],
    symmetric: bool,
) -> Result<Vec<f64>> {
    let max_iter = 60 * op.len() + 200;
    let run = if symmetric {
        linsolve::cg(op, rhs, SOLVE_TOL, max_iter)
    } else {
        linsolve::bicgstab(op, rhs, SOLVE_TOL, max_iter)
    };
    match run {
        Ok((x, _)) => Ok(x),
        Err(SimError::Diverged {
            iterations,
            residual,
            ..
        }) => Err(SimError::Diverged {
            what: what.into(),
            iterations,
            residual,
        }),
        Err(e) => Err(e),
    }
}

/// Implicit unit-coefficient diffusion step `(x - prev)/dt = diff * Δx`
/// with the given boundary condition; building block for the heat-flow
/// velocity initializer.
pub fn implicit_diffusion_step(prev: &Field, dt: f64, diff: f64, bc: ScalarBc) -> Result<Field> {
    check_field("diffusion step input", prev)?;
    let grid = prev.grid().clone();
    let n = grid.len();
    let op = ScalarStepOp {
        grid: &grid,
        mass: vec![1.0 / dt; n],
        adv_coef: vec![0.0; n],
        v: None,
        upwind: false,
        diff,
        bc,
    };
    let mut rhs = vec![0.0; n];
    let dirichlet = bc == ScalarBc::DirichletZero;
    grid.for_each_node(|c, idx| {
        if !(dirichlet && grid.is_boundary(c)) {
            rhs[idx] = prev.data()[idx] / dt;
        }
    });
    let x = scalar_solve("implicit diffusion", &op, &rhs, true)?;
    Field::from_vec(&grid, x)
}

// ---------------------------------------------------------------------------
// temperature

/// One backward-Euler step of
/// `c_v ρ~ (θ_t + v·∇θ) - k Δθ = source - p div v`
/// with `ρ~ = max(ρ, delta_floor)`. The pressure-dilation term uses the
/// supplied pressure field explicitly; `source` carries the dissipation and
/// reaction heat. Boundary condition comes from the grid (`bc_theta`).
pub fn solve_temperature_step(
    inp: &LinearStepInputs<'_, Field>,
    p: &Field,
    params: &SimParams,
) -> Result<Field> {
    inp.validate_common()?;
    check_field("temperature prev", inp.prev)?;
    check_field("pressure", p)?;
    if let Some(s) = inp.source {
        check_field("temperature source", s)?;
    }
    let grid = inp.prev.grid().clone();
    let bc = grid.bc_theta;
    let dirichlet = bc == ScalarBc::DirichletZero;
    let n = grid.len();
    let rho_t = inp.rho_floor();
    let cv = params.c_v;

    let mass: Vec<f64> = rho_t.data().iter().map(|&r| cv * r / inp.dt).collect();
    let adv_coef: Vec<f64> = rho_t.data().iter().map(|&r| cv * r).collect();
    let div_v = ops::divergence(inp.v);

    let mut rhs = vec![0.0; n];
    grid.for_each_node(|c, idx| {
        if dirichlet && grid.is_boundary(c) {
            return;
        }
        let mut b = mass[idx] * inp.prev.data()[idx];
        b -= p.data()[idx] * div_v.data()[idx];
        if let Some(s) = inp.source {
            b += s.data()[idx];
        }
        rhs[idx] = b;
    });

    let v_zero = inp.v.max_abs() == 0.0;
    let op = ScalarStepOp {
        grid: &grid,
        mass,
        adv_coef,
        v: if v_zero { None } else { Some(inp.v) },
        upwind: false,
        diff: params.k_heat,
        bc,
    };
    let symmetric = v_zero && dirichlet;
    let x = scalar_solve("temperature step", &op, &rhs, symmetric)?;
    Field::from_vec(&grid, x)
}

// ---------------------------------------------------------------------------
// mass fraction

/// One backward-Euler step of
/// `ρ~ (Z_t + v·∇Z) + K rate(θ) ρ~ Z = D ΔZ + source`
/// with upwind advection and implicit reaction/diffusion. The step matrix
/// is an M-matrix, so without extra sources the update maps `[0, 1]` data
/// into `[0, 1]` up to solver tolerance. Homogeneous Dirichlet boundary.
pub fn solve_massfraction_step(
    inp: &LinearStepInputs<'_, Field>,
    theta: &Field,
    params: &SimParams,
) -> Result<Field> {
    inp.validate_common()?;
    check_field("mass-fraction prev", inp.prev)?;
    check_field("reaction temperature", theta)?;
    if let Some(s) = inp.source {
        check_field("mass-fraction source", s)?;
    }
    let grid = inp.prev.grid().clone();
    let n = grid.len();
    let rho_t = inp.rho_floor();
    let arr = ArrheniusParams::new(params.alpha, params.e_act);

    let mut mass = vec![0.0; n];
    for i in 0..n {
        let r = rho_t.data()[i];
        mass[i] = r / inp.dt + params.k_rate * constitutive::arrhenius(theta.data()[i], arr) * r;
    }
    let adv_coef: Vec<f64> = rho_t.data().to_vec();

    let mut rhs = vec![0.0; n];
    grid.for_each_node(|c, idx| {
        if grid.is_boundary(c) {
            return;
        }
        let mut b = rho_t.data()[idx] * inp.prev.data()[idx] / inp.dt;
        if let Some(s) = inp.source {
            b += s.data()[idx];
        }
        rhs[idx] = b;
    });

    let v_zero = inp.v.max_abs() == 0.0;
    let op = ScalarStepOp {
        grid: &grid,
        mass,
        adv_coef,
        v: if v_zero { None } else { Some(inp.v) },
        upwind: true,
        diff: params.d_diff,
        bc: ScalarBc::DirichletZero,
    };
    let x = scalar_solve("mass-fraction step", &op, &rhs, v_zero)?;
    Field::from_vec(&grid, x)
}

// ---------------------------------------------------------------------------
// momentum

struct MomentumStepOp<'a> {
    grid: &'a Arc<Grid>,
    mass: Vec<f64>,
    adv_coef: Vec<f64>,
    v: Option<&'a VectorField>,
    mu: f64,
    lambda: f64,
}

impl<'a> MomentumStepOp<'a> {
    fn masked_vector(&self, x: &[f64]) -> VectorField {
        let g = self.grid;
        let n = g.len();
        let mut comps = Vec::with_capacity(g.dim());
        for a in 0..g.dim() {
            let mut f = Field::zeros(g);
            g.for_each_node(|c, idx| {
                if !g.is_boundary(c) {
                    f.data_mut()[idx] = x[a * n + idx];
                }
            });
            comps.push(f);
        }
        VectorField::from_comps(comps).expect("component count matches dim")
    }
}

impl<'a> LinearOp for MomentumStepOp<'a> {
    fn len(&self) -> usize {
        self.grid.len() * self.grid.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        let n = g.len();
        let dim = g.dim();
        let spacing = g.spacing();
        let masked = self.masked_vector(x);
        let lame = constitutive::lame_apply(&masked, self.mu, self.lambda);
        for a in 0..dim {
            let xa = masked.comp(a);
            g.for_each_node(|c, idx| {
                let row = a * n + idx;
                if g.is_boundary(c) {
                    y[row] = x[row];
                    return;
                }
                let mut acc = self.mass[idx] * xa.data()[idx] + lame.comp(a).data()[idx];
                if let Some(v) = self.v {
                    for b in 0..dim {
                        let vb = v.comp(b).at(c);
                        if vb != 0.0 {
                            let h = spacing[b];
                            let mut lo = c;
                            lo[b] -= 1;
                            let mut hi = c;
                            hi[b] += 1;
                            let deriv = (xa.at(hi) - xa.at(lo)) / (2.0 * h);
                            acc += self.adv_coef[idx] * vb * deriv;
                        }
                    }
                }
                y[row] = acc;
            });
        }
    }

    fn diag(&self) -> Vec<f64> {
        let g = self.grid;
        let n = g.len();
        let dim = g.dim();
        let spacing = g.spacing();
        let lap_diag: f64 = (0..dim).map(|a| 2.0 / (spacing[a] * spacing[a])).sum();
        let mut d = vec![1.0; n * dim];
        for a in 0..dim {
            g.for_each_node(|c, idx| {
                if !g.is_boundary(c) {
                    d[a * n + idx] =
                        self.mass[idx] + self.mu * lap_diag + (self.lambda + self.mu) * 2.0
                            / (spacing[a] * spacing[a]);
                }
            });
        }
        d
    }
}

/// One backward-Euler step of
/// `ρ~ (u_t + v·∇u) - μ Δu - (λ+μ) ∇ div u = ρ~ f - ∇p + source`
/// as a coupled solve over all components. Homogeneous Dirichlet boundary.
pub fn solve_momentum_step(
    inp: &LinearStepInputs<'_, VectorField>,
    p: &Field,
    f: &VectorField,
    params: &SimParams,
) -> Result<VectorField> {
    inp.validate_common()?;
    if !inp.prev.is_all_finite() || !f.is_all_finite() {
        return Err(SimError::NonFinite("momentum inputs".into()));
    }
    check_field("pressure", p)?;
    if let Some(s) = inp.source {
        if !s.is_all_finite() {
            return Err(SimError::NonFinite("momentum source".into()));
        }
    }
    let grid = inp.prev.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let rho_t = inp.rho_floor();

    let mass: Vec<f64> = rho_t.data().iter().map(|&r| r / inp.dt).collect();
    let adv_coef: Vec<f64> = rho_t.data().to_vec();
    let grad_p = ops::gradient(p);

    let mut rhs = vec![0.0; n * dim];
    for a in 0..dim {
        grid.for_each_node(|c, idx| {
            if grid.is_boundary(c) {
                return;
            }
            let mut b = mass[idx] * inp.prev.comp(a).data()[idx];
            b += rho_t.data()[idx] * f.comp(a).data()[idx];
            b -= grad_p.comp(a).data()[idx];
            if let Some(s) = inp.source {
                b += s.comp(a).data()[idx];
            }
            rhs[a * n + idx] = b;
        });
    }

    let v_zero = inp.v.max_abs() == 0.0;
    let op = MomentumStepOp {
        grid: &grid,
        mass,
        adv_coef,
        v: if v_zero { None } else { Some(inp.v) },
        mu: params.mu,
        lambda: params.lambda,
    };
    let max_iter = 60 * op.len() + 200;
    let (x, _) = match linsolve::bicgstab(&op, &rhs, SOLVE_TOL, max_iter) {
        Ok(ok) => ok,
        Err(SimError::Diverged {
            iterations,
            residual,
            ..
        }) => {
            return Err(SimError::Diverged {
                what: "momentum step".into(),
                iterations,
                residual,
            })
        }
        Err(e) => return Err(e),
    };
    let mut comps = Vec::with_capacity(dim);
    for a in 0..dim {
        comps.push(Field::from_vec(&grid, x[a * n..(a + 1) * n].to_vec())?);
    }
    VectorField::from_comps(comps)
}
