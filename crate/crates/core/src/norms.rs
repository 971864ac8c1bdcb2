//! Discrete Lebesgue/Sobolev norms and the running blow-up functionals.
//!
//! All reductions use fixed-order pairwise summation, so repeated runs give
//! bit-identical values. Grid maxima are reported for the sup norms; they
//! are lower bounds for the continuum suprema.

use crate::error::{Result, SimError};
use crate::grid::{pairwise_sum, Field, ScalarBc, State, VectorField};
use crate::ops;

/// Norm selector: Lebesgue exponent `p` (1..=inf) and derivative order `k`.
#[derive(Debug, Clone, Copy)]
pub struct NormSpec {
    pub p: f64,
    pub k: u8,
}

impl NormSpec {
    pub fn new(p: f64, k: u8) -> Result<NormSpec> {
        if !(p >= 1.0) {
            return Err(SimError::InvalidInput(format!("norm exponent p={p} must be >= 1")));
        }
        if k > 2 {
            return Err(SimError::InvalidInput(format!("derivative order k={k} must be <= 2")));
        }
        Ok(NormSpec { p, k })
    }
}

/// Trapezoidal quadrature weight of a node: boundary nodes own half a cell
/// per touching axis, so `sum w h^d` is exactly the domain volume.
pub fn quad_weight(grid: &crate::grid::Grid, c: [usize; 3]) -> f64 {
    let mut w = 1.0;
    for a in 0..grid.dim() {
        if c[a] == 0 || c[a] + 1 == grid.shape()[a] {
            w *= 0.5;
        }
    }
    w
}

/// Trapezoidal integral of a field over the domain.
pub fn integral(f: &Field) -> f64 {
    let g = f.grid();
    let hv = g.cell_volume();
    let mut terms = Vec::with_capacity(g.len());
    g.for_each_node(|c, idx| terms.push(f.data()[idx] * quad_weight(g, c) * hv));
    pairwise_sum(&terms)
}

/// `(integral of |f|^p)^(1/p)` by trapezoidal quadrature; the grid maximum
/// of `|f|` for `p = inf`.
pub fn lp_norm(f: &Field, p: f64) -> f64 {
    if p.is_infinite() {
        return f.max_abs();
    }
    let g = f.grid();
    let hv = g.cell_volume();
    let mut terms = Vec::with_capacity(g.len());
    g.for_each_node(|c, idx| {
        terms.push(f.data()[idx].abs().powf(p) * quad_weight(g, c) * hv)
    });
    pairwise_sum(&terms).powf(1.0 / p)
}

/// Lp norm of the pointwise Euclidean magnitude of a vector field.
pub fn lp_norm_vec(v: &VectorField, p: f64) -> f64 {
    lp_norm(&v.magnitude(), p)
}

/// Lp norm of the pointwise Frobenius magnitude of a list of vector fields
/// (used for Jacobians and Hessians).
fn lp_norm_tensor(rows: &[VectorField], p: f64) -> f64 {
    let grid = rows[0].grid().clone();
    let mut mag = Field::zeros(&grid);
    for row in rows {
        for comp in row.comps() {
            for (m, &v) in mag.data_mut().iter_mut().zip(comp.data()) {
                *m += v * v;
            }
        }
    }
    for m in mag.data_mut().iter_mut() {
        *m = m.sqrt();
    }
    lp_norm(&mag, p)
}

/// Sobolev norm as the sum of the Lp norms of the field and its discrete
/// derivatives up to order `k`. First derivatives use one-sided closures at
/// the boundary; the pure second derivatives take their ghost values from
/// `bc`.
pub fn sobolev_norm(f: &Field, k: u8, p: f64, bc: ScalarBc) -> f64 {
    let mut total = lp_norm(f, p);
    if k >= 1 {
        total += lp_norm_vec(&ops::gradient(f), p);
    }
    if k >= 2 {
        total += lp_norm(&hessian_magnitude(f, bc), p);
    }
    total
}

/// Sobolev norm of a vector field (componentwise derivatives, pointwise
/// Euclidean/Frobenius magnitudes).
pub fn sobolev_norm_vec(v: &VectorField, k: u8, p: f64, bc: ScalarBc) -> f64 {
    let mut total = lp_norm_vec(v, p);
    if k >= 1 {
        total += lp_norm_tensor(&ops::jacobian(v), p);
    }
    if k >= 2 {
        let grid = v.grid().clone();
        let mut mag = Field::zeros(&grid);
        for comp in v.comps() {
            let h = hessian_magnitude(comp, bc);
            for (m, &x) in mag.data_mut().iter_mut().zip(h.data()) {
                *m += x * x;
            }
        }
        for m in mag.data_mut().iter_mut() {
            *m = m.sqrt();
        }
        total += lp_norm(&mag, p);
    }
    total
}

/// Pointwise Frobenius magnitude of the discrete Hessian.
fn hessian_magnitude(f: &Field, bc: ScalarBc) -> Field {
    let grid = f.grid().clone();
    let d = grid.dim();
    let grad = ops::gradient(f);
    let mut sq = Field::zeros(&grid);
    // off-diagonal entries from composed first differences (both orderings
    // collapse to the symmetric average)
    for a in 0..d {
        let ga = ops::gradient(grad.comp(a));
        for b in 0..d {
            if a == b {
                continue;
            }
            for (s, &x) in sq.data_mut().iter_mut().zip(ga.comp(b).data()) {
                *s += x * x;
            }
        }
    }
    // pure second derivatives from the compact stencil with bc ghosts
    for a in 0..d {
        let mut axis_field = Field::zeros(&grid);
        // isolate d^2/dx_a^2 by zeroing the other axes' contributions:
        // evaluate the compact 1-d stencil along axis a only
        let one_axis = second_derivative_axis(f, a, bc);
        for (s, &x) in axis_field.data_mut().iter_mut().zip(one_axis.data()) {
            *s = x;
        }
        for (s, &x) in sq.data_mut().iter_mut().zip(axis_field.data()) {
            *s += x * x;
        }
    }
    for s in sq.data_mut().iter_mut() {
        *s = s.sqrt();
    }
    sq
}

fn second_derivative_axis(f: &Field, axis: usize, bc: ScalarBc) -> Field {
    let grid = f.grid().clone();
    let n = grid.shape()[axis];
    let h2 = grid.spacing()[axis] * grid.spacing()[axis];
    let mut out = Field::zeros(&grid);
    grid.for_each_node(|c, idx| {
        let at = |ii: usize| {
            let mut cc = c;
            cc[axis] = ii;
            f.at(cc)
        };
        let i = c[axis];
        let (lo, hi) = if i == 0 {
            let ghost = match bc {
                ScalarBc::DirichletZero => -at(1),
                ScalarBc::NeumannZero => at(1),
            };
            (ghost, at(1))
        } else if i + 1 == n {
            let ghost = match bc {
                ScalarBc::DirichletZero => -at(n - 2),
                ScalarBc::NeumannZero => at(n - 2),
            };
            (at(n - 2), ghost)
        } else {
            (at(i - 1), at(i + 1))
        };
        out.data_mut()[idx] = (lo - 2.0 * at(i) + hi) / h2;
    });
    out
}

/// Intersection-space norm realized as the max of the two member norms.
pub fn h1_w1q_norm(f: &Field, q: f64) -> f64 {
    let h1 = sobolev_norm(f, 1, 2.0, ScalarBc::DirichletZero);
    let w1q = sobolev_norm(f, 1, q, ScalarBc::DirichletZero);
    h1.max(w1q)
}

/// Growth functional `1 + |rho|_{H1 ∩ W1q} + |theta|_{H1} + |u|_{H1} + |Z|_{H1}`.
pub fn phi_functional(s: &State, q_sob: f64) -> f64 {
    let bc = s.grid().bc_theta;
    1.0 + h1_w1q_norm(&s.rho, q_sob)
        + sobolev_norm(&s.theta, 1, 2.0, bc)
        + sobolev_norm_vec(&s.u, 1, 2.0, ScalarBc::DirichletZero)
        + sobolev_norm(&s.z, 1, 2.0, ScalarBc::DirichletZero)
}

/// Running record of the blow-up functionals along a state stream.
#[derive(Debug, Clone, Default)]
pub struct BlowupSeries {
    /// Time of the most recent state observed.
    pub times: Vec<f64>,
    /// Growth functional per observed state.
    pub phi: Vec<f64>,
    /// Running max of the temperature sup norm.
    pub sup_theta: f64,
    /// Left-endpoint time integral of the velocity-gradient sup norm.
    pub int_grad_u: f64,
    /// Left-endpoint time integral of the mass-fraction-gradient sup norm.
    pub int_grad_z: f64,
}

impl BlowupSeries {
    pub fn new() -> BlowupSeries {
        BlowupSeries::default()
    }

    /// Combined breakdown quantity `sup|theta| + ∫|grad u|_inf + ∫|grad Z|_inf`.
    pub fn bkm_total(&self) -> f64 {
        self.sup_theta + self.int_grad_u + self.int_grad_z
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// Fold one state into the series. The accumulators advance by the
/// left-endpoint rule: the state at `t` contributes `value(t) * dt` for the
/// step it opens. States must arrive in increasing time order.
pub fn bkm_accumulate(series: &mut BlowupSeries, s: &State, dt: f64, q_sob: f64) -> Result<()> {
    if let Some(last) = series.last_time() {
        if s.time <= last {
            return Err(SimError::Rejected(format!(
                "state at time {} arrived after time {last}",
                s.time
            )));
        }
    }
    let grad_u_inf = lp_norm_tensor(&ops::jacobian(&s.u), f64::INFINITY);
    let grad_z_inf = lp_norm_vec(&ops::gradient(&s.z), f64::INFINITY);
    series.sup_theta = series.sup_theta.max(lp_norm(&s.theta, f64::INFINITY));
    series.int_grad_u += grad_u_inf * dt;
    series.int_grad_z += grad_z_inf * dt;
    series.times.push(s.time);
    series.phi.push(phi_functional(s, q_sob));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Trajectory, VectorField};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn line(n: usize) -> Arc<Grid> {
        Grid::line(n, 1.0 / (n as f64 - 1.0), 0.0).unwrap()
    }

    fn zero_state(g: &Arc<Grid>, t: f64) -> State {
        State {
            time: t,
            rho: Field::zeros(g),
            theta: Field::zeros(g),
            u: VectorField::zeros(g),
            z: Field::zeros(g),
            phi: Field::zeros(g),
        }
    }

    #[test]
    fn lp_of_constant_field() {
        let g = line(11);
        let f = Field::constant(&g, 3.0);
        let vol = g.lengths()[0]; // 1-d domain volume
        for &p in &[1.0, 2.0, 6.0] {
            let want = 3.0 * vol.powf(1.0 / p);
            assert!((lp_norm(&f, p) - want).abs() < 1e-13);
        }
        assert!((integral(&f) - 3.0 * vol).abs() < 1e-13);
    }

    #[test]
    fn linf_is_the_spike() {
        let g = line(11);
        let mut f = Field::zeros(&g);
        f.data_mut()[4] = 7.0;
        f.data_mut()[7] = -3.0;
        assert_eq!(lp_norm(&f, f64::INFINITY), 7.0);
    }

    #[test]
    fn l2_of_sine_converges_to_analytic_value() {
        let g = line(129);
        let f = Field::from_fn(&g, |x| (PI * x[0]).sin());
        assert!((lp_norm(&f, 2.0) - 1.0 / 2.0f64.sqrt()).abs() < 1e-4);

        // quadratic convergence on an integrand that the lattice does not
        // sum exactly
        let mut errs = Vec::new();
        let want = ((2.0f64.exp() - 1.0) / 2.0).sqrt();
        for &n in &[33usize, 65, 129] {
            let g = line(n);
            let f = Field::from_fn(&g, |x| x[0].exp());
            errs.push((lp_norm(&f, 2.0) - want).abs());
        }
        assert!(errs[2] < 1e-4);
        assert!(errs[0] / errs[2] > 8.0, "errors {errs:?}");
    }

    #[test]
    fn sobolev_constant_neumann_reduces_to_lp() {
        let g = line(11);
        let f = Field::constant(&g, 2.5);
        let a = sobolev_norm(&f, 1, 2.0, ScalarBc::NeumannZero);
        let b = lp_norm(&f, 2.0);
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn h1_of_sine_matches_analytic_sum() {
        let g = line(257);
        let f = Field::from_fn(&g, |x| (PI * x[0]).sin());
        let want = (1.0 + PI) / 2.0f64.sqrt();
        let got = sobolev_norm(&f, 1, 2.0, ScalarBc::DirichletZero);
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive() {
        let g = line(33);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let f = Field::from_fn(&g, |x| (3.1 * x[0]).sin() + rng.gen_range(-0.01..0.01));
            let h = Field::from_fn(&g, |x| (x[0] * x[0]).cos() - rng.gen_range(-0.01..0.01));
            for &p in &[1.0, 2.0, 6.0, f64::INFINITY] {
                let a = 3.7;
                assert!(
                    (lp_norm(&f.map(|x| a * x), p) - a * lp_norm(&f, p)).abs()
                        < 1e-11 * lp_norm(&f, p).max(1.0)
                );
                let sum = f.zip(&h, |x, y| x + y);
                assert!(lp_norm(&sum, p) <= lp_norm(&f, p) + lp_norm(&h, p) + 1e-12);
            }
            // exact homogeneity of the sobolev norm
            let s1 = sobolev_norm(&f, 2, 2.0, ScalarBc::DirichletZero);
            let s2 = sobolev_norm(&f.map(|x| 2.0 * x), 2, 2.0, ScalarBc::DirichletZero);
            assert!((s2 - 2.0 * s1).abs() < 1e-12 * s1);
        }
    }

    #[test]
    fn phi_functional_examples() {
        let g = line(11);
        let s = zero_state(&g, 0.0);
        assert!((phi_functional(&s, 6.0) - 1.0).abs() < 1e-14);

        let mut s2 = zero_state(&g, 0.0);
        s2.rho = Field::constant(&g, 2.0);
        let vol = g.lengths()[0];
        let want = 1.0 + 2.0 * vol.powf(0.5f64).max(vol.powf(1.0 / 6.0));
        assert!((phi_functional(&s2, 6.0) - want).abs() < 1e-12);

        // scaling any single field strictly increases the functional
        let base = phi_functional(&s2, 6.0);
        s2.rho = Field::constant(&g, 3.0);
        assert!(phi_functional(&s2, 6.0) > base);
    }

    #[test]
    fn bkm_accumulator_examples() {
        let g = line(11);
        let mut series = BlowupSeries::new();
        let dt = 0.25;

        // zero stream stays zero
        for n in 0..4 {
            bkm_accumulate(&mut series, &zero_state(&g, n as f64 * dt), dt, 6.0).unwrap();
        }
        assert_eq!(series.int_grad_u, 0.0);
        assert_eq!(series.sup_theta, 0.0);

        // constant gradient magnitude g0 over N steps integrates to g0*N*dt
        let mut series = BlowupSeries::new();
        let n_steps = 5;
        for n in 0..n_steps {
            let mut s = zero_state(&g, n as f64 * dt);
            s.u = VectorField::from_fn(&g, |x| [2.0 * x[0], 0.0, 0.0]);
            bkm_accumulate(&mut series, &s, dt, 6.0).unwrap();
        }
        assert!((series.int_grad_u - 2.0 * n_steps as f64 * dt).abs() < 1e-12);

        // hand-built two-step stream
        let mut series = BlowupSeries::new();
        let mut s0 = zero_state(&g, 0.0);
        s0.z = Field::from_fn(&g, |x| 3.0 * x[0]);
        let mut s1 = zero_state(&g, dt);
        s1.z = Field::from_fn(&g, |x| 5.0 * x[0]);
        s1.theta = Field::constant(&g, 0.7);
        bkm_accumulate(&mut series, &s0, dt, 6.0).unwrap();
        bkm_accumulate(&mut series, &s1, dt, 6.0).unwrap();
        assert!((series.int_grad_z - (3.0 + 5.0) * dt).abs() < 1e-12);
        assert!((series.sup_theta - 0.7).abs() < 1e-15);

        // out-of-order times rejected
        let err = bkm_accumulate(&mut series, &zero_state(&g, 0.0), dt, 6.0);
        assert!(err.is_err());
    }

    #[test]
    fn norm_spec_validation() {
        assert!(NormSpec::new(0.5, 1).is_err());
        assert!(NormSpec::new(2.0, 3).is_err());
        assert!(NormSpec::new(f64::INFINITY, 2).is_ok());
    }

    #[test]
    fn trajectory_type_is_usable_here() {
        // smoke check that State/Trajectory wire together for the monitors
        let g = line(5);
        let t = Trajectory::new(0.1, vec![zero_state(&g, 0.0), zero_state(&g, 0.1)]).unwrap();
        assert_eq!(t.len(), 2);
    }
}
