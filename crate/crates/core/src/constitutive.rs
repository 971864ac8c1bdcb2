//! Pointwise constitutive laws: pressure, reaction kinetics, heat source,
//! viscous dissipation and the elliptic viscosity operator.

use crate::grid::{Field, ScalarBc, VectorField};
use crate::ops;

/// Reaction-rate law parameters.
#[derive(Debug, Clone, Copy)]
pub struct ArrheniusParams {
    /// Temperature exponent (1/2 by default throughout the crate).
    pub alpha: f64,
    /// Activation energy, > 0.
    pub e_act: f64,
}

impl ArrheniusParams {
    pub fn new(alpha: f64, e_act: f64) -> ArrheniusParams {
        assert!(e_act > 0.0, "activation energy must be positive");
        assert!(alpha >= 0.0, "rate exponent must be nonnegative");
        ArrheniusParams { alpha, e_act }
    }
}

/// Polytropic pressure `p = R * rho * theta`, pointwise.
pub fn pressure(rho: &Field, theta: &Field, r_gas: f64) -> Field {
    rho.zip(theta, |r, t| r_gas * r * t)
}

/// Reaction rate `theta^alpha * exp(-E/theta)` for positive temperature,
/// zero otherwise. Total function: never panics, never returns NaN.
///
/// For `theta < E/709` the exponential underflows past the smallest normal
/// f64; the result is clamped to exactly 0, which is also the analytic limit.
pub fn arrhenius(theta: f64, p: ArrheniusParams) -> f64 {
    if theta <= 0.0 || theta.is_nan() {
        return 0.0;
    }
    if theta < p.e_act / 709.0 {
        return 0.0;
    }
    theta.powf(p.alpha) * (-p.e_act / theta).exp()
}

/// Analytic temperature derivative of [`arrhenius`]; zero for `theta <= 0`.
pub fn arrhenius_dtheta(theta: f64, p: ArrheniusParams) -> f64 {
    if theta <= 0.0 || theta.is_nan() || theta < p.e_act / 709.0 {
        return 0.0;
    }
    // d/dθ [θ^α e^{-E/θ}] = e^{-E/θ} (α θ^{α-1} + E θ^{α-2})
    (-p.e_act / theta).exp()
        * (p.alpha * theta.powf(p.alpha - 1.0) + p.e_act * theta.powf(p.alpha - 2.0))
}

/// Heat source `q * K * rate(theta) * Z`, pointwise.
pub fn heat_source(theta: &Field, z: &Field, q_heat: f64, k_rate: f64, p: ArrheniusParams) -> Field {
    theta.zip(z, |t, zz| q_heat * k_rate * arrhenius(t, p) * zz)
}

/// Viscous dissipation `(mu/2) |grad u + grad u^T|^2 + lambda (div u)^2`
/// from the discrete velocity gradient.
pub fn viscous_dissipation(u: &VectorField, mu: f64, lambda: f64) -> Field {
    let grid = u.grid().clone();
    let jac = ops::jacobian(u);
    let d = grid.dim();
    let mut out = Field::zeros(&grid);
    grid.for_each_node(|c, idx| {
        let mut frob = 0.0;
        let mut div = 0.0;
        for a in 0..d {
            for b in 0..d {
                let s = jac[a].comp(b).at(c) + jac[b].comp(a).at(c);
                frob += s * s;
            }
            div += jac[a].comp(a).at(c);
        }
        out.data_mut()[idx] = 0.5 * mu * frob + lambda * div * div;
    });
    out
}

/// Elliptic viscosity operator `-mu Δu - (lambda + mu) grad(div u)` with
/// homogeneous Dirichlet ghosts for the Laplacian part.
pub fn lame_apply(u: &VectorField, mu: f64, lambda: f64) -> VectorField {
    let grid = u.grid().clone();
    let div = ops::divergence(u);
    let grad_div = ops::gradient(&div);
    let mut comps = Vec::with_capacity(grid.dim());
    for a in 0..grid.dim() {
        let lap = ops::laplacian(u.comp(a), ScalarBc::DirichletZero);
        comps.push(lap.zip(grad_div.comp(a), |l, gd| -mu * l - (lambda + mu) * gd));
    }
    VectorField::from_comps(comps).expect("component count matches dim")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{pairwise_sum, Grid, PhiBc};
    use crate::oracle::scalar_max_search;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn line(n: usize) -> Arc<Grid> {
        Grid::line(n, 1.0 / (n as f64 - 1.0), 0.0).unwrap()
    }

    #[test]
    fn pressure_examples() {
        let g = line(5);
        let zero = Field::zeros(&g);
        let one = Field::constant(&g, 1.0);
        assert!(pressure(&zero, &one, 1.0).max_abs() == 0.0);
        assert!((pressure(&one, &one, 1.0).max() - 1.0).abs() < 1e-15);
        let rho = Field::constant(&g, 2.0);
        let th = Field::constant(&g, 3.0);
        let p = pressure(&rho, &th, 8.314);
        assert!((p.max() - 49.884).abs() < 1e-12);
    }

    #[test]
    fn arrhenius_nonpositive_temperature_is_zero() {
        let p = ArrheniusParams::new(0.5, 1.0);
        assert_eq!(arrhenius(-1.0, p), 0.0);
        assert_eq!(arrhenius(0.0, p), 0.0);
        assert_eq!(arrhenius(f64::NAN, p), 0.0);
        assert_eq!(arrhenius_dtheta(-1.0, p), 0.0);
        assert_eq!(arrhenius_dtheta(0.0, p), 0.0);
    }

    #[test]
    fn arrhenius_at_activation_energy() {
        for &e in &[0.5, 1.0, 2.0] {
            let p = ArrheniusParams::new(0.5, e);
            let want = e.sqrt() * (-1.0f64).exp();
            assert!((arrhenius(e, p) - want).abs() < 1e-15 * want.max(1.0));
        }
    }

    #[test]
    fn arrhenius_underflow_clamps_to_exact_zero() {
        let p = ArrheniusParams::new(0.5, 1.0);
        assert_eq!(arrhenius(1.0 / 710.0, p), 0.0);
        assert!(arrhenius(1.0 / 700.0, p) >= 0.0);
    }

    #[test]
    fn arrhenius_derivative_matches_finite_differences() {
        let p = ArrheniusParams::new(0.5, 1.3);
        for &theta in &[0.05, 0.2, 0.7, 1.3, 3.0, 10.0] {
            let h = 1e-6 * theta;
            let fd = (arrhenius(theta + h, p) - arrhenius(theta - h, p)) / (2.0 * h);
            let an = arrhenius_dtheta(theta, p);
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1e-12),
                "theta={theta}: fd={fd} analytic={an}"
            );
        }
        // vanishing limit from the right
        assert!(arrhenius_dtheta(1e-4, ArrheniusParams::new(0.5, 1.0)) < 1e-300);
    }

    #[test]
    fn arrhenius_is_nondecreasing() {
        let p = ArrheniusParams::new(0.5, 2.0);
        let mut prev = 0.0;
        for i in 0..400 {
            let theta = 0.01 + 0.05 * i as f64;
            let v = arrhenius(theta, p);
            assert!(v + 1e-15 >= prev, "decreasing at theta={theta}");
            prev = v;
        }
    }

    #[test]
    fn rate_over_theta_bound_from_scalar_maximizer() {
        // sup over theta of rate/theta is at theta = 2E for alpha = 1/2
        for &e in &[0.5, 1.0, 3.0] {
            let p = ArrheniusParams::new(0.5, e);
            let bound = (-0.5f64).exp() / (2.0 * e).sqrt();
            let (argmax, max) =
                scalar_max_search(&|t| arrhenius(t, p) / t, (1e-3, 100.0 * e)).unwrap();
            assert!((argmax - 2.0 * e).abs() < 1e-6 * e, "argmax {argmax}");
            assert!((max - bound).abs() < 1e-12);
            for i in 1..2000 {
                let theta = 0.01 * i as f64 * e;
                assert!(arrhenius(theta, p) / theta <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn rate_over_theta_squared_is_bounded() {
        let e = 1.5;
        let p = ArrheniusParams::new(0.5, e);
        // maximizer of theta^{-3/2} exp(-E/theta) is theta = 2E/3
        let arg = 2.0 * e / 3.0;
        let bound = arg.powf(-1.5) * (-e / arg).exp();
        let (argmax, max) =
            scalar_max_search(&|t| arrhenius(t, p) / (t * t), (1e-3, 100.0 * e)).unwrap();
        assert!((argmax - arg).abs() < 1e-6);
        assert!((max - bound).abs() < 1e-12);
        for i in 1..2000 {
            let theta = 0.01 * i as f64;
            assert!(arrhenius(theta, p) / (theta * theta) <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn heat_source_examples() {
        let g = line(5);
        let p = ArrheniusParams::new(0.5, 2.0);
        let th = Field::constant(&g, 2.0);
        let zero = Field::zeros(&g);
        let one = Field::constant(&g, 1.0);
        assert_eq!(heat_source(&th, &zero, 1.0, 1.0, p).max_abs(), 0.0);
        assert_eq!(heat_source(&zero, &one, 1.0, 1.0, p).max_abs(), 0.0);
        let hs = heat_source(&th, &one, 1.0, 1.0, p);
        let want = 2.0f64.sqrt() * (-1.0f64).exp();
        assert!((hs.max() - want).abs() < 1e-15);
    }

    #[test]
    fn dissipation_examples() {
        let g2 = Grid::new(
            2,
            &[9, 9],
            &[0.125, 0.125],
            &[0.0, 0.0],
            ScalarBc::DirichletZero,
            PhiBc::ZeroMeanPeriodic,
        )
        .unwrap();
        let mu = 0.3;
        let lambda = 0.2;

        let c = VectorField::from_fn(&g2, |_| [1.0, 2.0, 0.0]);
        assert!(viscous_dissipation(&c, mu, lambda).max_abs() < 1e-13);

        // u = (x, -y): grad u + grad u^T = diag(2, -2), div u = 0 -> Q = 4 mu
        let v = VectorField::from_fn(&g2, |x| [x[0], -x[1], 0.0]);
        let q = viscous_dissipation(&v, mu, lambda);
        g2.for_each_node(|cc, idx| {
            assert!(
                (q.data()[idx] - 4.0 * mu).abs() < 1e-10,
                "Q={} at {:?}",
                q.data()[idx],
                cc
            );
        });

        // 1-d u = x: Q = 2 mu + lambda
        let g1 = line(9);
        let v = VectorField::from_fn(&g1, |x| [x[0], 0.0, 0.0]);
        let q = viscous_dissipation(&v, mu, lambda);
        for &val in q.data() {
            assert!((val - (2.0 * mu + lambda)).abs() < 1e-10);
        }
    }

    #[test]
    fn dissipation_nonnegative_when_admissible() {
        // 3*lambda + 2*mu >= 0 with negative lambda
        let g2 = Grid::new(
            2,
            &[11, 11],
            &[0.1, 0.1],
            &[0.0, 0.0],
            ScalarBc::DirichletZero,
            PhiBc::ZeroMeanPeriodic,
        )
        .unwrap();
        let mu = 0.3;
        let lambda = -0.19; // 3*(-0.19) + 0.6 = 0.03 >= 0
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let k1: f64 = rng.gen_range(1.0..3.0);
            let v = VectorField::from_fn(&g2, |x| {
                [
                    a * (k1 * PI * x[0]).sin() * (PI * x[1]).sin(),
                    b * (PI * x[0]).sin() * (k1 * PI * x[1]).cos(),
                    0.0,
                ]
            });
            let q = viscous_dissipation(&v, mu, lambda);
            assert!(q.min() >= -1e-12, "Q min = {}", q.min());
        }
    }

    #[test]
    fn lame_zero_and_sine() {
        let mu = 0.4;
        let lambda = 0.1;
        let g = line(9);
        let z = VectorField::zeros(&g);
        assert!(lame_apply(&z, mu, lambda).max_abs() == 0.0);

        // 1-d: L u = -(2 mu + lambda) u_xx; second-order convergence in the
        // interior (the composed grad-div closure is lower order in the
        // two-node boundary strip)
        let mut errs = Vec::new();
        for &n in &[33usize, 65, 129] {
            let g = line(n);
            let u = VectorField::from_fn(&g, |x| [(PI * x[0]).sin(), 0.0, 0.0]);
            let lu = lame_apply(&u, mu, lambda);
            let want = Field::from_fn(&g, |x| (2.0 * mu + lambda) * PI * PI * (PI * x[0]).sin());
            let mut worst = 0.0f64;
            g.for_each_node(|c, idx| {
                if c[0] >= 2 && c[0] + 2 < g.shape()[0] {
                    worst = worst.max((lu.comp(0).data()[idx] - want.data()[idx]).abs());
                }
            });
            errs.push(worst);
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0]);
        let order = (errs[1] / errs[2]).log2();
        assert!(order >= 1.8, "order {order}, errs {errs:?}");
    }

    #[test]
    fn lame_quadratic_form_nonnegative() {
        let g2 = Grid::new(
            2,
            &[13, 13],
            &[1.0 / 12.0, 1.0 / 12.0],
            &[0.0, 0.0],
            ScalarBc::DirichletZero,
            PhiBc::ZeroMeanPeriodic,
        )
        .unwrap();
        let mu = 0.5;
        let lambda = -0.2;
        let hv = g2.cell_volume();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            // random interior-supported velocity
            let mut u = VectorField::zeros(&g2);
            for a in 0..2 {
                let comp = u.comp_mut(a);
                let data = comp.data_mut();
                g2.for_each_node(|c, idx| {
                    let interior =
                        c[0] >= 3 && c[0] + 3 < 13 && c[1] >= 3 && c[1] + 3 < 13;
                    if interior {
                        data[idx] = rng.gen_range(-1.0..1.0);
                    }
                });
            }
            let lu = lame_apply(&u, mu, lambda);
            let mut terms = Vec::new();
            for a in 0..2 {
                for (x, y) in u.comp(a).data().iter().zip(lu.comp(a).data()) {
                    terms.push(x * y * hv);
                }
            }
            let quad = pairwise_sum(&terms);
            assert!(quad >= -1e-12, "quadratic form {quad}");
        }
    }
}
