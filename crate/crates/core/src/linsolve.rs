//! Matrix-free Krylov solvers behind one "solve to relative residual"
//! contract: Jacobi-preconditioned conjugate gradients for symmetric
//! operators and stabilized bi-conjugate gradients for advective ones.

use crate::error::{Result, SimError};
use crate::grid::pairwise_sum;

pub trait LinearOp {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Approximate matrix diagonal for Jacobi preconditioning; entries must
    /// be nonzero.
    fn diag(&self) -> Vec<f64>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let terms: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();
    pairwise_sum(&terms)
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(SimError::NonFinite(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

/// Preconditioned conjugate gradients for symmetric positive definite
/// operators. Converges when the true residual satisfies
/// `|b - Ax| <= tol * |b|`.
pub fn cg(op: &dyn LinearOp, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    check_finite("rhs", b)?;
    let n = op.len();
    let bnorm = norm(b);
    if !bnorm.is_finite() {
        return Err(SimError::NonFinite("rhs norm overflowed".into()));
    }
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = op.diag().iter().map(|&d| 1.0 / d).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap == 0.0 {
            return Err(SimError::Diverged {
                what: "cg breakdown".into(),
                iterations: it,
                residual: norm(&r) / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm(&r);
        if !rn.is_finite() {
            return Err(SimError::NonFinite("cg residual overflowed".into()));
        }
        if rn <= tol * bnorm {
            return Ok((
                x,
                SolveStats {
                    iterations: it + 1,
                    residual: rn / bnorm,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SimError::Diverged {
        what: "cg".into(),
        iterations: max_iter,
        residual: norm(&r) / bnorm,
    })
}

/// Jacobi-preconditioned BiCGStab for general (advective) operators.
/// Orthogonality breakdowns restart the recurrence from the current
/// residual; only iteration exhaustion reports divergence.
pub fn bicgstab(
    op: &dyn LinearOp,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    check_finite("rhs", b)?;
    let n = op.len();
    let bnorm = norm(b);
    if !bnorm.is_finite() {
        return Err(SimError::NonFinite("rhs norm overflowed".into()));
    }
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = op.diag().iter().map(|&d| 1.0 / d).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut fresh = true; // recurrence just (re)started from r
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let restart = |r: &[f64],
                           r_hat: &mut Vec<f64>,
                           p: &mut Vec<f64>,
                           v: &mut Vec<f64>,
                           rho: &mut f64,
                           alpha: &mut f64,
                           omega: &mut f64| {
            r_hat.copy_from_slice(r);
            p.iter_mut().for_each(|x| *x = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
            *rho = 1.0;
            *alpha = 1.0;
            *omega = 1.0;
        };
        let rho_new = dot(&r_hat, &r);
        if !rho_new.is_finite() {
            return Err(SimError::NonFinite("bicgstab inner product overflowed".into()));
        }
        if rho_new == 0.0 {
            if fresh {
                // restarting cannot help: the residual is orthogonal to itself
                // only when it vanishes
                let res = true_residual(op, &x, b)?;
                if res <= tol {
                    return Ok((x, SolveStats { iterations: it, residual: res }));
                }
                return Err(SimError::Diverged {
                    what: "bicgstab breakdown".into(),
                    iterations: it,
                    residual: res,
                });
            }
            restart(&r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega);
            fresh = true;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            phat[i] = p[i] * inv_diag[i];
        }
        op.apply(&phat, &mut v);
        let rhat_v = dot(&r_hat, &v);
        if rhat_v == 0.0 || !rhat_v.is_finite() {
            if !rhat_v.is_finite() {
                return Err(SimError::NonFinite("bicgstab inner product overflowed".into()));
            }
            if fresh {
                return Err(SimError::Diverged {
                    what: "bicgstab breakdown".into(),
                    iterations: it,
                    residual: norm(&r) / bnorm,
                });
            }
            restart(&r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega);
            fresh = true;
            continue;
        }
        fresh = false;
        alpha = rho / rhat_v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            let res = true_residual(op, &x, b)?;
            if res <= tol {
                return Ok((x, SolveStats { iterations: it, residual: res }));
            }
            // keep iterating from the updated x with a fresh recurrence
            r.copy_from_slice(&s);
            restart(&r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega);
            fresh = true;
            continue;
        }
        for i in 0..n {
            shat[i] = s[i] * inv_diag[i];
        }
        op.apply(&shat, &mut t);
        let tt = dot(&t, &t);
        if !tt.is_finite() {
            return Err(SimError::NonFinite("bicgstab inner product overflowed".into()));
        }
        if tt == 0.0 {
            return Err(SimError::Diverged {
                what: "bicgstab breakdown".into(),
                iterations: it,
                residual: norm(&r) / bnorm,
            });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = norm(&r);
        if !rn.is_finite() {
            return Err(SimError::NonFinite("bicgstab residual overflowed".into()));
        }
        if rn <= tol * bnorm {
            let res = true_residual(op, &x, b)?;
            if res <= tol * 10.0 {
                return Ok((x, SolveStats { iterations: it, residual: res }));
            }
        }
        if omega == 0.0 {
            restart(&r, &mut r_hat, &mut p, &mut v, &mut rho, &mut alpha, &mut omega);
            fresh = true;
        }
    }
    Err(SimError::Diverged {
        what: "bicgstab".into(),
        iterations: max_iter,
        residual: norm(&r) / bnorm,
    })
}

fn true_residual(op: &dyn LinearOp, x: &[f64], b: &[f64]) -> Result<f64> {
    let mut ax = vec![0.0; op.len()];
    op.apply(x, &mut ax);
    let diff: Vec<f64> = ax.iter().zip(b).map(|(&a, &bb)| a - bb).collect();
    let r = norm(&diff) / norm(b);
    if !r.is_finite() {
        return Err(SimError::NonFinite("residual overflowed".into()));
    }
    Ok(r)
}
