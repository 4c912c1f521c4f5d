//! Closed-form Q-posterior for exponential-family models in the natural parameter.

use super::fd::finite_difference_jacobian;
use super::weight::WeightMatrix;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{lu_solve, Matrix};
use crate::scalar::Real;

/// Gaussian Q-posterior `N(b_n, Σ_n⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateResult<T> {
    pub b_n: Vec<T>,
    /// Posterior covariance.
    pub sigma_inv: Matrix<T>,
}

/// Precision-weighted combination of `N(S̄_n, W_n/n)` and the prior `N(μ0, W0)`.
///
/// The posterior precision is `n W_n⁻¹ + W0⁻¹`; the mean is
/// `(n W_n⁻¹ + W0⁻¹)⁻¹ (n W_n⁻¹ S̄_n + W0⁻¹ μ0)`.
pub fn conjugate_qposterior<T: Real>(
    s_bar: &[T],
    w_n: &WeightMatrix<T>,
    mu0: &[T],
    w0: &WeightMatrix<T>,
    n: usize,
) -> Result<ConjugateResult<T>> {
    let d = w_n.dim();
    check_dim(d, s_bar.len())?;
    check_dim(d, mu0.len())?;
    check_dim(d, w0.dim())?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let nf = T::from_usize_lossy(n);
    let data_prec = w_n.inverse()?.scaled(nf);
    let prior_prec = w0.inverse()?;
    let precision = WeightMatrix::positive_definite(data_prec.add(&prior_prec)?)?;
    let rhs: Vec<T> = data_prec
        .matvec(s_bar)?
        .iter()
        .zip(prior_prec.matvec(mu0)?)
        .map(|(&a, b)| a + b)
        .collect();
    let f = precision.factor()?;
    Ok(ConjugateResult { b_n: f.solve(&rhs)?, sigma_inv: f.inverse() })
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;

/// Solves `∇A(η) = μ` by damped Newton iterations.
///
/// The Jacobian of `∇A` is taken by central differences. Each step is halved
/// until the residual norm decreases.
pub fn mean_to_natural<T, G>(mu: &[T], grad_a: G, init: &[T]) -> Result<Vec<T>>
where
    T: Real,
    G: Fn(&[T]) -> Vec<T>,
{
    check_dim(mu.len(), init.len())?;
    let residual = |eta: &[T]| -> Vec<T> { grad_a(eta).iter().zip(mu).map(|(&g, &m)| g - m).collect() };
    let norm = |r: &[T]| r.iter().map(|&v| v * v).sum::<T>().sqrt();
    let tol = T::lit(NEWTON_TOL);

    let mut eta = init.to_vec();
    let mut r = residual(&eta);
    let mut rn = norm(&r);
    for _ in 0..NEWTON_MAX_ITER {
        if !rn.is_finite() {
            break;
        }
        if rn < tol {
            return Ok(eta);
        }
        let jac = finite_difference_jacobian(|e| Ok(grad_a(e)), &eta, T::lit(1e-6))?;
        let Ok(step) = lu_solve(&jac, &r) else {
            break;
        };
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<T> = eta.iter().zip(&step).map(|(&e, &s)| e - t * s).collect();
            let rc = residual(&cand);
            let rcn = norm(&rc);
            if rcn.is_finite() && rcn < rn {
                eta = cand;
                r = rc;
                rn = rcn;
                accepted = true;
                break;
            }
            t = t * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    if rn < tol {
        return Ok(eta);
    }
    Err(Error::InversionFailure {
        iterations: NEWTON_MAX_ITER,
        residual: rn.to_f64().unwrap_or(f64::NAN),
    })
}
