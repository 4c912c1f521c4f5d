//! Central finite differences.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Relative step used when none is given: `h_j = FD_REL_STEP · (1 + |θ_j|)`.
pub const FD_REL_STEP: f64 = 1e-5;

/// Gradient by central differences with a common step `h`.
pub fn finite_difference_score<T, F>(loss: F, theta: &[T], h: T) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<T>,
{
    if !(h > T::zero()) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    stencil(loss, theta, |_| h)
}

/// Gradient by central differences with steps `rel · (1 + |θ_j|)`.
pub fn finite_difference_score_scaled<T, F>(loss: F, theta: &[T], rel: T) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<T>,
{
    if !(rel > T::zero()) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    stencil(loss, theta, |t| rel * (T::one() + t.abs()))
}

fn stencil<T, F, H>(loss: F, theta: &[T], step: H) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<T>,
    H: Fn(T) -> T,
{
    let mut x = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let h = step(theta[j]);
        x[j] = theta[j] + h;
        let up = loss(&x)?;
        x[j] = theta[j] - h;
        let down = loss(&x)?;
        x[j] = theta[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        g.push((up - down) / (h + h));
    }
    Ok(g)
}

/// Jacobian `∂f_i/∂θ_j` of a vector map by central differences with relative steps.
pub fn finite_difference_jacobian<T, F>(f: F, theta: &[T], rel: T) -> Result<Matrix<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>>,
{
    let d = theta.len();
    let mut x = theta.to_vec();
    let mut cols = Vec::with_capacity(d);
    for j in 0..d {
        let h = rel * (T::one() + theta[j].abs());
        x[j] = theta[j] + h;
        let up = f(&x)?;
        x[j] = theta[j] - h;
        let down = f(&x)?;
        x[j] = theta[j];
        if up.len() != down.len() || up.iter().chain(&down).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore);
        }
        cols.push(up.iter().zip(&down).map(|(&a, &b)| (a - b) / (h + h)).collect::<Vec<_>>());
    }
    let m = cols.first().map_or(0, Vec::len);
    let mut jac = Matrix::zeros(m, d);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}
