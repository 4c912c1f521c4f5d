//! Score-covariance estimates `W_n(θ)` and the strategies that produce them.

use rand::{Rng, RngExt};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Symmetric score-covariance matrix with a cached Cholesky factor.
///
/// The factor is absent when the matrix is not positive definite even after
/// one diagonal jitter of `1e-10 · trace / d`. Such a matrix can still be
/// inspected, but any Q-density evaluation with it fails with
/// [`Error::SingularWeight`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    entries: Matrix<T>,
    factor: Option<Cholesky<T>>,
}

impl<T: Real> WeightMatrix<T> {
    pub fn new(mut entries: Matrix<T>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidArgument(format!(
                "weight matrix must be square, got {}x{}",
                entries.rows(),
                entries.cols()
            )));
        }
        if !entries.is_symmetric(T::lit(1e-10)) {
            return Err(Error::InvalidArgument("weight matrix is not symmetric".into()));
        }
        entries.symmetrize();
        let factor = factorize_with_jitter(&entries);
        Ok(Self { entries, factor })
    }

    /// Like [`WeightMatrix::new`] but fails unless the matrix is positive definite.
    pub fn positive_definite(entries: Matrix<T>) -> Result<Self> {
        let w = Self::new(entries)?;
        w.factor()?;
        Ok(w)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(Matrix::identity(d)).expect("identity is symmetric")
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.factor.is_some()
    }

    pub fn factor(&self) -> Result<&Cholesky<T>> {
        self.factor.as_ref().ok_or_else(|| Error::SingularWeight {
            condition: condition_hint(&self.entries),
        })
    }

    pub fn log_det(&self) -> Result<T> {
        Ok(self.factor()?.log_det())
    }

    pub fn inverse(&self) -> Result<Matrix<T>> {
        Ok(self.factor()?.inverse())
    }

    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.entries.scaled(c))
    }
}

fn factorize_with_jitter<T: Real>(a: &Matrix<T>) -> Option<Cholesky<T>> {
    if let Some(c) = Cholesky::new(a) {
        return Some(c);
    }
    let d = a.rows();
    if d == 0 {
        return None;
    }
    let jitter = T::lit(1e-10) * a.trace() / T::from_usize_lossy(d);
    if !(jitter > T::zero()) {
        return None;
    }
    let mut b = a.clone();
    for i in 0..d {
        b[(i, i)] = b[(i, i)] + jitter;
    }
    Cholesky::new(&b)
}

fn condition_hint<T: Real>(a: &Matrix<T>) -> f64 {
    let diag = a.diagonal();
    let max = diag.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let min = diag.iter().fold(T::infinity(), |m, v| m.min(v.abs()));
    if min > T::zero() {
        // diagonal ratio is a lower bound; the matrix failed to factor anyway
        (max / min).to_f64().unwrap_or(f64::INFINITY).max(1e16)
    } else {
        f64::INFINITY
    }
}

/// Rule producing `W_n(θ)` inside the Q-density.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightStrategy<T> {
    /// Sample covariance of per-observation score rows, divisor n.
    PerObsSampleCov,
    /// Covariance of the score re-evaluated at bootstrap replicates of a statistic.
    StatisticBootstrap { replicates: usize },
    /// A matrix computed once (for example at a preliminary estimate) and held fixed.
    FixedPlugIn(WeightMatrix<T>),
}

impl<T: Real> WeightStrategy<T> {
    pub fn statistic_bootstrap(replicates: usize) -> Result<Self> {
        if replicates < 2 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least 2 replicates, got {replicates}"
            )));
        }
        Ok(Self::StatisticBootstrap { replicates })
    }
}

/// `n⁻¹ Σ (m_i − m̄)(m_i − m̄)ᵀ` over the rows of `scores`.
pub fn per_obs_sample_covariance<T: Real>(scores: &Matrix<T>) -> Result<WeightMatrix<T>> {
    if scores.rows() < 2 {
        return Err(Error::InsufficientScores(scores.rows()));
    }
    WeightMatrix::new(covariance_rows(scores, None)?)
}

/// Same as [`per_obs_sample_covariance`] with each row repeated `counts[i]` times.
pub fn weighted_sample_covariance<T: Real>(
    scores: &Matrix<T>,
    counts: &[usize],
) -> Result<WeightMatrix<T>> {
    check_dim(scores.rows(), counts.len())?;
    let total: usize = counts.iter().sum();
    if total < 2 {
        return Err(Error::InsufficientScores(total));
    }
    WeightMatrix::new(covariance_rows(scores, Some(counts))?)
}

pub(crate) fn covariance_rows<T: Real>(
    scores: &Matrix<T>,
    counts: Option<&[usize]>,
) -> Result<Matrix<T>> {
    let d = scores.cols();
    let weight = |i: usize| counts.map_or(T::one(), |c| T::from_usize_lossy(c[i]));
    let total: T = (0..scores.rows()).map(weight).sum();
    let mut mean = vec![T::zero(); d];
    for i in 0..scores.rows() {
        let w = weight(i);
        for (m, &v) in mean.iter_mut().zip(scores.row(i)) {
            *m = *m + w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / total);
    let mut cov = Matrix::zeros(d, d);
    let mut centred = vec![T::zero(); d];
    for i in 0..scores.rows() {
        let w = weight(i);
        for (c, (&v, &m)) in centred.iter_mut().zip(scores.row(i).iter().zip(&mean)) {
            *c = v - m;
        }
        for a in 0..d {
            let wa = w * centred[a];
            for b in 0..=a {
                cov[(a, b)] = cov[(a, b)] + wa * centred[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if !cov.is_finite() {
        return Err(Error::NonFiniteScore);
    }
    Ok(cov)
}

/// Covariance (divisor B) of the score evaluated with the statistic replaced
/// by each bootstrap replicate.
///
/// `stat_scores(t, θ)` is the closed-form score with statistic value `t`.
pub fn bootstrap_statistic_covariance<T, F>(
    stat_scores: F,
    boot_stats: &[T],
    theta: &[T],
) -> Result<WeightMatrix<T>>
where
    T: Real,
    F: Fn(T, &[T]) -> Vec<T>,
{
    if boot_stats.len() < 2 {
        return Err(Error::InsufficientScores(boot_stats.len()));
    }
    let rows: Vec<Vec<T>> = boot_stats.iter().map(|&t| stat_scores(t, theta)).collect();
    let m = Matrix::from_rows(&rows)?;
    let w = WeightMatrix::new(covariance_rows(&m, None)?)?;
    w.factor()?;
    Ok(w)
}

/// `B` nonparametric bootstrap replicates of `stat` (resampling with replacement, size n).
pub fn make_bootstrap_replicates<T, S, R>(
    data: &[T],
    stat: S,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<T>>
where
    T: Real,
    S: Fn(&mut [T]) -> T,
    R: Rng + ?Sized,
{
    if data.is_empty() {
        return Err(Error::InvalidArgument("bootstrap needs nonempty data".into()));
    }
    if replicates < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 replicates, got {replicates}"
        )));
    }
    let n = data.len();
    let mut buf = vec![T::zero(); n];
    Ok((0..replicates)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = data[rng.random_range(0..n)];
            }
            stat(&mut buf)
        })
        .collect())
}
