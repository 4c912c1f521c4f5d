//! Q-posterior log-density from scores and score-covariance estimates.

mod conjugate;
mod fd;
mod weight;

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

pub use conjugate::{conjugate_qposterior, mean_to_natural, ConjugateResult};
pub use fd::{finite_difference_jacobian, finite_difference_score, finite_difference_score_scaled, FD_REL_STEP};
pub use weight::{
    bootstrap_statistic_covariance, make_bootstrap_replicates, per_obs_sample_covariance,
    weighted_sample_covariance, WeightMatrix, WeightStrategy,
};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Average score `m̄_n(θ)` with optional per-contribution rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEvaluation<T> {
    pub average_score: Vec<T>,
    /// Rows `m_i(θ)`. When `multiplicities` is set, row `i` stands for `multiplicities[i]` contributions.
    pub per_obs_scores: Option<Matrix<T>>,
    pub multiplicities: Option<Vec<usize>>,
    pub n_eff: usize,
}

impl<T: Real> ScoreEvaluation<T> {
    pub fn average_only(average_score: Vec<T>, n_eff: usize) -> Self {
        Self { average_score, per_obs_scores: None, multiplicities: None, n_eff }
    }

    /// Builds the evaluation from rows; the average is their column mean.
    pub fn from_rows(rows: Matrix<T>) -> Self {
        let n = rows.rows();
        let mut avg = vec![T::zero(); rows.cols()];
        for i in 0..n {
            for (a, &v) in avg.iter_mut().zip(rows.row(i)) {
                *a = *a + v;
            }
        }
        let nf = T::from_usize_lossy(n);
        avg.iter_mut().for_each(|a| *a = *a / nf);
        Self { average_score: avg, per_obs_scores: Some(rows), multiplicities: None, n_eff: n }
    }

    /// Rows with repeat counts, e.g. one row per distinct data value.
    pub fn from_weighted_rows(rows: Matrix<T>, counts: Vec<usize>) -> Result<Self> {
        check_dim(rows.rows(), counts.len())?;
        let n: usize = counts.iter().sum();
        let mut avg = vec![T::zero(); rows.cols()];
        for (i, &c) in counts.iter().enumerate() {
            let w = T::from_usize_lossy(c);
            for (a, &v) in avg.iter_mut().zip(rows.row(i)) {
                *a = *a + w * v;
            }
        }
        let nf = T::from_usize_lossy(n);
        avg.iter_mut().for_each(|a| *a = *a / nf);
        Ok(Self { average_score: avg, per_obs_scores: Some(rows), multiplicities: Some(counts), n_eff: n })
    }

    pub fn dim(&self) -> usize {
        self.average_score.len()
    }

    pub fn is_finite(&self) -> bool {
        self.average_score.iter().all(|v| v.is_finite())
            && self.per_obs_scores.as_ref().is_none_or(|m| m.is_finite())
    }

    /// Sample covariance of the rows (divisor `n_eff`).
    pub fn sample_covariance(&self) -> Result<WeightMatrix<T>> {
        match (&self.per_obs_scores, &self.multiplicities) {
            (Some(rows), Some(c)) => weighted_sample_covariance(rows, c),
            (Some(rows), None) => per_obs_sample_covariance(rows),
            (None, _) => Err(Error::InvalidArgument(
                "score evaluation carries no per-observation rows".into(),
            )),
        }
    }
}

type LogDensityFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
type SupportFn<T> = Arc<dyn Fn(&[T]) -> bool + Send + Sync>;

/// Prior log-density with an explicit support indicator.
#[derive(Clone)]
pub struct PriorSpec<T> {
    log_density: LogDensityFn<T>,
    support: SupportFn<T>,
}

impl<T: Real> PriorSpec<T> {
    pub fn new(
        log_density: impl Fn(&[T]) -> T + Send + Sync + 'static,
        support: impl Fn(&[T]) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self { log_density: Arc::new(log_density), support: Arc::new(support) }
    }

    /// Improper flat prior on all of `R^d`.
    pub fn flat() -> Self {
        Self::new(|_| T::zero(), |th| th.iter().all(|v| v.is_finite()))
    }

    /// Independent Gaussian prior (up to a constant) with the given means and variances.
    pub fn gaussian(mean: Vec<T>, var: Vec<T>) -> Self {
        Self::new(
            move |th| {
                th.iter()
                    .zip(mean.iter().zip(&var))
                    .map(|(&t, (&m, &v))| -(t - m) * (t - m) / (v + v))
                    .sum()
            },
            |th| th.iter().all(|v| v.is_finite()),
        )
    }

    /// Uniform prior on the open box `(lo_j, hi_j)`.
    pub fn uniform_box(lo: Vec<T>, hi: Vec<T>) -> Self {
        let (l2, h2) = (lo.clone(), hi.clone());
        Self::new(
            |_| T::zero(),
            move |th| th.len() == l2.len() && th.iter().zip(l2.iter().zip(&h2)).all(|(&t, (&a, &b))| t > a && t < b),
        )
    }

    pub fn in_support(&self, theta: &[T]) -> bool {
        (self.support)(theta)
    }

    /// `log π(θ)`, or `−∞` outside the support.
    pub fn log_density(&self, theta: &[T]) -> T {
        if !self.in_support(theta) {
            return T::neg_infinity();
        }
        (self.log_density)(theta)
    }
}

impl<T> fmt::Debug for PriorSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PriorSpec { .. }")
    }
}

/// A loss `D_n(θ)` over a fixed dataset together with its scores and prior.
pub trait ScoreModel<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    /// `D_n(θ)`.
    fn loss(&self, theta: &[T]) -> Result<T>;

    /// `m̄_n(θ) = n⁻¹ ∇D_n(θ)` and, where available, its per-contribution rows.
    fn score(&self, theta: &[T]) -> Result<ScoreEvaluation<T>>;

    fn prior(&self) -> PriorSpec<T>;

    fn default_weights(&self) -> WeightStrategy<T> {
        WeightStrategy::PerObsSampleCov
    }

    /// Covariance (divisor B) of `m̄_n(θ)` re-evaluated at the model's
    /// bootstrap replicates of its statistic.
    fn replicate_score_covariance(&self, _theta: &[T]) -> Result<WeightMatrix<T>> {
        Err(Error::InvalidArgument("model has no bootstrap replicates".into()))
    }

    /// Loss used by the Gibbs-posterior comparator `π(θ) exp{−ω · D(θ)}`.
    fn comparator_loss(&self, theta: &[T]) -> Result<T> {
        self.loss(theta)
    }

    /// Maps the sampling parameterization to the reported one (e.g. `log φ ↦ φ`).
    fn to_reported(&self, theta: &[T]) -> Vec<T> {
        theta.to_vec()
    }

    /// Starting point for optimizers and chains.
    fn initial_guess(&self) -> Vec<T>;
}

/// `½ mᵀ W⁻¹ m`.
pub fn q_penalty<T: Real>(score: &[T], weight: &WeightMatrix<T>) -> Result<T> {
    check_dim(weight.dim(), score.len())?;
    let half = T::lit(0.5);
    Ok(half * weight.factor()?.inv_quad_form(score)?)
}

/// Resolves `W_n(θ)` for a strategy. Bootstrap covariances of `m̄` are
/// rescaled by `n_eff` so that every strategy estimates `Var(√n m̄)`.
pub fn resolve_weight<'a, T: Real, M: ScoreModel<T> + ?Sized>(
    theta: &[T],
    model: &M,
    eval: &ScoreEvaluation<T>,
    ws: &'a WeightStrategy<T>,
) -> Result<Cow<'a, WeightMatrix<T>>> {
    match ws {
        WeightStrategy::PerObsSampleCov => Ok(Cow::Owned(eval.sample_covariance()?)),
        WeightStrategy::StatisticBootstrap { .. } => {
            let w = model.replicate_score_covariance(theta)?;
            Ok(Cow::Owned(w.scaled(T::from_usize_lossy(eval.n_eff))?))
        }
        WeightStrategy::FixedPlugIn(w) => Ok(Cow::Borrowed(w)),
    }
}

/// `−½ log|W_n(θ)| − n Q_n(θ) + log π(θ)`, with `n = n_eff`.
///
/// Returns `−∞` outside the prior support and propagates
/// [`Error::SingularWeight`] when `W_n(θ)` cannot be factorized.
pub fn q_log_density<T: Real, M: ScoreModel<T> + ?Sized>(
    theta: &[T],
    model: &M,
    ws: &WeightStrategy<T>,
    prior: &PriorSpec<T>,
) -> Result<T> {
    check_dim(model.dim(), theta.len())?;
    let lp = prior.log_density(theta);
    if lp == T::neg_infinity() {
        return Ok(lp);
    }
    let eval = model.score(theta)?;
    if !eval.is_finite() {
        return Err(Error::NonFiniteScore);
    }
    let w = resolve_weight(theta, model, &eval, ws)?;
    let n = T::from_usize_lossy(eval.n_eff);
    let ld = w.log_det()?;
    Ok(-T::lit(0.5) * ld - n * q_penalty(&eval.average_score, &w)? + lp)
}

/// Q-posterior target for the sampler: any evaluation error counts as zero density.
pub fn q_target<'a, T: Real, M: ScoreModel<T> + ?Sized>(
    model: &'a M,
    ws: &'a WeightStrategy<T>,
    prior: &'a PriorSpec<T>,
) -> impl Fn(&[T]) -> T + 'a {
    move |theta| q_log_density(theta, model, ws, prior).unwrap_or(T::neg_infinity())
}

/// Gibbs-posterior target `−ω · D(θ) + log π(θ)`.
pub fn gibbs_target<'a, T: Real, M: ScoreModel<T> + ?Sized>(
    model: &'a M,
    omega: T,
    prior: &'a PriorSpec<T>,
) -> impl Fn(&[T]) -> T + 'a {
    move |theta| {
        let lp = prior.log_density(theta);
        if lp == T::neg_infinity() {
            return lp;
        }
        match model.comparator_loss(theta) {
            Ok(l) if l.is_finite() => -omega * l + lp,
            _ => T::neg_infinity(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMean;

    fn w(rows: &[Vec<f64>]) -> WeightMatrix<f64> {
        WeightMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let i2 = WeightMatrix::<f64>::identity(2);
        assert_eq!(q_penalty(&[0.0, 0.0], &w(&[vec![2.0, 0.3], vec![0.3, 1.0]])).unwrap(), 0.0);
        assert_eq!(q_penalty(&[1.0], &WeightMatrix::identity(1)).unwrap(), 0.5);
        assert!((q_penalty(&[1.0, 2.0], &i2).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn penalty_rejects_singular() {
        let s = w(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(q_penalty(&[1.0, 0.0], &s), Err(Error::SingularWeight { .. })));
        assert!(matches!(
            q_penalty(&[1.0], &WeightMatrix::<f64>::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gaussian_mean_density_examples() {
        let fixed = WeightStrategy::FixedPlugIn(WeightMatrix::identity(1));
        let flat = PriorSpec::flat();
        let m1 = GaussianMean::new(vec![0.0], 1.0);
        assert_eq!(q_log_density(&[0.0], &m1, &fixed, &flat).unwrap(), 0.0);

        // four points with mean 1: m̄ = −1, n Q = 4 · ½
        let m4 = GaussianMean::<f64>::new(vec![0.0, 2.0, 0.5, 1.5], 1.0);
        assert!((q_log_density(&[0.0], &m4, &fixed, &flat).unwrap() + 2.0).abs() < 1e-14);
    }

    #[test]
    fn density_at_root_is_log_det_plus_prior() {
        let m = GaussianMean::new(vec![0.3, -1.0, 2.2], 1.0);
        let root = m.data_mean();
        let wm = w(&[vec![2.5]]);
        let prior = PriorSpec::gaussian(vec![0.0], vec![4.0]);
        let v = q_log_density(&[root], &m, &WeightStrategy::FixedPlugIn(wm), &prior).unwrap();
        let expect = -0.5 * 2.5f64.ln() + prior.log_density(&[root]);
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn outside_support_is_neg_infinity() {
        let m = GaussianMean::new(vec![0.3, -1.0], 1.0);
        let prior = PriorSpec::uniform_box(vec![-1.0], vec![1.0]);
        let v = q_log_density(&[3.0], &m, &WeightStrategy::PerObsSampleCov, &prior).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn singular_sample_covariance_propagates() {
        let m = GaussianMean::<f64>::new(vec![1.0, 1.0, 1.0], 1.0);
        let r = q_log_density(&[0.0], &m, &WeightStrategy::PerObsSampleCov, &PriorSpec::flat());
        assert!(matches!(r, Err(Error::SingularWeight { .. })));
        let (ws, flat) = (WeightStrategy::PerObsSampleCov, PriorSpec::flat());
        let t = q_target(&m, &ws, &flat);
        assert_eq!(t(&[0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn weighted_rows_average() {
        let rows = Matrix::<f64>::from_rows(&[vec![1.0], vec![4.0]]).unwrap();
        let e = ScoreEvaluation::from_weighted_rows(rows, vec![2, 1]).unwrap();
        assert_eq!(e.average_score, vec![2.0]);
        assert_eq!(e.n_eff, 3);
        assert!((e.sample_covariance().unwrap().entries()[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn generic_over_f32() {
        let m = GaussianMean::<f32>::new(vec![0.0, 2.0, 0.5, 1.5], 1.0);
        let fixed = WeightStrategy::FixedPlugIn(WeightMatrix::identity(1));
        let v = q_log_density(&[0.0f32], &m, &fixed, &PriorSpec::flat()).unwrap();
        assert!((v + 2.0).abs() < 1e-6);
    }
}
