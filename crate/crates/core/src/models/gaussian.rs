//! Gaussian location model with known scale.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::qcore::{PriorSpec, ScoreEvaluation, ScoreModel};
use crate::scalar::Real;

/// `D_n(θ) = Σ (y_i − θ)² / (2σ²)`.
#[derive(Debug, Clone)]
pub struct GaussianMean<T> {
    y: Vec<T>,
    sigma: T,
    prior: Option<(T, T)>,
}

impl<T: Real> GaussianMean<T> {
    pub fn new(y: Vec<T>, sigma: T) -> Self {
        assert!(!y.is_empty(), "GaussianMean needs data");
        Self { y, sigma, prior: None }
    }

    /// Uses a `N(mean, var)` prior instead of the flat default.
    pub fn with_gaussian_prior(mut self, mean: T, var: T) -> Self {
        self.prior = Some((mean, var));
        self
    }

    pub fn data_mean(&self) -> T {
        self.y.iter().copied().sum::<T>() / T::from_usize_lossy(self.y.len())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

impl<T: Real> ScoreModel<T> for GaussianMean<T> {
    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn loss(&self, theta: &[T]) -> Result<T> {
        let s2 = self.sigma * self.sigma;
        Ok(self.y.iter().map(|&y| (y - theta[0]) * (y - theta[0])).sum::<T>() / (s2 + s2))
    }

    fn score(&self, theta: &[T]) -> Result<ScoreEvaluation<T>> {
        let s2 = self.sigma * self.sigma;
        let rows = self.y.iter().map(|&y| -(y - theta[0]) / s2).collect();
        Ok(ScoreEvaluation::from_rows(Matrix::from_row_major(self.y.len(), 1, rows)?))
    }

    fn prior(&self) -> PriorSpec<T> {
        match self.prior {
            Some((m, v)) => PriorSpec::gaussian(vec![m], vec![v]),
            None => PriorSpec::flat(),
        }
    }

    fn initial_guess(&self) -> Vec<T> {
        vec![self.data_mean()]
    }
}
