//! Gaussian linear regression with unknown error variance.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use super::{abs_moment, regression_design, Dataset};
use crate::error::Result;
use crate::linalg::{weighted_least_squares, Matrix};
use crate::qcore::{PriorSpec, ScoreEvaluation, ScoreModel};

/// Parameters `(β₁, β₂, β₃, s)` with `s = log σ²`.
///
/// Loss `Σ [½ s + (y_i − x_iᵀβ)² / (2eˢ)]`; prior flat in β and
/// `π(σ) ∝ (σ²)⁻²`, which becomes `e^{−3s/2}` on the log-variance scale.
#[derive(Debug, Clone)]
pub struct LinRegModel {
    y: Vec<f64>,
    x: Matrix<f64>,
}

impl LinRegModel {
    pub fn new(data: &Dataset) -> Result<Self> {
        Ok(Self { y: data.responses.clone(), x: data.design()?.clone() })
    }

    fn residual(&self, i: usize, beta: &[f64]) -> f64 {
        self.y[i] - self.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl ScoreModel<f64> for LinRegModel {
    fn dim(&self) -> usize {
        self.x.cols() + 1
    }

    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.x.cols()).map(|j| format!("beta{j}")).collect();
        v.push("sigma2".into());
        v
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let p = self.x.cols();
        let s = theta[p];
        let inv = (-s).exp();
        Ok((0..self.y.len())
            .map(|i| {
                let r = self.residual(i, &theta[..p]);
                0.5 * s + 0.5 * r * r * inv
            })
            .sum())
    }

    fn score(&self, theta: &[f64]) -> Result<ScoreEvaluation<f64>> {
        let p = self.x.cols();
        let inv = (-theta[p]).exp();
        let mut rows = Vec::with_capacity(self.y.len() * (p + 1));
        for i in 0..self.y.len() {
            let r = self.residual(i, &theta[..p]);
            rows.extend(self.x.row(i).iter().map(|&xij| -xij * r * inv));
            rows.push(0.5 - 0.5 * r * r * inv);
        }
        Ok(ScoreEvaluation::from_rows(Matrix::from_row_major(self.y.len(), p + 1, rows)?))
    }

    fn prior(&self) -> PriorSpec<f64> {
        let p = self.x.cols();
        PriorSpec::new(move |th: &[f64]| -1.5 * th[p], |th: &[f64]| th.iter().all(|v| v.is_finite()))
    }

    fn to_reported(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.x.cols();
        let mut v = theta[..p].to_vec();
        v.push(theta[p].exp());
        v
    }

    /// OLS coefficients and the log of the mean squared residual.
    fn initial_guess(&self) -> Vec<f64> {
        let p = self.x.cols();
        let mut beta = weighted_least_squares(&self.x, &self.y, None).unwrap_or_else(|_| vec![0.0; p]);
        let mse = (0..self.y.len()).map(|i| self.residual(i, &beta).powi(2)).sum::<f64>() / self.y.len() as f64;
        beta.push(mse.max(1e-12).ln());
        beta
    }
}

pub const LINREG_BETA: [f64; 3] = [1.0, 1.0, 1.0];

/// `y = x β + ε`, `x = (1, z₂, z₃)` with standard normal `z`, `ε ~ N(0, 1 + |z₂|^γ)`
/// (second argument is the variance).
///
/// `|z|⁰` is taken as 1 everywhere, so `γ = 0` gives homoskedastic errors with variance 2.
pub fn linreg_dgp<R: Rng + ?Sized>(gamma: f64, n: usize, rng: &mut R) -> Result<(Dataset, Vec<f64>)> {
    let x = regression_design(n, rng)?;
    let y = (0..n)
        .map(|i| {
            let row = x.row(i);
            let sd = (1.0 + pow_abs(row[1], gamma)).sqrt();
            let mean: f64 = row.iter().zip(LINREG_BETA).map(|(a, b)| a * b).sum();
            mean + sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Ok((Dataset::new(y, Some(x), "linreg")?, LINREG_BETA.to_vec()))
}

/// `|x|^γ` with `|x|⁰ = 1`.
pub(crate) fn pow_abs(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 { 1.0 } else { x.abs().powf(gamma) }
}

/// Pseudo-true value in the reported parameterization `(β, σ²)`:
/// `σ²⋆ = 1 + E|z|^γ` for standard normal `z`.
pub fn linreg_pseudo_true(gamma: f64) -> Vec<f64> {
    let s2 = if gamma == 0.0 { 2.0 } else { 1.0 + abs_moment(gamma) };
    let mut v = LINREG_BETA.to_vec();
    v.push(s2);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::max_score_fd_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_observation_scores() {
        let d = Dataset::new(vec![1.0], Some(Matrix::from_rows(&[vec![1.0]]).unwrap()), "t").unwrap();
        let m = LinRegModel::new(&d).unwrap();
        let e = m.score(&[0.0, 0.0]).unwrap();
        assert_eq!(e.average_score, vec![-1.0, 0.0]);
    }

    #[test]
    fn zero_residuals_zero_beta_scores() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, -1.0], vec![1.0, 0.5]]).unwrap();
        let y: Vec<f64> = (0..3).map(|i| 0.3 + 0.7 * x.row(i)[1]).collect();
        let m = LinRegModel::new(&Dataset::new(y, Some(x), "t").unwrap()).unwrap();
        let e = m.score(&[0.3, 0.7, 1.7]).unwrap();
        let rows = e.per_obs_scores.unwrap();
        for i in 0..3 {
            assert!(rows.row(i)[0].abs() < 1e-15 && rows.row(i)[1].abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (d, _) = linreg_dgp(2.0, 60, &mut rng).unwrap();
        let m = LinRegModel::new(&d).unwrap();
        for _ in 0..20 {
            let th: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            assert!(max_score_fd_error(&m, &th).unwrap() < 1e-5);
        }
    }

    #[test]
    fn gamma_zero_residual_variance_is_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (d, beta) = linreg_dgp(0.0, 100_000, &mut rng).unwrap();
        let x = d.covariates.as_ref().unwrap();
        let var = (0..d.len())
            .map(|i| {
                let f: f64 = x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
                (d.responses[i] - f).powi(2)
            })
            .sum::<f64>()
            / d.len() as f64;
        assert!((var - 2.0).abs() < 0.04);
    }

    #[test]
    fn heteroskedastic_variance_at_origin() {
        assert_eq!(1.0 + pow_abs(0.0, 2.0), 1.0);
        assert_eq!(1.0 + pow_abs(0.0, 0.0), 2.0);
    }

    #[test]
    fn pseudo_true_variance() {
        assert_eq!(linreg_pseudo_true(0.0)[3], 2.0);
        assert!((linreg_pseudo_true(2.0)[3] - 2.0).abs() < 1e-12);
        // E|z| = √(2/π)
        assert!((linreg_pseudo_true(1.0)[3] - 1.0 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn prior_on_log_variance() {
        let d = Dataset::new(vec![1.0, 2.0], Some(Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap()), "t").unwrap();
        let p = LinRegModel::new(&d).unwrap().prior();
        // density on σ is σ⁻⁴; with dσ/ds = σ/2 the density on s is ∝ σ⁻³ = e^{−3s/2}
        assert!((p.log_density(&[0.0, 2.0]) - p.log_density(&[0.0, 0.0]) + 3.0).abs() < 1e-15);
    }
}
