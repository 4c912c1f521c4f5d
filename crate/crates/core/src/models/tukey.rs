//! Tukey's biweight-type loss for a normal location-scale model.

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qcore::{PriorSpec, ScoreEvaluation, ScoreModel};

pub const TUKEY_KAPPA: f64 = 6.0;
pub const TUKEY_PSEUDO_TRUE: [f64; 2] = [0.088, 1.00];
const MU_PRIOR_VAR: f64 = 5.0;

/// Loss in `θ = (μ, log φ)`, reported as `(μ, φ)`.
///
/// Per observation, with `t = (y − μ)²/φ`:
/// `½ log(2πφ) + t/2 − t²/(2κ²) + t³/(6κ⁴)` when `t ≤ κ²`, else `½ log(2πφ) + κ²/6`.
#[derive(Debug, Clone)]
pub struct TukeyModel {
    y: Vec<f64>,
    kappa: f64,
}

impl TukeyModel {
    pub fn new(data: &Dataset, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { y: data.responses.clone(), kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn term(&self, y: f64, mu: f64, phi: f64) -> (f64, [f64; 2]) {
        let k2 = self.kappa * self.kappa;
        let base = 0.5 * (2.0 * std::f64::consts::PI * phi).ln();
        let r = y - mu;
        let t = r * r / phi;
        if t <= k2 {
            let g = t / 2.0 - t * t / (2.0 * k2) + t * t * t / (6.0 * k2 * k2);
            let dg = 0.5 - t / k2 + t * t / (2.0 * k2 * k2);
            (base + g, [-2.0 * r / phi * dg, 0.5 - t * dg])
        } else {
            (base + k2 / 6.0, [0.0, 0.5])
        }
    }
}

impl ScoreModel<f64> for TukeyModel {
    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into(), "phi".into()]
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let phi = theta[1].exp();
        let l: f64 = self.y.iter().map(|&y| self.term(y, theta[0], phi).0).sum();
        if l.is_finite() { Ok(l) } else { Err(Error::NonFiniteLoss) }
    }

    fn score(&self, theta: &[f64]) -> Result<ScoreEvaluation<f64>> {
        let phi = theta[1].exp();
        let rows = self.y.iter().flat_map(|&y| self.term(y, theta[0], phi).1).collect();
        Ok(ScoreEvaluation::from_rows(Matrix::from_row_major(self.y.len(), 2, rows)?))
    }

    /// `μ ~ N(0, 5)`, `φ ~ Exp(1)` carried to `log φ` with its Jacobian.
    fn prior(&self) -> PriorSpec<f64> {
        PriorSpec::new(
            |th: &[f64]| -0.5 * th[0] * th[0] / MU_PRIOR_VAR - th[1].exp() + th[1],
            |th: &[f64]| th.iter().all(|v| v.is_finite()),
        )
    }

    fn initial_guess(&self) -> Vec<f64> {
        let mut s = self.y.clone();
        let med = super::median::median_in_place(&mut s);
        let mut dev: Vec<f64> = self.y.iter().map(|v| (v - med).abs()).collect();
        let mad = 1.4826 * super::median::median_in_place(&mut dev);
        vec![med, (mad * mad).max(1e-6).ln()]
    }

    fn to_reported(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0], theta[1].exp()]
    }
}
