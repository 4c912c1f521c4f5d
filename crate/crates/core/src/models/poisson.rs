//! Poisson regression with a quasi-likelihood dispersion and a negative-binomial DGP.

use rand::{Rng, RngExt};
use rand_distr::{Gamma, Poisson};

use super::linreg::pow_abs;
use super::{regression_design, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{weighted_least_squares, Matrix};
use crate::qcore::{PriorSpec, ScoreEvaluation, ScoreModel};

/// Loss `−ψ⁻¹ Σ {y_i x_iᵀθ − exp(x_iᵀθ)}` with a flat prior. `ψ = 1` is the Poisson likelihood.
#[derive(Debug, Clone)]
pub struct PoissonModel {
    y: Vec<f64>,
    x: Matrix<f64>,
    psi: f64,
}

impl PoissonModel {
    pub fn new(data: &Dataset, psi: f64) -> Result<Self> {
        if !(psi > 0.0 && psi.is_finite()) {
            return Err(Error::InvalidArgument(format!("dispersion must be positive, got {psi}")));
        }
        Ok(Self { y: data.responses.clone(), x: data.design()?.clone(), psi })
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    fn eta(&self, i: usize, theta: &[f64]) -> f64 {
        self.x.row(i).iter().zip(theta).map(|(a, b)| a * b).sum()
    }
}

impl ScoreModel<f64> for PoissonModel {
    fn dim(&self) -> usize {
        self.x.cols()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.x.cols()).map(|j| format!("theta{j}")).collect()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let s: f64 = (0..self.y.len())
            .map(|i| {
                let e = self.eta(i, theta);
                self.y[i] * e - e.exp()
            })
            .sum();
        let l = -s / self.psi;
        if l.is_finite() { Ok(l) } else { Err(Error::NonFiniteLoss) }
    }

    fn score(&self, theta: &[f64]) -> Result<ScoreEvaluation<f64>> {
        let p = self.x.cols();
        let mut rows = Vec::with_capacity(self.y.len() * p);
        for i in 0..self.y.len() {
            let mu = self.eta(i, theta).exp();
            if !mu.is_finite() {
                return Err(Error::NonFiniteScore);
            }
            let c = -(self.y[i] - mu) / self.psi;
            rows.extend(self.x.row(i).iter().map(|&xij| c * xij));
        }
        Ok(ScoreEvaluation::from_rows(Matrix::from_row_major(self.y.len(), p, rows)?))
    }

    fn prior(&self) -> PriorSpec<f64> {
        PriorSpec::flat()
    }

    fn initial_guess(&self) -> Vec<f64> {
        irls(&self.x, &self.y).map(|(b, _)| b).unwrap_or_else(|_| vec![0.0; self.x.cols()])
    }
}

/// Poisson GLM fit and Pearson dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionFit {
    pub beta: Vec<f64>,
    pub psi: f64,
}

impl DispersionFit {
    /// A numerically zero Pearson statistic: the fit interpolates the data.
    pub fn is_degenerate(&self) -> bool {
        !(self.psi > DEGENERATE_PSI)
    }
}

/// Fits the log-link Poisson GLM by IRLS and returns `ψ̂ = (n−p)⁻¹ Σ (y−μ̂)²/μ̂`.
pub fn estimate_dispersion(data: &Dataset) -> Result<DispersionFit> {
    let x = data.design()?;
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::FitFailure(format!("need more than {p} observations, got {n}")));
    }
    let (beta, mu) = irls(x, &data.responses)?;
    let pearson: f64 = data.responses.iter().zip(&mu).map(|(y, m)| (y - m).powi(2) / m).sum();
    Ok(DispersionFit { beta, psi: pearson / (n - p) as f64 })
}

const DEGENERATE_PSI: f64 = 1e-12;
const IRLS_TOL: f64 = 1e-10;
const IRLS_MAX_ITER: usize = 100;

fn irls(x: &Matrix<f64>, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    let mut mu: Vec<f64> = y.iter().map(|&v| v + 0.5).collect();
    let mut eta: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
    let mut beta = vec![0.0; x.cols()];
    for it in 0..IRLS_MAX_ITER {
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - mu[i]) / mu[i]).collect();
        let next = weighted_least_squares(x, &z, Some(&mu))
            .map_err(|_| Error::FitFailure("singular weighted design".into()))?;
        let delta = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        eta = (0..n).map(|i| x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
        mu = eta.iter().map(|e| e.exp()).collect();
        if mu.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(Error::FitFailure(format!("IRLS diverged at iteration {it}")));
        }
        if delta < IRLS_TOL * (1.0 + beta.iter().map(|b| b.abs()).fold(0.0, f64::max)) {
            return Ok((beta, mu));
        }
    }
    Err(Error::FitFailure(format!("IRLS did not converge in {IRLS_MAX_ITER} iterations")))
}

pub const POISSON_THETA: [f64; 3] = [1.0, 1.0, 1.0];

/// Negative-binomial counts with mean `μ_i = exp(x_iᵀθ)` and variance
/// `σ_i = exp(x_iᵀθ + |x₂ᵢ|^γ)`, drawn as a gamma–Poisson mixture.
///
/// When `σ_i − μ_i < 1e-8` the draw is Poisson(μ_i).
pub fn poisson_dgp<R: Rng + ?Sized>(gamma: f64, n: usize, rng: &mut R) -> Result<(Dataset, Vec<f64>)> {
    let x = regression_design(n, rng)?;
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let eta: f64 = row.iter().zip(POISSON_THETA).map(|(a, b)| a * b).sum();
        let mu = eta.exp();
        let sigma = (eta + pow_abs(row[1], gamma)).exp();
        let lambda = if sigma - mu < 1e-8 {
            mu
        } else {
            let shape = mu * mu / (sigma - mu);
            let scale = (sigma - mu) / mu;
            let g = Gamma::new(shape, scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            rng.sample(g)
        };
        y.push(poisson_draw(lambda, rng)?);
    }
    Ok((Dataset::new(y, Some(x), "poisson")?, POISSON_THETA.to_vec()))
}

fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<f64> {
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    let p = Poisson::new(lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(rng.sample(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::max_score_fd_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_obs(y: f64) -> Dataset {
        Dataset::new(vec![y], Some(Matrix::from_rows(&[vec![1.0]]).unwrap()), "t").unwrap()
    }

    #[test]
    fn score_examples() {
        let m = PoissonModel::new(&one_obs(0.0), 1.0).unwrap();
        assert_eq!(m.score(&[0.0]).unwrap().average_score, vec![1.0]);
        let m2 = PoissonModel::new(&one_obs(0.0), 2.0).unwrap();
        assert_eq!(m2.score(&[0.0]).unwrap().average_score, vec![0.5]);
        let exact = PoissonModel::new(&one_obs(0.5f64.exp()), 1.0).unwrap();
        assert!(exact.score(&[0.5]).unwrap().average_score[0].abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let m = PoissonModel::new(&one_obs(1.0), 1.0).unwrap();
        assert_eq!(m.score(&[1000.0]).unwrap_err(), Error::NonFiniteScore);
        assert!(PoissonModel::new(&one_obs(1.0), 0.0).is_err());
    }

    #[test]
    fn analytic_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d, _) = poisson_dgp(2.0, 80, &mut rng).unwrap();
        let m = PoissonModel::new(&d, 1.7).unwrap();
        for _ in 0..20 {
            let th: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.5)).collect();
            assert!(max_score_fd_error(&m, &th).unwrap() < 1e-5);
        }
    }

    #[test]
    fn equidispersed_data_gives_unit_dispersion() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = regression_design(20_000, &mut rng).unwrap();
        let y = (0..x.rows())
            .map(|i| {
                let eta = 0.5 + 0.3 * x.row(i)[1] - 0.2 * x.row(i)[2];
                poisson_draw(eta.exp(), &mut rng).unwrap()
            })
            .collect();
        let fit = estimate_dispersion(&Dataset::new(y, Some(x), "t").unwrap()).unwrap();
        assert!((fit.psi - 1.0).abs() < 0.1, "psi {}", fit.psi);
        assert!((fit.beta[1] - 0.3).abs() < 0.03);
    }

    #[test]
    fn interpolating_fit_is_degenerate() {
        // one covariate level per free coefficient: the fit reproduces y exactly
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let fit = estimate_dispersion(&Dataset::new(vec![2.0, 2.0, 5.0, 5.0], Some(x), "t").unwrap()).unwrap();
        assert!(fit.psi < 1e-15);
        assert!(fit.is_degenerate());
    }

    #[test]
    fn duplicated_rows_rescale_dispersion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, _) = poisson_dgp(2.0, 300, &mut rng).unwrap();
        let x = d.covariates.clone().unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..2 {
            for i in 0..d.len() {
                rows.push(x.row(i).to_vec());
                y.push(d.responses[i]);
            }
        }
        let a = estimate_dispersion(&d).unwrap();
        let b = estimate_dispersion(&Dataset::new(y, Some(Matrix::from_rows(&rows).unwrap()), "t").unwrap()).unwrap();
        // same fitted means; the Pearson sum doubles and n − p becomes 2n − p
        let expect = a.psi * (d.len() - 3) as f64 * 2.0 / (2 * d.len() - 3) as f64;
        assert!((b.psi - expect).abs() < 1e-8 * expect);
    }

    #[test]
    fn overdispersion_at_gamma_two() {
        // fixed covariate row so the conditional moments are known
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x2, eta) = (1.0f64, 1.0f64);
        let mu = eta.exp();
        let sigma = (eta + x2 * x2).exp();
        let shape = mu * mu / (sigma - mu);
        let g = Gamma::new(shape, (sigma - mu) / mu).unwrap();
        let draws: Vec<f64> = (0..200_000).map(|_| poisson_draw(rng.sample(g), &mut rng).unwrap()).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((m - mu).abs() < 0.01 * mu, "mean {m}");
        assert!(v / m > 1.5 && (v - sigma).abs() < 0.05 * sigma, "var {v}");
    }

    #[test]
    fn poisson_branch_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mu = 1.5f64.exp();
        let s: f64 = (0..1_000_000).map(|_| poisson_draw(mu, &mut rng).unwrap()).sum();
        assert!((s / 1e6 - mu).abs() < 0.01 * mu);
        assert_eq!(poisson_draw(0.0, &mut rng).unwrap(), 0.0);
    }
}
