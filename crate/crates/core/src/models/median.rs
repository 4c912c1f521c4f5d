//! Location inference from the sample median with a bootstrap score covariance.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qcore::{
    make_bootstrap_replicates, weighted_sample_covariance, PriorSpec, ScoreEvaluation, ScoreModel,
    WeightMatrix, WeightStrategy,
};
use crate::special::{normal_cdf, normal_pdf};

pub const DEFAULT_BOOTSTRAP: usize = 500;

/// Loss `D_n(θ) = −(n/2) log{F(T_n − θ)(1 − F(T_n − θ))}` with `F = Φ` and `T_n` the sample median.
///
/// The bootstrap medians are drawn once at construction; the score covariance
/// at any θ is the covariance of `m̄(θ)` with `T_n` replaced by each of them.
#[derive(Debug, Clone)]
pub struct MedianModel {
    n: usize,
    median: f64,
    /// Distinct bootstrap medians and how often each occurred.
    boot_values: Vec<f64>,
    boot_counts: Vec<usize>,
}

impl MedianModel {
    /// Draws `replicates` bootstrap medians from `rng`.
    pub fn new<R: Rng + ?Sized>(data: &Dataset, replicates: usize, rng: &mut R) -> Result<Self> {
        check_odd(data.len())?;
        let boot = make_bootstrap_replicates(&data.responses, median_in_place, replicates, rng)?;
        Self::with_replicates(data, &boot)
    }

    pub fn with_replicates(data: &Dataset, boot: &[f64]) -> Result<Self> {
        check_odd(data.len())?;
        if boot.len() < 2 {
            return Err(Error::InsufficientScores(boot.len()));
        }
        let mut sorted = boot.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut boot_values: Vec<f64> = Vec::new();
        let mut boot_counts: Vec<usize> = Vec::new();
        for v in sorted {
            if boot_values.last() == Some(&v) {
                *boot_counts.last_mut().expect("nonempty") += 1;
            } else {
                boot_values.push(v);
                boot_counts.push(1);
            }
        }
        Ok(Self { n: data.len(), median: median_in_place(&mut data.responses.clone()), boot_values, boot_counts })
    }

    pub fn median(&self) -> f64 {
        self.median
    }

    pub fn replicates(&self) -> usize {
        self.boot_counts.iter().sum()
    }
}

fn check_odd(n: usize) -> Result<()> {
    if n % 2 == 1 { Ok(()) } else { Err(Error::OddSampleRequired(n)) }
}

/// Median of odd-length data (upper median otherwise); reorders the slice.
pub fn median_in_place(v: &mut [f64]) -> f64 {
    let k = v.len() / 2;
    *v.select_nth_unstable_by(k, f64::total_cmp).1
}

/// `m̄(θ) = ½ [f(u)/F(u) − f(u)/(1 − F(u))]` with `u = t − θ`.
pub fn median_score(t: f64, theta: f64) -> f64 {
    let u = t - theta;
    let f = normal_pdf(u);
    0.5 * (f / normal_cdf(u) - f / normal_cdf(-u))
}

impl ScoreModel<f64> for MedianModel {
    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let u = self.median - theta[0];
        let l = -0.5 * self.n as f64 * (normal_cdf(u).ln() + normal_cdf(-u).ln());
        if l.is_finite() { Ok(l) } else { Err(Error::NonFiniteLoss) }
    }

    fn score(&self, theta: &[f64]) -> Result<ScoreEvaluation<f64>> {
        let m = median_score(self.median, theta[0]);
        if !m.is_finite() {
            return Err(Error::NonFiniteScore);
        }
        Ok(ScoreEvaluation::average_only(vec![m], self.n))
    }

    fn prior(&self) -> PriorSpec<f64> {
        PriorSpec::flat()
    }

    fn default_weights(&self) -> WeightStrategy<f64> {
        WeightStrategy::StatisticBootstrap { replicates: self.replicates() }
    }

    fn replicate_score_covariance(&self, theta: &[f64]) -> Result<WeightMatrix<f64>> {
        let rows: Vec<f64> = self.boot_values.iter().map(|&t| median_score(t, theta[0])).collect();
        let w = weighted_sample_covariance(&Matrix::from_row_major(rows.len(), 1, rows)?, &self.boot_counts)?;
        w.factor()?;
        Ok(w)
    }

    fn initial_guess(&self) -> Vec<f64> {
        vec![self.median]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedianDgp {
    /// `N(1, 4)`.
    Gaussian,
    /// `0.9 N(1, 4) + 0.1 N(0, 1)`.
    Mixture,
}

impl MedianDgp {
    pub fn true_median(self) -> f64 {
        match self {
            MedianDgp::Gaussian => 1.0,
            MedianDgp::Mixture => mixture_median(),
        }
    }
}

pub fn mixture_cdf(x: f64) -> f64 {
    0.9 * normal_cdf((x - 1.0) / 2.0) + 0.1 * normal_cdf(x)
}

/// Root of `mixture_cdf(m) = ½` by bisection.
pub fn mixture_median() -> f64 {
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mixture_cdf(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn median_dgp<R: Rng + ?Sized>(which: MedianDgp, n: usize, rng: &mut R) -> Result<(Dataset, f64)> {
    check_odd(n)?;
    let y = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            match which {
                MedianDgp::Gaussian => 1.0 + 2.0 * z,
                MedianDgp::Mixture => {
                    if rng.random::<f64>() < 0.9 { 1.0 + 2.0 * z } else { z }
                }
            }
        })
        .collect();
    Ok((Dataset::new(y, None, "median")?, which.true_median()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::max_score_fd_error;
    use crate::qcore::bootstrap_statistic_covariance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> MedianModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, _) = median_dgp(MedianDgp::Gaussian, 101, &mut rng).unwrap();
        MedianModel::new(&d, 200, &mut rng).unwrap()
    }

    #[test]
    fn score_vanishes_at_median_and_sign() {
        assert_eq!(median_score(0.7, 0.7), 0.0);
        // below the median F(u) > ½, so the f/(1−F) term dominates
        assert!(median_score(0.7, 0.2) < 0.0);
        assert!(median_score(0.7, 1.2) > 0.0);
    }

    #[test]
    fn analytic_matches_finite_difference() {
        let m = model(1);
        for dt in [-0.3, 0.3, 1.1] {
            assert!(max_score_fd_error(&m, &[m.median() + dt]).unwrap() < 1e-6);
        }
    }

    #[test]
    fn even_sample_rejected() {
        let d = Dataset::new(vec![1.0, 2.0], None, "t").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(MedianModel::new(&d, 10, &mut rng).unwrap_err(), Error::OddSampleRequired(2));
    }

    #[test]
    fn unique_value_covariance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d, truth) = median_dgp(MedianDgp::Gaussian, 101, &mut rng).unwrap();
        let boot = make_bootstrap_replicates(&d.responses, median_in_place, 200, &mut rng).unwrap();
        let m = MedianModel::with_replicates(&d, &boot).unwrap();
        let a = m.replicate_score_covariance(&[truth]).unwrap();
        let b = bootstrap_statistic_covariance(|t, th: &[f64]| vec![median_score(t, th[0])], &boot, &[truth]).unwrap();
        let direct = {
            let v: Vec<f64> = boot.iter().map(|&t| median_score(t, truth)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!((a.entries()[(0, 0)] - direct).abs() < 1e-14 * direct.max(1.0));
        assert!((b.entries()[(0, 0)] - direct).abs() < 1e-14 * direct.max(1.0));
    }

    #[test]
    fn mixture_median_root() {
        let m = mixture_median();
        assert!((mixture_cdf(m) - 0.5).abs() < 1e-10);
        assert!((m - 0.84).abs() < 0.01, "median {m}");
        assert_eq!(MedianDgp::Gaussian.true_median(), 1.0);
    }

    #[test]
    fn median_helper() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
    }
}
