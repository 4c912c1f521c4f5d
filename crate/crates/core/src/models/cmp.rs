//! Conway–Maxwell–Poisson model fitted by the discrete Fisher divergence.

use rand::{Rng, RngExt};

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qcore::{PriorSpec, ScoreEvaluation, ScoreModel};

pub const CMP_THETA: [f64; 2] = [4.0, 0.75];
pub const CMP_THETA1_MAX: f64 = 20.0;

const NORMALIZER_REL_TOL: f64 = 1e-14;
const NORMALIZER_CAP: usize = 1_000_000;

fn ln_factorial(x: u64) -> f64 {
    libm::lgamma(x as f64 + 1.0)
}

/// `log p̃(x | θ) = x log θ₁ − θ₂ log x!`.
pub fn cmp_log_kernel(theta: &[f64], x: u64) -> f64 {
    x as f64 * theta[0].ln() - theta[1] * ln_factorial(x)
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta[0] > 0.0 && (0.0..=1.0).contains(&theta[1]) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("CMP needs θ₁ > 0 and θ₂ in [0,1], got {theta:?}")))
    }
}

/// Unnormalized probabilities `p̃(y)/p̃(mode)` for `y = 0, 1, …` until the
/// terms past the mode fall below `1e-14` of the running sum.
fn kernel_terms(theta: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_theta(theta)?;
    // log-kernel is concave in y, so its maximum is where the ratio θ₁/(y+1)^θ₂ crosses 1
    let mut mode = 0u64;
    while (mode as usize) < NORMALIZER_CAP && theta[0] / ((mode + 1) as f64).powf(theta[1]) >= 1.0 {
        mode += 1;
    }
    if mode as usize >= NORMALIZER_CAP {
        return Err(Error::NormalizerDivergence { terms: NORMALIZER_CAP });
    }
    let shift = cmp_log_kernel(theta, mode);
    let mut terms = Vec::new();
    let mut sum = 0.0;
    for y in 0..NORMALIZER_CAP as u64 {
        let t = (cmp_log_kernel(theta, y) - shift).exp();
        terms.push(t);
        sum += t;
        if y > mode && t < NORMALIZER_REL_TOL * sum {
            return Ok((terms, shift + sum.ln()));
        }
    }
    Err(Error::NormalizerDivergence { terms: NORMALIZER_CAP })
}

/// `log Z_θ = log Σ_y p̃(y | θ)` by direct summation.
pub fn cmp_log_normalizer(theta: &[f64]) -> Result<f64> {
    kernel_terms(theta).map(|(_, lz)| lz)
}

/// `n` draws by inversion of the CDF over the truncated support.
pub fn cmp_sample<R: Rng + ?Sized>(theta: &[f64], n: usize, rng: &mut R) -> Result<Dataset> {
    let (terms, _) = kernel_terms(theta)?;
    let mut cdf = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for t in &terms {
        acc += t;
        cdf.push(acc);
    }
    let y = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as f64
        })
        .collect();
    Dataset::new(y, None, "cmp")
}

/// DFD contribution `(p̃(x⁻)/p̃(x))² − 2 p̃(x)/p̃(x⁺)` evaluated through an arbitrary log-kernel.
///
/// `x⁺ = x + 1`; `x⁻ = x − 1` except `x = 0`, where it is `max_x`.
pub fn dfd_term_with(log_kernel: impl Fn(u64) -> f64, x: u64, max_x: u64) -> f64 {
    let minus = if x == 0 { max_x } else { x - 1 };
    let r_minus = (log_kernel(minus) - log_kernel(x)).exp();
    let r_plus = (log_kernel(x) - log_kernel(x + 1)).exp();
    r_minus * r_minus - 2.0 * r_plus
}

/// Loss `Σ_i [(p̃(x_i⁻)/p̃(x_i))² − 2 p̃(x_i)/p̃(x_i⁺)]`, i.e. n times the DFD,
/// with scores evaluated once per distinct count.
#[derive(Debug, Clone)]
pub struct DfdModel {
    values: Vec<u64>,
    counts: Vec<usize>,
    max_x: u64,
    n: usize,
}

impl DfdModel {
    pub fn new(data: &Dataset) -> Result<Self> {
        let mut xs = Vec::with_capacity(data.len());
        for &y in &data.responses {
            if !(y >= 0.0 && y.fract() == 0.0 && y.is_finite()) {
                return Err(Error::InvalidArgument(format!("CMP data must be nonnegative integers, got {y}")));
            }
            xs.push(y as u64);
        }
        xs.sort_unstable();
        let mut values: Vec<u64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for x in xs {
            if values.last() == Some(&x) {
                *counts.last_mut().expect("nonempty") += 1;
            } else {
                values.push(x);
                counts.push(1);
            }
        }
        let max_x = *values.last().expect("nonempty data");
        Ok(Self { values, counts, max_x, n: data.len() })
    }

    pub fn distinct_values(&self) -> &[u64] {
        &self.values
    }

    /// Contribution and gradient for one count.
    fn term(&self, theta: &[f64], x: u64) -> (f64, [f64; 2]) {
        let (t1, t2) = (theta[0], theta[1]);
        let (r1, d1) = if x == 0 {
            // p̃(M)/p̃(0) = θ₁^M / (M!)^θ₂
            let m = self.max_x;
            let lf = ln_factorial(m);
            let r = (m as f64 * t1.ln() - t2 * lf).exp();
            (r, [m as f64 * r / t1, -r * lf])
        } else {
            let lx = (x as f64).ln();
            let r = (t2 * lx).exp() / t1;
            (r, [-r / t1, r * lx])
        };
        let lx1 = ((x + 1) as f64).ln();
        let r2 = (t2 * lx1).exp() / t1;
        let d2 = [-r2 / t1, r2 * lx1];
        (
            r1 * r1 - 2.0 * r2,
            [2.0 * r1 * d1[0] - 2.0 * d2[0], 2.0 * r1 * d1[1] - 2.0 * d2[1]],
        )
    }
}

impl ScoreModel<f64> for DfdModel {
    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta1".into(), "theta2".into()]
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let l: f64 = self.values.iter().zip(&self.counts).map(|(&x, &c)| c as f64 * self.term(theta, x).0).sum();
        if l.is_finite() { Ok(l) } else { Err(Error::NonFiniteLoss) }
    }

    fn score(&self, theta: &[f64]) -> Result<ScoreEvaluation<f64>> {
        let mut rows = Vec::with_capacity(self.values.len() * 2);
        for &x in &self.values {
            rows.extend_from_slice(&self.term(theta, x).1);
        }
        let e = ScoreEvaluation::from_weighted_rows(Matrix::from_row_major(self.values.len(), 2, rows)?, self.counts.clone())?;
        debug_assert_eq!(e.n_eff, self.n);
        Ok(e)
    }

    /// Uniform on `(0, 20] × [0, 1]`.
    fn prior(&self) -> PriorSpec<f64> {
        PriorSpec::new(|_| 0.0, |th| th[0] > 0.0 && th[0] <= CMP_THETA1_MAX && (0.0..=1.0).contains(&th[1]))
    }

    /// Exact negative log-likelihood, for the likelihood-based comparator posterior.
    fn comparator_loss(&self, theta: &[f64]) -> Result<f64> {
        let log_z = cmp_log_normalizer(theta)?;
        let ll: f64 = self
            .values
            .iter()
            .zip(&self.counts)
            .map(|(&x, &c)| c as f64 * cmp_log_kernel(theta, x))
            .sum();
        Ok(self.n as f64 * log_z - ll)
    }

    fn initial_guess(&self) -> Vec<f64> {
        let mean = self.values.iter().zip(&self.counts).map(|(&x, &c)| x as f64 * c as f64).sum::<f64>() / self.n as f64;
        vec![mean.clamp(0.5, CMP_THETA1_MAX - 0.5), 0.9]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::max_score_fd_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn telescoping_ratio() {
        let th = [3.3, 0.6];
        let direct = (cmp_log_kernel(&th, 2) - cmp_log_kernel(&th, 0)).exp();
        assert!((direct - th[0].powi(2) / 2f64.powf(th[1])).abs() < 1e-13);
    }

    #[test]
    fn poisson_special_case() {
        for t1 in [0.5, 4.0, 17.0] {
            assert!((cmp_log_normalizer(&[t1, 1.0]).unwrap() - t1).abs() < 1e-12);
        }
        let th = [4.0, 1.0];
        for x in 1..6u64 {
            let r = (cmp_log_kernel(&th, x - 1) - cmp_log_kernel(&th, x)).exp();
            assert!((r - x as f64 / 4.0).abs() < 1e-13);
        }
    }

    #[test]
    fn normalizer_monotone_and_divergent() {
        let a = cmp_log_normalizer(&[2.0, 0.5]).unwrap();
        let b = cmp_log_normalizer(&[2.5, 0.5]).unwrap();
        assert!(b > a);
        assert!(matches!(cmp_log_normalizer(&[3.0, 0.0]), Err(Error::NormalizerDivergence { .. })));
    }

    #[test]
    fn sample_mean_matches_truncated_sum() {
        let th = CMP_THETA;
        let lz = cmp_log_normalizer(&th).unwrap();
        let mean: f64 = (0..200u64).map(|y| y as f64 * (cmp_log_kernel(&th, y) - lz).exp()).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = cmp_sample(&th, 1_000_000, &mut rng).unwrap();
        let m = d.responses.iter().sum::<f64>() / d.len() as f64;
        assert!((m - mean).abs() < 0.005 * mean, "{m} vs {mean}");
    }

    #[test]
    fn closed_form_terms_match_kernel_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = cmp_sample(&CMP_THETA, 500, &mut rng).unwrap();
        let m = DfdModel::new(&d).unwrap();
        let th = [3.1, 0.62];
        for &x in m.distinct_values() {
            let a = m.term(&th, x).0;
            let b = dfd_term_with(|y| cmp_log_kernel(&th, y), x, m.max_x);
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            // constant rescaling of p̃ cancels in every ratio
            let c = dfd_term_with(|y| cmp_log_kernel(&th, y) + 7f64.ln(), x, m.max_x);
            assert!((b - c).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn analytic_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = cmp_sample(&CMP_THETA, 400, &mut rng).unwrap();
        let m = DfdModel::new(&d).unwrap();
        for _ in 0..20 {
            let th = [rng.random_range(1.0..8.0), rng.random_range(0.2..0.95)];
            assert!(max_score_fd_error(&m, &th).unwrap() < 1e-6);
        }
    }

    #[test]
    fn comparator_is_negative_log_likelihood() {
        let d = Dataset::new(vec![0.0, 2.0, 2.0, 5.0], None, "t").unwrap();
        let m = DfdModel::new(&d).unwrap();
        let th = [3.0, 0.8];
        let lz = cmp_log_normalizer(&th).unwrap();
        let direct: f64 = d.responses.iter().map(|&y| lz - cmp_log_kernel(&th, y as u64)).sum();
        assert!((m.comparator_loss(&th).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_counts() {
        assert!(DfdModel::new(&Dataset::new(vec![1.0, 2.5], None, "t").unwrap()).is_err());
        assert!(DfdModel::new(&Dataset::new(vec![-1.0], None, "t").unwrap()).is_err());
    }

    #[test]
    fn prior_support() {
        let m = DfdModel::new(&Dataset::new(vec![0.0, 3.0], None, "t").unwrap()).unwrap();
        let p = m.prior();
        assert!(p.in_support(&[20.0, 1.0]) && p.in_support(&[0.1, 0.0]));
        assert!(!p.in_support(&[0.0, 0.5]) && !p.in_support(&[4.0, 1.01]) && !p.in_support(&[20.5, 0.5]));
    }
}
