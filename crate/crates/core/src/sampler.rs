//! Adaptive random-walk Metropolis and chain summaries.

use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Iterations before the empirical covariance replaces the initial proposal.
const ADAPT_START: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig<T> {
    pub n_iters: usize,
    pub burn_in: usize,
    pub init: Vec<T>,
    pub init_proposal_cov: Matrix<T>,
    pub adapt: bool,
    pub seed: u64,
}

impl<T: Real> SamplerConfig<T> {
    /// `n_iters` iterations, isotropic `0.1² I` proposals, adaptation on.
    pub fn new(init: Vec<T>, n_iters: usize, burn_in: usize, seed: u64) -> Self {
        let d = init.len();
        Self {
            n_iters,
            burn_in,
            init,
            init_proposal_cov: Matrix::identity(d).scaled(T::lit(0.01)),
            adapt: true,
            seed,
        }
    }

    pub fn with_proposal(mut self, cov: Matrix<T>) -> Self {
        self.init_proposal_cov = cov;
        self
    }

    pub fn with_adapt(mut self, adapt: bool) -> Self {
        self.adapt = adapt;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || self.burn_in >= self.n_iters {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= burn_in < n_iters, got burn_in={} n_iters={}",
                self.burn_in, self.n_iters
            )));
        }
        check_dim(self.init.len(), self.init_proposal_cov.rows())?;
        check_dim(self.init.len(), self.init_proposal_cov.cols())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainWarning {
    /// Retained-segment acceptance below 1%.
    LowAcceptance(f64),
    /// Retained-segment acceptance outside `[0.1, 0.6]`.
    AcceptanceOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain<T> {
    /// Retained draws, one per row.
    pub draws: Matrix<T>,
    pub log_densities: Vec<T>,
    /// Accepted proposals in the retained segment.
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub warnings: Vec<ChainWarning>,
}

impl<T: Real> Chain<T> {
    pub fn len(&self) -> usize {
        self.draws.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.cols()
    }

    /// Applies a reparameterization to every draw.
    pub fn map_draws(&self, f: impl Fn(&[T]) -> Vec<T>) -> Result<Chain<T>> {
        let rows: Vec<Vec<T>> = (0..self.len()).map(|i| f(self.draws.row(i))).collect();
        Ok(Chain { draws: Matrix::from_rows(&rows)?, ..self.clone() })
    }

    /// One draw per line with a header of parameter names.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = names.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let row = self.draws.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Random-walk Metropolis with Gaussian proposals.
///
/// With `adapt` set, the proposal covariance becomes the running covariance of
/// the chain scaled by `2.38²/d` (plus `1e-10 I`) once enough draws exist, and
/// is frozen from `burn_in` on.
pub fn rwmh_sample<T, F>(log_density: F, cfg: &SamplerConfig<T>) -> Result<Chain<T>>
where
    T: Real,
    F: Fn(&[T]) -> T,
{
    cfg.validate()?;
    let d = cfg.init.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = cfg.init.clone();
    let mut lp = log_density(&x);
    if !lp.is_finite() {
        return Err(Error::BadInit(lp.to_f64().unwrap_or(f64::NAN)));
    }
    let mut chol = Cholesky::new(&cfg.init_proposal_cov).ok_or(Error::SingularWeight {
        condition: f64::INFINITY,
    })?;

    let scale = T::lit(2.38 * 2.38) / T::from_usize_lossy(d.max(1));
    let mut mean = vec![T::zero(); d];
    let mut m2 = Matrix::zeros(d, d);
    let mut seen = 0usize;

    let kept = cfg.n_iters - cfg.burn_in;
    let mut draws = Vec::with_capacity(kept * d);
    let mut lps = Vec::with_capacity(kept);
    let mut accepted = 0usize;
    let mut z = vec![T::zero(); d];
    let mut prop = vec![T::zero(); d];

    for it in 0..cfg.n_iters {
        for zi in z.iter_mut() {
            *zi = T::lit(rng.sample::<f64, _>(StandardNormal));
        }
        let step = chol.mul_lower(&z);
        for ((p, &xi), &s) in prop.iter_mut().zip(&x).zip(&step) {
            *p = xi + s;
        }
        let lp_prop = log_density(&prop);
        let u: f64 = rng.random();
        let log_ratio = (lp_prop - lp).to_f64().unwrap_or(f64::NEG_INFINITY);
        let accept = lp_prop.is_finite() && (log_ratio >= 0.0 || u.ln() < log_ratio);
        if accept {
            x.copy_from_slice(&prop);
            lp = lp_prop;
        }

        if cfg.adapt && it < cfg.burn_in {
            seen += 1;
            welford(&mut mean, &mut m2, &x, seen);
            if seen >= ADAPT_START {
                let mut cov = m2.scaled(scale / T::from_usize_lossy(seen));
                for i in 0..d {
                    cov[(i, i)] = cov[(i, i)] + T::lit(1e-10);
                }
                if let Some(c) = Cholesky::new(&cov) {
                    chol = c;
                }
            }
        }

        if it >= cfg.burn_in {
            if accept {
                accepted += 1;
            }
            draws.extend_from_slice(&x);
            lps.push(lp);
        }
    }

    let acceptance_rate = accepted as f64 / kept as f64;
    let mut warnings = Vec::new();
    if acceptance_rate < 0.01 {
        warnings.push(ChainWarning::LowAcceptance(acceptance_rate));
    }
    if !(0.1..=0.6).contains(&acceptance_rate) {
        warnings.push(ChainWarning::AcceptanceOutOfRange(acceptance_rate));
    }
    Ok(Chain {
        draws: Matrix::from_row_major(kept, d, draws)?,
        log_densities: lps,
        accepted,
        acceptance_rate,
        warnings,
    })
}

fn welford<T: Real>(mean: &mut [T], m2: &mut Matrix<T>, x: &[T], count: usize) {
    let d = mean.len();
    let nf = T::from_usize_lossy(count);
    let delta: Vec<T> = x.iter().zip(mean.iter()).map(|(&a, &m)| a - m).collect();
    for (m, &dl) in mean.iter_mut().zip(&delta) {
        *m = *m + dl / nf;
    }
    for i in 0..d {
        let di = x[i] - mean[i];
        for j in 0..d {
            m2[(i, j)] = m2[(i, j)] + delta[j] * di;
        }
    }
}

/// Empirical covariance of retained draws (divisor N−1).
pub fn chain_covariance<T: Real>(chain: &Chain<T>) -> Matrix<T> {
    let n = chain.len();
    let d = chain.dim();
    let mut mean = vec![T::zero(); d];
    let mut m2 = Matrix::zeros(d, d);
    for i in 0..n {
        welford(&mut mean, &mut m2, chain.draws.row(i), i + 1);
    }
    let denom = T::from_usize_lossy(n.saturating_sub(1).max(1));
    let mut c = m2.scaled(T::one() / denom);
    c.symmetrize();
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    pub ci_lower: Vec<T>,
    pub ci_upper: Vec<T>,
    pub alpha: T,
}

/// Means, variances (divisor N−1) and equal-tailed `1−α` intervals.
///
/// Quantiles interpolate linearly between order statistics at position `(N−1)p`.
pub fn chain_summary<T: Real>(chain: &Chain<T>, alpha: T) -> Result<ChainSummary<T>> {
    if chain.is_empty() {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let n = chain.len();
    let d = chain.dim();
    let half = alpha / T::lit(2.0);
    let mut s = ChainSummary {
        mean: Vec::with_capacity(d),
        variance: Vec::with_capacity(d),
        ci_lower: Vec::with_capacity(d),
        ci_upper: Vec::with_capacity(d),
        alpha,
    };
    for j in 0..d {
        let mut col = chain.draws.column(j);
        let nf = T::from_usize_lossy(n);
        let mean = col.iter().copied().sum::<T>() / nf;
        let var = if n > 1 {
            col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::from_usize_lossy(n - 1)
        } else {
            T::zero()
        };
        col.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        s.mean.push(mean);
        s.variance.push(var);
        s.ci_lower.push(quantile_sorted(&col, half));
        s.ci_upper.push(quantile_sorted(&col, T::one() - half));
    }
    Ok(s)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = T::from_usize_lossy(n - 1) * p;
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - T::from_usize_lossy(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Componentwise `lower_j ≤ truth_j ≤ upper_j`.
pub fn covers<T: Real>(summary: &ChainSummary<T>, truth: &[T]) -> Result<Vec<bool>> {
    check_dim(summary.mean.len(), truth.len())?;
    Ok(truth
        .iter()
        .zip(summary.ci_lower.iter().zip(&summary.ci_upper))
        .map(|(&t, (&lo, &hi))| lo <= t && t <= hi)
        .collect())
}
