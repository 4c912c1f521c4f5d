//! Losses, scores, priors and data-generating processes for each experiment.

mod cmp;
mod dataset;
mod gaussian;
mod ksd;
mod linreg;
mod median;
mod poisson;
mod tukey;
mod whittle;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

pub use cmp::{cmp_log_kernel, cmp_log_normalizer, cmp_sample, dfd_term_with, DfdModel, CMP_THETA, CMP_THETA1_MAX};
pub use dataset::Dataset;
pub use gaussian::GaussianMean;
pub use ksd::{contaminated_normal_dgp, KsdConfig, KsdModel};
pub use linreg::{linreg_dgp, linreg_pseudo_true, LinRegModel, LINREG_BETA};
pub use median::{
    median_dgp, median_in_place, median_score, mixture_cdf, mixture_median, MedianDgp, MedianModel,
    DEFAULT_BOOTSTRAP,
};
pub use poisson::{estimate_dispersion, poisson_dgp, DispersionFit, PoissonModel, POISSON_THETA};
pub use tukey::{TukeyModel, TUKEY_KAPPA, TUKEY_PSEUDO_TRUE};
pub use whittle::{
    arfima_dgp, arfima_spectral_density, periodogram, periodogram_direct, SpectralGrid, WhittleModel, ARFIMA_THETA,
    SYNTHESIS_PAD,
};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::qcore::{finite_difference_score_scaled, ScoreModel, FD_REL_STEP};

/// Rows `(1, z₂, z₃)` with independent standard normal `z`.
pub(crate) fn regression_design<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Matrix<f64>> {
    let mut data = Vec::with_capacity(3 * n);
    for _ in 0..n {
        data.push(1.0);
        data.push(rng.sample(StandardNormal));
        data.push(rng.sample(StandardNormal));
    }
    Matrix::from_row_major(n, 3, data)
}

/// `E|z|^p` for standard normal `z`.
pub(crate) fn abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * libm::tgamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Largest discrepancy between `n · m̄(θ)` and a central-difference gradient of the loss,
/// relative to `max(|fd|, 1)`.
pub fn max_score_fd_error<M: ScoreModel<f64> + ?Sized>(model: &M, theta: &[f64]) -> Result<f64> {
    let e = model.score(theta)?;
    let fd = finite_difference_score_scaled(|t| model.loss(t), theta, FD_REL_STEP)?;
    let n = e.n_eff as f64;
    Ok(e.average_score
        .iter()
        .zip(&fd)
        .map(|(a, b)| (n * a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_moments() {
        assert!((abs_moment(0.0) - 1.0).abs() < 1e-15);
        assert!((abs_moment(2.0) - 1.0).abs() < 1e-14);
        assert!((abs_moment(4.0) - 3.0).abs() < 1e-13);
        assert!((abs_moment(1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }
}
