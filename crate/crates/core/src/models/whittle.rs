//! ARFIMA(2, d, 1) spectral density, periodogram and Whittle loss.

use std::f64::consts::PI;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::qcore::{PriorSpec, ScoreEvaluation, ScoreModel};

pub const ARFIMA_THETA: [f64; 4] = [0.45, 0.1, -0.4, 0.4];

/// Length multiplier of the synthesized series before truncation.
pub const SYNTHESIS_PAD: usize = 4;

/// `f(ω) = σ²/(2π) · |1 − ϑe^{iω}|² / (|1 − φ₁e^{iω} − φ₂e^{2iω}|² (2 sin(ω/2))^{2d})`
/// for `θ = (φ₁, φ₂, ϑ, d)`.
pub fn arfima_spectral_density(theta: &[f64], sigma2: f64, omega: f64) -> f64 {
    let [phi1, phi2, ma, d] = [theta[0], theta[1], theta[2], theta[3]];
    let (c1, s1) = (omega.cos(), omega.sin());
    let (c2, s2) = ((2.0 * omega).cos(), (2.0 * omega).sin());
    let num = 1.0 - 2.0 * ma * c1 + ma * ma;
    let a = 1.0 - phi1 * c1 - phi2 * c2;
    let b = phi1 * s1 + phi2 * s2;
    sigma2 / (2.0 * PI) * num / ((a * a + b * b) * (2.0 * (omega / 2.0).sin()).powf(2.0 * d))
}

/// Periodogram on `ω_k = 2πk/n`, `k = 1..⌊(n−1)/2⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    pub frequencies: Vec<f64>,
    pub periodogram: Vec<f64>,
    /// Periodogram at `ω = π` when `n` is even.
    pub nyquist: Option<f64>,
    pub n: usize,
}

impl SpectralGrid {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// `F(ω_k) = |Σ_t X_t e^{−iω_k t}|² / (2πn)` computed with an FFT.
pub fn periodogram(series: &[f64]) -> Result<SpectralGrid> {
    let n = check_len(series)?;
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Ok(grid_from(n, |k| buf[k].norm_sqr()))
}

/// Same as [`periodogram`] by the `O(n²)` direct sum.
pub fn periodogram_direct(series: &[f64]) -> Result<SpectralGrid> {
    let n = check_len(series)?;
    let dft = |k: usize| {
        let w = 2.0 * PI * k as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &x) in series.iter().enumerate() {
            let a = w * (t + 1) as f64;
            re += x * a.cos();
            im -= x * a.sin();
        }
        re * re + im * im
    };
    Ok(grid_from(n, dft))
}

fn check_len(series: &[f64]) -> Result<usize> {
    if series.len() < 8 {
        return Err(Error::InvalidArgument(format!("periodogram needs n >= 8, got {}", series.len())));
    }
    Ok(series.len())
}

fn grid_from(n: usize, sq_mod: impl Fn(usize) -> f64) -> SpectralGrid {
    let scale = 1.0 / (2.0 * PI * n as f64);
    let half = (n - 1) / 2;
    SpectralGrid {
        frequencies: (1..=half).map(|k| 2.0 * PI * k as f64 / n as f64).collect(),
        periodogram: (1..=half).map(|k| sq_mod(k) * scale).collect(),
        nyquist: (n % 2 == 0).then(|| sq_mod(n / 2) * scale),
        n,
    }
}

/// Per-frequency trigonometric terms reused by every evaluation.
#[derive(Debug, Clone, Copy)]
struct Freq {
    c1: f64,
    s1: f64,
    c2: f64,
    s2: f64,
    log_2sin: f64,
    value: f64,
}

impl Freq {
    fn new(omega: f64, value: f64) -> Self {
        Self {
            c1: omega.cos(),
            s1: omega.sin(),
            c2: (2.0 * omega).cos(),
            s2: (2.0 * omega).sin(),
            log_2sin: (2.0 * (omega / 2.0).sin()).ln(),
            value,
        }
    }

    /// `log f` and its gradient in `(φ₁, φ₂, ϑ, d)`.
    fn log_f(&self, th: &[f64], log_s2: f64) -> (f64, [f64; 4]) {
        let [phi1, phi2, ma, d] = [th[0], th[1], th[2], th[3]];
        let num = 1.0 - 2.0 * ma * self.c1 + ma * ma;
        let a = 1.0 - phi1 * self.c1 - phi2 * self.c2;
        let b = phi1 * self.s1 + phi2 * self.s2;
        let ar = a * a + b * b;
        let lf = log_s2 + num.ln() - ar.ln() - 2.0 * d * self.log_2sin;
        let d_phi1 = -(-2.0 * a * self.c1 + 2.0 * b * self.s1) / ar;
        let d_phi2 = -(-2.0 * a * self.c2 + 2.0 * b * self.s2) / ar;
        let d_ma = (2.0 * ma - 2.0 * self.c1) / num;
        (lf, [d_phi1, d_phi2, d_ma, -2.0 * self.log_2sin])
    }

    /// Whittle term `log f + F/f` and its gradient `∇log f · (1 − F/f)`.
    fn term(&self, th: &[f64], log_s2: f64) -> (f64, [f64; 4]) {
        let (lf, g) = self.log_f(th, log_s2);
        let ratio = self.value * (-lf).exp();
        (lf + ratio, g.map(|gj| gj * (1.0 - ratio)))
    }
}

/// Whittle loss `Σ_k [log f_θ(ω_k) + F(ω_k)/f_θ(ω_k)]` on the half grid, `σ² = 1`.
///
/// The comparator loss is the two-sided sum over all nonzero Fourier
/// frequencies, i.e. twice the half-grid sum plus the Nyquist term.
#[derive(Debug, Clone)]
pub struct WhittleModel {
    freqs: Vec<Freq>,
    nyquist: Option<Freq>,
    log_s2: f64,
}

impl WhittleModel {
    pub fn new(grid: &SpectralGrid) -> Self {
        let log_s2 = (1.0 / (2.0 * PI)).ln();
        Self {
            freqs: grid.frequencies.iter().zip(&grid.periodogram).map(|(&w, &f)| Freq::new(w, f)).collect(),
            nyquist: grid.nyquist.map(|f| Freq::new(PI, f)),
            log_s2,
        }
    }

    pub fn from_series(series: &[f64]) -> Result<Self> {
        Ok(Self::new(&periodogram(series)?))
    }

    /// Per-frequency loss terms.
    pub fn components(&self, theta: &[f64]) -> Vec<f64> {
        self.freqs.iter().map(|f| f.term(theta, self.log_s2).0).collect()
    }

    /// Per-frequency analytic gradients, one row per frequency.
    pub fn component_scores(&self, theta: &[f64]) -> Result<Matrix<f64>> {
        let mut rows = Vec::with_capacity(self.freqs.len() * 4);
        for f in &self.freqs {
            rows.extend_from_slice(&f.term(theta, self.log_s2).1);
        }
        Matrix::from_row_major(self.freqs.len(), 4, rows)
    }
}

impl ScoreModel<f64> for WhittleModel {
    fn dim(&self) -> usize {
        4
    }

    fn param_names(&self) -> Vec<String> {
        ["phi1", "phi2", "theta1", "d"].map(String::from).to_vec()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let l: f64 = self.components(theta).iter().sum();
        if l.is_finite() { Ok(l) } else { Err(Error::NonFiniteLoss) }
    }

    fn score(&self, theta: &[f64]) -> Result<ScoreEvaluation<f64>> {
        Ok(ScoreEvaluation::from_rows(self.component_scores(theta)?))
    }

    fn comparator_loss(&self, theta: &[f64]) -> Result<f64> {
        let half = self.loss(theta)?;
        let nyq = self.nyquist.map_or(0.0, |f| f.term(theta, self.log_s2).0);
        let l = 2.0 * half + nyq;
        if l.is_finite() { Ok(l) } else { Err(Error::NonFiniteLoss) }
    }

    fn prior(&self) -> PriorSpec<f64> {
        PriorSpec::uniform_box(vec![-1.0, -1.0, -1.0, -0.5], vec![1.0, 1.0, 1.0, 0.5])
    }

    fn initial_guess(&self) -> Vec<f64> {
        vec![0.0; 4]
    }
}

/// Zero-mean series of length `n` by spectral synthesis on a grid `SYNTHESIS_PAD` times longer.
///
/// Independent complex Gaussians with `E|c_k|² = 2π f(ω_k)/N` fill the
/// frequencies `0 < k < N/2`, a real Gaussian fills `k = N/2`, Hermitian
/// symmetry fills the rest and the zero frequency is left empty.
pub fn arfima_dgp<R: Rng + ?Sized>(theta: &[f64], n: usize, rng: &mut R) -> Result<Dataset> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("series length must be >= 8, got {n}")));
    }
    let big = n * SYNTHESIS_PAD;
    let big = big + big % 2;
    let mut c = vec![Complex64::new(0.0, 0.0); big];
    for k in 1..big / 2 {
        let w = 2.0 * PI * k as f64 / big as f64;
        let sd = (2.0 * PI * arfima_spectral_density(theta, 1.0, w) / big as f64 / 2.0).sqrt();
        let (re, im): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        c[k] = Complex64::new(sd * re, sd * im);
        c[big - k] = c[k].conj();
    }
    let sd_nyq = (2.0 * PI * arfima_spectral_density(theta, 1.0, PI) / big as f64).sqrt();
    c[big / 2] = Complex64::new(sd_nyq * rng.sample::<f64, _>(StandardNormal), 0.0);
    FftPlanner::new().plan_fft_inverse(big).process(&mut c);
    let y = c[..n].iter().map(|z| z.re).collect();
    Dataset::new(y, None, "whittle")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::max_score_fd_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex;

    /// Direct complex evaluation of the displayed density.
    fn density_complex(th: &[f64], s2: f64, w: f64) -> f64 {
        let e1 = Complex::from_polar(1.0, w);
        let e2 = Complex::from_polar(1.0, 2.0 * w);
        let num = (Complex::new(1.0, 0.0) - th[2] * e1).norm_sqr();
        let ar = (Complex::new(1.0, 0.0) - th[0] * e1 - th[1] * e2).norm_sqr();
        let diff = (Complex::new(1.0, 0.0) - e1).norm_sqr().powf(th[3]);
        s2 / (2.0 * PI) * num / (ar * diff)
    }

    #[test]
    fn density_special_cases() {
        for w in [0.3, 1.0, PI] {
            assert!((arfima_spectral_density(&[0.0; 4], 2.0, w) - 2.0 / (2.0 * PI)).abs() < 1e-15);
        }
        let f = arfima_spectral_density(&[0.0, 0.0, 0.6, 0.0], 1.0, PI);
        assert!((f - 1.6f64.powi(2) / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn density_matches_complex_arithmetic() {
        let th = [0.45, 0.1, -0.4, 0.4];
        for w in [PI / 3.0, 0.05, 2.9] {
            let a = arfima_spectral_density(&th, 1.3, w);
            assert!((a - density_complex(&th, 1.3, w)).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn periodogram_constant_and_cosine() {
        let g = periodogram(&[3.0; 16]).unwrap();
        assert!(g.periodogram.iter().all(|&v| v < 1e-24));
        assert_eq!(g.len(), 7);
        let n = 64;
        let series: Vec<f64> = (1..=n).map(|t| (2.0 * PI * 5.0 * t as f64 / n as f64).cos()).collect();
        let g = periodogram(&series).unwrap();
        let (kmax, _) = g.periodogram.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(kmax + 1, 5);
        let rest: f64 = g.periodogram.iter().enumerate().filter(|(k, _)| *k != 4).map(|(_, v)| v).sum();
        assert!(rest < 1e-20);
    }

    #[test]
    fn fft_matches_direct_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [128, 200, 255, 1024] {
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let a = periodogram(&x).unwrap();
            let b = periodogram_direct(&x).unwrap();
            for (p, q) in a.periodogram.iter().zip(&b.periodogram) {
                assert!((p - q).abs() <= 1e-9 * q.max(1e-3), "n={n}");
            }
            assert_eq!(a.nyquist.is_some(), n % 2 == 0);
        }
    }

    #[test]
    fn analytic_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = arfima_dgp(&ARFIMA_THETA, 256, &mut rng).unwrap();
        let m = WhittleModel::from_series(&d.responses).unwrap();
        for th in [[0.45, 0.1, -0.4, 0.4], [0.1, -0.3, 0.2, -0.1], [-0.5, 0.2, 0.7, 0.25]] {
            assert!(max_score_fd_error(&m, &th).unwrap() < 1e-5);
        }
    }

    #[test]
    fn loss_is_sum_of_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = arfima_dgp(&ARFIMA_THETA, 128, &mut rng).unwrap();
        let m = WhittleModel::from_series(&d.responses).unwrap();
        let th = [0.2, 0.1, -0.2, 0.3];
        let comps = m.components(&th);
        assert_eq!(m.loss(&th).unwrap(), comps.iter().sum::<f64>());
        let nyq = m.nyquist.unwrap().term(&th, m.log_s2).0;
        assert_eq!(m.comparator_loss(&th).unwrap(), 2.0 * comps.iter().sum::<f64>() + nyq);
    }

    #[test]
    fn score_vanishes_when_periodogram_equals_density() {
        let th = [0.3, 0.1, -0.2, 0.2];
        let n = 512;
        let freqs: Vec<f64> = (1..=(n - 1) / 2).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let grid = SpectralGrid {
            periodogram: freqs.iter().map(|&w| arfima_spectral_density(&th, 1.0, w)).collect(),
            frequencies: freqs,
            nyquist: None,
            n,
        };
        let s = WhittleModel::new(&grid).score(&th).unwrap();
        assert!(s.average_score.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn doubling_variance_shifts_log_term() {
        let th = [0.3, 0.1, -0.2, 0.2];
        for w in [0.4, 1.7] {
            let a = arfima_spectral_density(&th, 1.0, w);
            let b = arfima_spectral_density(&th, 2.0, w);
            assert!((b.ln() - a.ln() - 2f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn synthesized_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4096;
        let d = arfima_dgp(&[0.0; 4], n, &mut rng).unwrap();
        let y = &d.responses;
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * var.sqrt() / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.1);
        let acf1 = y.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n as f64 / var;
        assert!(acf1.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn averaged_periodogram_tracks_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Fejér leakage from the pole at zero biases mid-band ordinates by ~8% at n = 256
        let n = 2048;
        let th = ARFIMA_THETA;
        let mut avg = vec![0.0; (n - 1) / 2];
        let reps = 200;
        for _ in 0..reps {
            let d = arfima_dgp(&th, n, &mut rng).unwrap();
            for (a, v) in avg.iter_mut().zip(periodogram(&d.responses).unwrap().periodogram) {
                *a += v / reps as f64;
            }
        }
        // pool mid-band ordinates to reduce Monte-Carlo noise below the tolerance
        let band: Vec<usize> = (avg.len() / 4..avg.len() * 3 / 4).collect();
        let ratio: f64 = band
            .iter()
            .map(|&k| avg[k] / arfima_spectral_density(&th, 1.0, 2.0 * PI * (k + 1) as f64 / n as f64))
            .sum::<f64>()
            / band.len() as f64;
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }
}
