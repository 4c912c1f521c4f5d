//! Standard normal density and distribution function.

use libm::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Φ(x) = ½ erfc(−x/√2)`; accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_and_symmetry() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for &x in &[0.1, 0.7, 1.5, 3.0, 6.5] {
            assert!((normal_cdf(-x) - (1.0 - normal_cdf(x))).abs() < 1e-14);
        }
    }

    #[test]
    fn against_series_oracle() {
        // Φ(x) = ½ + φ(x) Σ x^(2k+1)/(1·3·…·(2k+1)); converges for all x
        let series = |x: f64| {
            let mut term = x;
            let mut sum = x;
            for k in 1..200 {
                term *= x * x / (2 * k + 1) as f64;
                sum += term;
            }
            0.5 + normal_pdf(x) * sum
        };
        for &x in &[-3.0, -1.2, 0.3, 1.959963985, 2.5] {
            assert!((normal_cdf(x) - series(x)).abs() < 1e-12, "x = {x}");
        }
        assert!((normal_cdf(1.959963985) - 0.975).abs() < 1e-9);
    }

    #[test]
    fn pdf_at_zero() {
        assert!((normal_pdf(0.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-16);
    }
}
