//! Standard normal CDF and density.
//!
//! `Φ(z) = erfc(-z / √2) / 2` with `erfc` from the `libm` port of the FreeBSD
//! math library (error below one ulp, far inside the 1e-7 budget). Using
//! `erfc` rather than `1 + erf` keeps the lower tail exact: `Φ(-z)` for large
//! `z` underflows cleanly to 0 instead of cancelling.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(std_normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-12);
        assert_abs_diff_eq!(std_normal_cdf(-1.96), 0.024_997_895_148_220_4, epsilon = 1e-12);
        assert_abs_diff_eq!(std_normal_pdf(0.0), 0.398_942_280_401_432_7, epsilon = 1e-15);
    }

    #[test]
    fn saturates_in_the_tails() {
        assert_eq!(std_normal_cdf(1e6), 1.0);
        assert_eq!(std_normal_cdf(-1e6), 0.0);
        assert!(std_normal_cdf(-40.0) < 1e-300);
    }

    #[test]
    fn symmetric_against_simpson_integration() {
        // independent check: integrate the density with composite Simpson
        let n = 20_000;
        let (a, b) = (-12.0, 0.7);
        let h = (b - a) / n as f64;
        let mut s = std_normal_pdf(a) + std_normal_pdf(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * std_normal_pdf(a + k as f64 * h);
        }
        assert_abs_diff_eq!(s * h / 3.0, std_normal_cdf(0.7), epsilon = 1e-10);
        for z in [-3.0, -0.3, 0.2, 2.5] {
            assert_abs_diff_eq!(std_normal_cdf(z) + std_normal_cdf(-z), 1.0, epsilon = 1e-15);
        }
    }
}
