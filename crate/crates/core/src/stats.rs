//! Small statistical helpers: standard normal density/CDF and empirical quantiles.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_known_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((norm_cdf(-1.0) - 0.15865525393145707).abs() < 1e-14);
    }

    #[test]
    fn type7_quantiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        // h = 99 * 0.025 = 2.475 -> 3 + 0.475
        assert!((quantile_sorted(&xs, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile_sorted(&xs, 0.975) - 97.525).abs() < 1e-12);
        assert!((quantile_sorted(&xs, 0.5) - 50.5).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[4.0], 0.3), 4.0);
    }
}
