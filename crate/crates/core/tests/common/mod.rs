#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489004;

/// Normal quantile for a two-sided family-wise level `alpha` split over
/// `comparisons` intervals.
pub fn z_bonferroni(alpha: f64, comparisons: usize) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * comparisons as f64))
}

/// Wilson score interval for `hits` out of `n`.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// `2^-1 .. 2^-10`.
pub fn dyadic_grid() -> Vec<f64> {
    (1..=10).map(|i| 0.5f64.powi(i)).collect()
}
