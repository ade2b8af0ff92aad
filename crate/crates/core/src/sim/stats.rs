//! Small statistics used by the Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Mean and standard error, summed in index order so the result does not
/// depend on how the samples were produced.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = std_normal().inverse_cdf(0.5 + 0.5 * level);
    let (n, p) = (n as f64, k as f64 / n as f64);
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendTest {
    pub z: f64,
    /// One-sided p-value against a decreasing trend.
    pub p_decreasing: f64,
    pub p_increasing: f64,
}

/// Cochran–Armitage test for a linear trend in proportions `k_i / n_i`
/// over scores `s_i`.
pub fn cochran_armitage(k: &[usize], n: &[usize], scores: &[f64]) -> Option<TrendTest> {
    let big_n: f64 = n.iter().map(|&v| v as f64).sum();
    if big_n == 0.0 || k.len() < 2 {
        return None;
    }
    let p = k.iter().map(|&v| v as f64).sum::<f64>() / big_n;
    let sbar = n.iter().zip(scores).map(|(&m, s)| m as f64 * s).sum::<f64>() / big_n;
    let t: f64 = k.iter().zip(n).zip(scores).map(|((&a, &m), s)| (a as f64 - m as f64 * p) * (s - sbar)).sum();
    let var = p * (1.0 - p) * n.iter().zip(scores).map(|(&m, s)| m as f64 * (s - sbar).powi(2)).sum::<f64>();
    if !(var > 0.0) {
        return None;
    }
    let z = t / var.sqrt();
    let nd = std_normal();
    Some(TrendTest { z, p_decreasing: nd.cdf(z), p_increasing: 1.0 - nd.cdf(z) })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_the_proportion() {
        let (lo, hi) = wilson(30, 100, 0.95);
        assert!(lo < 0.3 && 0.3 < hi);
        assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
    }

    #[test]
    fn trend_sign() {
        let n = [100, 100, 100];
        let t = cochran_armitage(&[80, 60, 40], &n, &[0.0, 1.0, 2.0]).unwrap();
        assert!(t.z < 0.0 && t.p_decreasing < 1e-6);
        let flat = cochran_armitage(&[50, 50, 50], &n, &[0.0, 1.0, 2.0]).unwrap();
        assert!(flat.z.abs() < 1e-12);
    }

    #[test]
    fn ks_of_identical_and_disjoint_samples() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b: Vec<f64> = (20..30).map(f64::from).collect();
        assert_eq!(ks_distance(&a, &b), 1.0);
    }
}
