//! Percentile bootstrap for the mean.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Percentile bootstrap interval for the mean of `values`.
///
/// Returns `None` for an empty sample. The stream of resample indices depends
/// only on `seed`, `values.len()` and `resamples`.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, confidence: f64, seed: u64) -> Option<Interval> {
    if values.is_empty() || resamples == 0 {
        return None;
    }
    let n = values.len();
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Some(Interval { low: first, high: first });
    }
    let mut rng = seed::rng(seed, &[b"bootstrap"]);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut sum = 0.0;
            for _ in 0..n {
                sum += values[rng.random_range(0..n)];
            }
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    let lo = ((alpha * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((1.0 - alpha) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    Some(Interval {
        low: means[lo],
        high: means[hi],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, LogNormal, Normal};

    #[test]
    fn constant_sample_collapses() {
        let v = vec![1_048_576.0; 40];
        let ci = bootstrap_mean_ci(&v, 1000, 0.99, 1).unwrap();
        assert_eq!((ci.low, ci.high), (1_048_576.0, 1_048_576.0));
    }

    #[test]
    fn empty_sample() {
        assert!(bootstrap_mean_ci(&[], 100, 0.99, 1).is_none());
    }

    #[test]
    fn seeded() {
        let v: Vec<f64> = (0..50).map(|i| (i * i) as f64).collect();
        assert_eq!(bootstrap_mean_ci(&v, 500, 0.99, 3), bootstrap_mean_ci(&v, 500, 0.99, 3));
    }

    #[test]
    fn width_matches_normal_approximation() {
        // n = 200 normal draws with known sigma: the 99% interval is about
        // 2 * 2.5758 * sigma / sqrt(n) wide.
        let sigma = 50.0;
        let mut rng = seed::rng(11, &[b"draws"]);
        let normal = Normal::new(1000.0, sigma).unwrap();
        let v: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
        let ci = bootstrap_mean_ci(&v, DEFAULT_RESAMPLES, 0.99, 5).unwrap();
        let analytic = 2.0 * 2.575_829 * sigma / (200f64).sqrt();
        let width = ci.high - ci.low;
        assert!((width - analytic).abs() / analytic < 0.25, "{width} vs {analytic}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn interval_contains_mean(seed in any::<u64>(), n in 1usize..60, sigma in 0.05f64..1.5) {
            let mut rng = seed::rng(seed, &[b"prop"]);
            let dist = LogNormal::new(10.0, sigma).unwrap();
            let v: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            let ci = bootstrap_mean_ci(&v, 2000, 0.99, seed).unwrap();
            let m = mean(&v);
            prop_assert!(ci.low <= m && m <= ci.high, "{} {} {}", ci.low, m, ci.high);
        }
    }
}
