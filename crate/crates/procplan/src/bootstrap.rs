//! Percentile bootstrap over seed-level scores: confidence intervals for a
//! single model's mean and for the difference between two models.
//!
//! Quantiles use the nearest-rank rule on the sorted replicate statistics:
//! index ceil(p*K) - 1. Resampling is deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.10;
pub const DEFAULT_K_SINGLE: usize = 100;
pub const DEFAULT_K_COMPARE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_width: f64,
    pub replicates: usize,
    pub scores: Vec<f64>,
}

impl BootstrapReport {
    pub fn summary(&self) -> String {
        format!("{:.2} ± {:.2} [{:.2}, {:.2}]", self.mean, self.ci_width, self.ci_low, self.ci_high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapComparison {
    pub delta_obs: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
    pub replicates: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_scores(scores: &[f64], what: &str) -> Result<()> {
    if scores.len() < 2 {
        return Err(Error::InvalidArgument(format!("{what}: need at least 2 scores")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("{what}: non-finite score")));
    }
    Ok(())
}

fn check_params(k: usize, alpha: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("replicate count must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::InvalidArgument("alpha must be in (0, 1)".into()));
    }
    Ok(())
}

/// Nearest-rank quantile of an already sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let k = sorted.len();
    let rank = (p * k as f64).ceil() as usize;
    sorted[rank.clamp(1, k) - 1]
}

fn resample_mean(scores: &[f64], rng: &mut ChaCha12Rng) -> f64 {
    let n = scores.len();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += scores[rng.gen_range(0..n)];
    }
    acc / n as f64
}

/// Percentile CI for the mean of seed-level scores.
pub fn bootstrap_single(
    scores: &[f64],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapReport> {
    check_scores(scores, "bootstrap_single")?;
    check_params(k, alpha)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut reps: Vec<f64> = (0..k).map(|_| resample_mean(scores, &mut rng)).collect();
    reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci_low = quantile_sorted(&reps, alpha / 2.0);
    let ci_high = quantile_sorted(&reps, 1.0 - alpha / 2.0);
    Ok(BootstrapReport {
        mean: mean(scores),
        ci_low,
        ci_high,
        ci_width: ci_high - ci_low,
        replicates: k,
        scores: scores.to_vec(),
    })
}

fn comparison_from_reps(
    delta_obs: f64,
    mut reps: Vec<f64>,
    alpha: f64,
) -> BootstrapComparison {
    let k = reps.len();
    reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci_low = quantile_sorted(&reps, alpha / 2.0);
    let ci_high = quantile_sorted(&reps, 1.0 - alpha / 2.0);
    BootstrapComparison {
        delta_obs,
        ci_low,
        ci_high,
        significant: ci_low * ci_high > 0.0,
        replicates: k,
    }
}

/// CI for mean(a) - mean(b) with each side resampled independently per
/// replicate. Significant iff the interval excludes zero.
pub fn bootstrap_compare(
    scores_a: &[f64],
    scores_b: &[f64],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapComparison> {
    check_scores(scores_a, "bootstrap_compare a")?;
    check_scores(scores_b, "bootstrap_compare b")?;
    check_params(k, alpha)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let reps: Vec<f64> = (0..k)
        .map(|_| resample_mean(scores_a, &mut rng) - resample_mean(scores_b, &mut rng))
        .collect();
    Ok(comparison_from_reps(mean(scores_a) - mean(scores_b), reps, alpha))
}

/// Paired variant: scores come from the same seeds index-for-index, so each
/// replicate resamples seed indices once and applies them to both sides.
pub fn bootstrap_compare_paired(
    scores_a: &[f64],
    scores_b: &[f64],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapComparison> {
    check_scores(scores_a, "bootstrap_compare_paired a")?;
    check_scores(scores_b, "bootstrap_compare_paired b")?;
    check_params(k, alpha)?;
    if scores_a.len() != scores_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired comparison needs equal counts, got {} vs {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    let diffs: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let reps: Vec<f64> = (0..k).map(|_| resample_mean(&diffs, &mut rng)).collect();
    Ok(comparison_from_reps(mean(&diffs), reps, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_scores_zero_width() {
        let rep = bootstrap_single(&[7.0; 5], 100, 0.10, 3).unwrap();
        assert_eq!(rep.ci_width, 0.0);
        assert_eq!(rep.ci_low, 7.0);
        assert_eq!(rep.ci_high, 7.0);
        assert_eq!(rep.mean, 7.0);
    }

    #[test]
    fn seeded_rerun_is_bit_identical() {
        let scores = [1.0, 4.0, 2.5, 9.0, 3.0];
        let a = bootstrap_single(&scores, 500, 0.10, 42).unwrap();
        let b = bootstrap_single(&scores, 500, 0.10, 42).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_compare(&scores, &[0.0, 1.0, 2.0], 500, 0.10, 42).unwrap();
        let d = bootstrap_compare(&scores, &[0.0, 1.0, 2.0], 500, 0.10, 42).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn interval_contains_mean_on_spread_scores() {
        let scores = [10.0, 20.0, 30.0, 40.0, 50.0];
        let rep = bootstrap_single(&scores, 1000, 0.10, 5).unwrap();
        assert!(rep.ci_low <= rep.mean && rep.mean <= rep.ci_high);
        assert!(rep.ci_width > 0.0);
    }

    #[test]
    fn endpoints_monotone_in_alpha() {
        let scores = [1.0, 5.0, 2.0, 8.0, 3.0, 9.0];
        let wide = bootstrap_single(&scores, 2000, 0.05, 7).unwrap();
        let mid = bootstrap_single(&scores, 2000, 0.10, 7).unwrap();
        let narrow = bootstrap_single(&scores, 2000, 0.50, 7).unwrap();
        assert!(wide.ci_low <= mid.ci_low && mid.ci_low <= narrow.ci_low);
        assert!(narrow.ci_high <= mid.ci_high && mid.ci_high <= wide.ci_high);
    }

    #[test]
    fn constant_shift_is_significant() {
        let a = [30.0; 5];
        let b = [20.0; 5];
        let cmp = bootstrap_compare(&a, &b, 1000, 0.10, 9).unwrap();
        assert_eq!(cmp.delta_obs, 10.0);
        assert_eq!(cmp.ci_low, 10.0);
        assert_eq!(cmp.ci_high, 10.0);
        assert!(cmp.significant);
    }

    #[test]
    fn identical_samples_not_significant() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let cmp = bootstrap_compare(&a, &a, 1000, 0.10, 11).unwrap();
        assert_eq!(cmp.delta_obs, 0.0);
        assert!(!cmp.significant);
    }

    #[test]
    fn overlapping_samples_not_significant() {
        let a = [10.0, 12.0, 11.0, 13.0, 9.0];
        let b = [11.0, 10.0, 12.0, 9.5, 12.5];
        let cmp = bootstrap_compare(&a, &b, 1000, 0.10, 13).unwrap();
        assert!(!cmp.significant, "{cmp:?}");
    }

    #[test]
    fn paired_detects_consistent_small_margin() {
        // Per-seed scores vary a lot but the margin is a constant +2:
        // paired resampling sees a zero-variance difference, independent
        // resampling does not.
        let a = [50.0, 30.0, 70.0, 40.0, 60.0];
        let b = [48.0, 28.0, 68.0, 38.0, 58.0];
        let paired = bootstrap_compare_paired(&a, &b, 1000, 0.10, 15).unwrap();
        assert!(paired.significant);
        assert_eq!(paired.ci_low, 2.0);
        assert_eq!(paired.ci_high, 2.0);
        let indep = bootstrap_compare(&a, &b, 1000, 0.10, 15).unwrap();
        assert!(indep.ci_high - indep.ci_low > paired.ci_high - paired.ci_low);
    }

    /// Exhaustive oracle: the resampled-mean distribution of 5 scores has
    /// exactly 5^5 equally likely index tuples; its nearest-rank quantiles
    /// are exact. The empirical quantile at K = 10^5 must agree.
    #[test]
    fn matches_exhaustive_enumeration_on_five_scores() {
        let scores = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut sums: Vec<f64> = Vec::with_capacity(3125);
        for i0 in 0..5 {
            for i1 in 0..5 {
                for i2 in 0..5 {
                    for i3 in 0..5 {
                        for i4 in 0..5 {
                            let s = scores[i0] + scores[i1] + scores[i2] + scores[i3] + scores[i4];
                            sums.push(s / 5.0);
                        }
                    }
                }
            }
        }
        sums.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let exact_low = quantile_sorted(&sums, 0.05);
        let exact_high = quantile_sorted(&sums, 0.95);
        assert_eq!(exact_low, 2.0);
        assert_eq!(exact_high, 4.0);
        let rep = bootstrap_single(&scores, 100_000, 0.10, 17).unwrap();
        assert!((rep.ci_low - exact_low).abs() < 1e-6);
        assert!((rep.ci_high - exact_high).abs() < 1e-6);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(bootstrap_single(&[1.0], 100, 0.10, 0).is_err());
        assert!(bootstrap_single(&[1.0, f64::NAN], 100, 0.10, 0).is_err());
        assert!(bootstrap_single(&[1.0, 2.0], 0, 0.10, 0).is_err());
        assert!(bootstrap_single(&[1.0, 2.0], 100, 0.0, 0).is_err());
        assert!(bootstrap_compare_paired(&[1.0, 2.0], &[1.0, 2.0, 3.0], 10, 0.1, 0).is_err());
    }
}
