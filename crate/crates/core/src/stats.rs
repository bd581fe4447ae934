//! Binomial estimates with Wilson score intervals.

use serde::{Deserialize, Serialize};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // pin the exact endpoints so ci_low <= point <= ci_high survives rounding
    let lo = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if successes == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

/// Point estimate, 95% Wilson interval and provenance of one Monte Carlo
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub quantity: String,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub successes: u64,
    pub n_samples: u64,
    pub seed: u64,
}

impl EstimateResult {
    pub fn from_counts(quantity: impl Into<String>, successes: u64, n_samples: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, n_samples, Z95);
        let point = if n_samples == 0 { 0.0 } else { successes as f64 / n_samples as f64 };
        Self { quantity: quantity.into(), point, ci_low, ci_high, successes, n_samples, seed }
    }

    /// Plug-in binomial standard error.
    pub fn std_error(&self) -> f64 {
        if self.n_samples == 0 {
            return f64::INFINITY;
        }
        (self.point * (1.0 - self.point) / self.n_samples as f64).sqrt()
    }

    /// Complementary estimate `1 - point` from the same counts.
    pub fn complement(&self, quantity: impl Into<String>) -> Self {
        Self::from_counts(quantity, self.n_samples - self.successes, self.n_samples, self.seed)
    }
}

/// Two-sample comparison of binomial proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub gap: f64,
    /// Pooled standard error of the difference.
    pub std_error: f64,
}

impl Comparison {
    pub fn new(a: &EstimateResult, b: &EstimateResult) -> Self {
        let pooled = (a.successes + b.successes) as f64 / (a.n_samples + b.n_samples) as f64;
        let var = pooled * (1.0 - pooled) * (1.0 / a.n_samples as f64 + 1.0 / b.n_samples as f64);
        Self { gap: a.point - b.point, std_error: var.sqrt() }
    }

    pub fn within(&self, multiples: f64) -> bool {
        self.gap.abs() <= multiples * self.std_error
    }

    /// `a >= b - multiples * se`.
    pub fn not_below(&self, multiples: f64) -> bool {
        self.gap >= -multiples * self.std_error
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngKey, StreamTag};
    use crate::lattice::Site;

    #[test]
    fn wilson_reference_values() {
        // 8/10 at 95%: center 0.7167, half-width 0.2266 (computed by hand from
        // the score formula).
        let (lo, hi) = wilson_interval(8, 10, Z95);
        assert!((lo - 0.4901624).abs() < 1e-6, "{lo}");
        assert!((hi - 0.9433178).abs() < 1e-6, "{hi}");
        assert_eq!(wilson_interval(0, 10, Z95).0, 0.0);
        assert_eq!(wilson_interval(10, 10, Z95).1, 1.0);
        let (lo, _) = wilson_interval(200_000, 200_000, Z95);
        assert!(lo > 0.9999);
    }

    #[test]
    fn interval_contains_point_and_shrinks() {
        let mut last = f64::INFINITY;
        for n in [100u64, 400, 1600, 6400] {
            let e = EstimateResult::from_counts("q", n * 3 / 10, n, 0);
            assert!(e.ci_low <= e.point && e.point <= e.ci_high);
            let width = e.ci_high - e.ci_low;
            if last.is_finite() {
                // quadrupling n halves the width asymptotically
                assert!((last / width - 2.0).abs() < 0.05, "{}", last / width);
            }
            last = width;
        }
    }

    #[test]
    fn wilson_coverage_on_synthetic_problems() {
        let mut covered = 0;
        let problems = 200;
        for j in 0..problems {
            let key = RngKey::new(2024, j);
            let q = 0.05 + 0.9 * key.stream(StreamTag::Auxiliary).uniform(Site::new(-1, -1));
            let trials = 150u64;
            let st = key.stream(StreamTag::Initial);
            let k = (0..trials as i32).filter(|&i| st.uniform(Site::new(i, 0)) < q).count() as u64;
            let (lo, hi) = wilson_interval(k, trials, Z95);
            if lo <= q && q <= hi {
                covered += 1;
            }
        }
        let coverage = covered as f64 / problems as f64;
        assert!((0.92..=0.98).contains(&coverage), "coverage {coverage}");
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        let s: CompensatedSum = xs.iter().copied().collect();
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn comparison_identical_estimates() {
        let a = EstimateResult::from_counts("a", 30, 100, 0);
        let c = Comparison::new(&a, &a);
        assert_eq!(c.gap, 0.0);
        assert!(c.within(4.0));
    }
}
