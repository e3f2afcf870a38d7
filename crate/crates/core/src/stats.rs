//! Summary statistics whose values do not depend on sample order.
//!
//! Ensemble statistics must be bitwise invariant under permutation of the
//! members, so sums are either taken over sorted values or accumulated in
//! fixed point.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Sum of values in ascending order.
pub fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// Sample mean and standard error of the mean, independent of input order.
pub fn estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mut v = values.to_vec();
    let mean = ordered_sum(&mut v) / n as f64;
    if n == 1 {
        return Estimate { mean, se: 0.0 };
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = ordered_sum(&mut dev) / (n - 1) as f64;
    Estimate {
        mean,
        se: (var / n as f64).sqrt(),
    }
}

/// Fixed-point accumulator for values in `[-1, 1]` (2^-100 resolution).
/// Addition is exact, so the total is independent of summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FixedSum(i128);

const FIXED_SCALE: f64 = 1_267_650_600_228_229_401_496_703_205_376.0; // 2^100

impl FixedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        debug_assert!(
            x.abs() <= 1.0 + 1e-12,
            "fixed-point value out of range: {x}"
        );
        self.0 += (x * FIXED_SCALE) as i128;
    }

    #[inline]
    pub fn merge(&mut self, other: FixedSum) {
        self.0 += other.0;
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / FIXED_SCALE
    }
}

/// One-sample Kolmogorov–Smirnov distance against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the Kolmogorov distribution.
pub const KS_CRITICAL_1PCT: f64 = 1.627_6;

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}
