//! Shared particle-system helpers: stable log-sum-exp, effective sample
//! size, and systematic resampling from a uniform stream.

use crate::rng::NormalStream;

pub(super) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(super) fn ess(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &lw in log_weights {
        let w = (lw - max).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

/// Systematic resampling: one uniform positions an evenly spaced comb over
/// the cumulative weights.
pub(super) fn systematic_resample(
    log_weights: &[f64],
    count: usize,
    stream: &mut NormalStream,
) -> Vec<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u0 = stream.next_uniform();
    let mut out = Vec::with_capacity(count);
    let mut cum = weights[0];
    let mut j = 0;
    for k in 0..count {
        let target = (k as f64 + u0) / count as f64 * total;
        while cum < target && j + 1 < weights.len() {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}
