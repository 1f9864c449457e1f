use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ols;

pub const TREND_PERMUTATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    /// Least-squares slope per sample of the original series.
    pub slope: f64,
    /// Two-sided permutation p-value of the slope.
    pub p_value: f64,
    pub blocks: usize,
}

/// Slope of a trait-mean series with a permutation test.
///
/// The series is averaged over consecutive blocks of `window` samples
/// (NaN samples are skipped, all-NaN blocks dropped) so that the
/// permutation test runs on roughly independent points; the slope is fitted
/// to the block means and rescaled to per-sample units.
pub fn trait_trend<R: Rng + ?Sized>(series: &[f64], window: usize, rng: &mut R) -> TrendReport {
    let window = window.max(1);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (b, chunk) in series.chunks(window).enumerate() {
        let (s, c) = chunk.iter().filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if c > 0 {
            x.push((b * window) as f64 + 0.5 * (chunk.len() - 1) as f64);
            y.push(s / c as f64);
        }
    }
    if y.len() < 3 {
        return TrendReport { slope: f64::NAN, p_value: 1.0, blocks: y.len() };
    }
    let observed = ols(&x, &y).slope;
    let mut shuffled = y.clone();
    let mut extreme = 0usize;
    for _ in 0..TREND_PERMUTATIONS {
        shuffled.shuffle(rng);
        if ols(&x, &shuffled).slope.abs() >= observed.abs() {
            extreme += 1;
        }
    }
    TrendReport {
        slope: observed,
        p_value: (extreme + 1) as f64 / (TREND_PERMUTATIONS + 1) as f64,
        blocks: y.len(),
    }
}
