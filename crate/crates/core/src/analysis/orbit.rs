use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{acf, detrend, mean, ols, AnalysisError, Thresholds};
use crate::math::{round, sqrt};

/// Indices of local maxima whose topographic prominence is at least
/// `fraction` of the series range. A plateau is represented by its first
/// sample.
pub fn prominent_peaks(x: &[f64], fraction: f64) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let need = fraction * (hi - lo);
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                let h = x[i];
                let mut left = h;
                for &v in x[..i].iter().rev() {
                    if v > h {
                        break;
                    }
                    left = left.min(v);
                }
                let mut right = h;
                for &v in &x[j + 1..] {
                    if v > h {
                        break;
                    }
                    right = right.min(v);
                }
                if h - left.max(right) >= need && need > 0.0 {
                    peaks.push(i);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Mean distance from the centroid for each prey-peak to prey-peak cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrend {
    pub radii: Vec<f64>,
    /// Least-squares slope of radius against cycle index.
    pub slope: f64,
    pub slope_stderr: f64,
    pub contracting: bool,
}

/// Phase-orbit radius trend in `(n_pred, n_prey)` space. Cycles run
/// between successive prey peaks of prominence at least 10% of the prey
/// range; at least three are needed.
pub fn phase_orbit_trend(pred: &[f64], prey: &[f64]) -> Result<OrbitTrend, AnalysisError> {
    if pred.len() != prey.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    let peaks = prominent_peaks(prey, 0.1);
    if peaks.len() < 4 {
        return Err(AnalysisError::Inconclusive("fewer than 3 cycles"));
    }
    let (cp, cq) = (mean(pred), mean(prey));
    let radii: Vec<f64> = peaks
        .windows(2)
        .map(|w| {
            let seg = w[0]..w[1];
            let sum: f64 = seg.clone().map(|t| sqrt((pred[t] - cp).powi(2) + (prey[t] - cq).powi(2))).sum();
            sum / seg.len() as f64
        })
        .collect();
    let idx: Vec<f64> = (0..radii.len()).map(|i| i as f64).collect();
    let fit = ols(&idx, &radii);
    Ok(OrbitTrend { slope: fit.slope, slope_stderr: fit.slope_stderr, contracting: fit.slope < 0.0, radii })
}

/// Lag at which the predator series best matches the prey series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagReport {
    /// Dominant period in samples, from the prey autocorrelation.
    pub period: f64,
    /// Positive when the predator follows the prey.
    pub lag: f64,
    pub fraction: f64,
    pub correlation: f64,
}

fn parabolic(ym: f64, y0: f64, yp: f64) -> f64 {
    let d = ym - 2.0 * y0 + yp;
    if d < 0.0 {
        (0.5 * (ym - yp) / d).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Cross-correlation peak between the detrended series within half a
/// dominant period either side of zero.
pub fn lag_report(pred: &[f64], prey: &[f64]) -> Result<LagReport, AnalysisError> {
    if pred.len() != prey.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    let n = prey.len();
    let r = acf(prey, n / 4)?;
    if r.constant {
        return Err(AnalysisError::Constant);
    }
    let weak = Thresholds::default().weak;
    let (k, _) = r
        .side_peaks
        .iter()
        .copied()
        .find(|p| p.1 >= weak)
        .ok_or(AnalysisError::Inconclusive("no dominant period"))?;
    let period = k as f64 + parabolic(r.acf[k - 1], r.acf[k], r.acf[k + 1]);

    let center = |x: &[f64]| {
        let d = detrend(x);
        let m = mean(&d);
        d.into_iter().map(|v| v - m).collect::<Vec<_>>()
    };
    let (p, q) = (center(pred), center(prey));
    let norm = sqrt(p.iter().map(|v| v * v).sum::<f64>() * q.iter().map(|v| v * v).sum::<f64>());
    if !(norm > 0.0) {
        return Err(AnalysisError::Constant);
    }
    let half = (round(period / 2.0) as i64).max(1);
    let cc = |lag: i64| -> f64 {
        let s: f64 = if lag >= 0 {
            let l = lag as usize;
            q[..n - l].iter().zip(&p[l..]).map(|(a, b)| a * b).sum()
        } else {
            let l = (-lag) as usize;
            q[l..].iter().zip(&p[..n - l]).map(|(a, b)| a * b).sum()
        };
        s / norm
    };
    let lags: Vec<i64> = (-half..=half).collect();
    let vals: Vec<f64> = lags.iter().map(|&l| cc(l)).collect();
    let best = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let mut lag = lags[best] as f64;
    if best > 0 && best + 1 < vals.len() {
        lag += parabolic(vals[best - 1], vals[best], vals[best + 1]);
    }
    Ok(LagReport { period, lag, fraction: lag / period, correlation: vals[best] })
}
