use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{detrend, mean, AnalysisError};

/// Autocorrelation of a linearly detrended series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfResult {
    /// `acf[k]` for lags `0..=max_lag`; only `[1.0]` when `constant`.
    pub acf: Vec<f64>,
    /// Maximum of every positive lobe that follows a negative one, in lag
    /// order. A lobe still open at `max_lag` counts only if its maximum is
    /// interior.
    pub side_peaks: Vec<(usize, f64)>,
    /// First side peak reaching [`Thresholds::default`]'s `weak` level.
    pub first_side_peak: Option<(usize, f64)>,
    /// Mean ratio of successive side peaks above the weak level.
    pub envelope_decay: Option<f64>,
    pub constant: bool,
}

/// Biased sample autocorrelation after linear detrending.
///
/// Requires `series.len() >= 4 * max_lag`. A constant series yields
/// `acf == [1.0]` with `constant` set.
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfResult, AnalysisError> {
    let need = (4 * max_lag).max(2);
    if series.len() < need {
        return Err(AnalysisError::TooShort { need, got: series.len() });
    }
    let x = detrend(series);
    let n = x.len();
    let m = mean(&x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    let scale = series.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if !(denom > n as f64 * (1e-12 * scale) * (1e-12 * scale)) {
        return Ok(AcfResult { acf: vec![1.0], side_peaks: Vec::new(), first_side_peak: None, envelope_decay: None, constant: true });
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let s: f64 = d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum();
        out.push(s / denom);
    }
    out[0] = 1.0;
    let side_peaks = lobe_maxima(&out);
    let weak = Thresholds::default().weak;
    Ok(AcfResult {
        first_side_peak: side_peaks.iter().copied().find(|p| p.1 >= weak),
        envelope_decay: envelope(&side_peaks, weak),
        side_peaks,
        acf: out,
        constant: false,
    })
}

fn lobe_maxima(acf: &[f64]) -> Vec<(usize, f64)> {
    let mut peaks = Vec::new();
    let mut seen_negative = false;
    let mut lobe: Option<(usize, f64)> = None;
    for (k, &v) in acf.iter().enumerate().skip(1) {
        if v < 0.0 {
            seen_negative = true;
            if let Some(p) = lobe.take() {
                peaks.push(p);
            }
        } else if seen_negative {
            match lobe {
                Some((_, best)) if best >= v => {}
                _ => lobe = Some((k, v)),
            }
        }
    }
    if let Some(p) = lobe {
        if p.0 + 1 < acf.len() {
            peaks.push(p);
        }
    }
    peaks
}

fn envelope(peaks: &[(usize, f64)], weak: f64) -> Option<f64> {
    let strong: Vec<f64> = peaks.iter().map(|p| p.1).take_while(|&v| v >= weak).collect();
    if strong.len() < 2 {
        return None;
    }
    let ratios = strong.windows(2).map(|w| w[1] / w[0]);
    Some(ratios.sum::<f64>() / (strong.len() - 1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DynamicsClass {
    QuasiCycle,
    NoisyLimitCycle,
    StableEquilibrium,
    Aperiodic,
}

/// Classification thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub max_lag: usize,
    /// Side-peak level counting as a strong oscillation.
    pub strong: f64,
    /// Number of leading side peaks that must all be strong.
    pub sustained_periods: usize,
    /// Smallest side peak counted at all.
    pub weak: f64,
    /// Largest first-side-peak lag, as a fraction of `max_lag`, that still
    /// counts as a period.
    pub max_period_fraction: f64,
    /// Variance over squared mean, on the final half, below which a series
    /// counts as flat.
    pub stable_cv2: f64,
    /// A flat series must also decorrelate (ACF below `weak`) within this
    /// fraction of `max_lag`; slow wanderers do not.
    pub stable_memory_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            max_lag: 500,
            strong: 0.5,
            sustained_periods: 3,
            weak: 0.1,
            max_period_fraction: 0.5,
            stable_cv2: 0.01,
            stable_memory_fraction: 0.1,
        }
    }
}

/// Variance over squared mean of the final half of `x`.
pub fn coefficient_of_variation2(x: &[f64]) -> f64 {
    let half = &x[x.len() / 2..];
    let m = mean(half);
    let var = half.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / half.len() as f64;
    var / (m * m)
}

/// Classifies the joint dynamics from the mean autocorrelation of the
/// predator and prey series (constant series are left out of the mean).
pub fn classify_dynamics(pred: &[f64], prey: &[f64], th: &Thresholds) -> Result<DynamicsClass, AnalysisError> {
    Ok(classify_detailed(pred, prey, th)?.class)
}

/// Everything `classify_dynamics` looked at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: DynamicsClass,
    pub pred: AcfResult,
    pub prey: AcfResult,
    /// Mean ACF the rules were applied to, with its side peaks.
    pub combined: AcfResult,
    pub cv2_pred: f64,
    pub cv2_prey: f64,
}

pub fn classify_detailed(pred: &[f64], prey: &[f64], th: &Thresholds) -> Result<Classification, AnalysisError> {
    if pred.len() != prey.len() {
        return Err(AnalysisError::LengthMismatch);
    }
    let a = acf(pred, th.max_lag)?;
    let b = acf(prey, th.max_lag)?;
    let live: Vec<&AcfResult> = [&a, &b].into_iter().filter(|r| !r.constant).collect();
    let combined = if live.is_empty() {
        AcfResult { acf: vec![1.0], side_peaks: Vec::new(), first_side_peak: None, envelope_decay: None, constant: true }
    } else {
        let mut m = vec![0.0; th.max_lag + 1];
        for r in &live {
            for (o, v) in m.iter_mut().zip(&r.acf) {
                *o += v / live.len() as f64;
            }
        }
        let side_peaks = lobe_maxima(&m);
        AcfResult {
            first_side_peak: side_peaks.iter().copied().find(|p| p.1 >= th.weak),
            envelope_decay: envelope(&side_peaks, th.weak),
            side_peaks,
            acf: m,
            constant: false,
        }
    };
    let cv2_pred = coefficient_of_variation2(pred);
    let cv2_prey = coefficient_of_variation2(prey);
    let class = rules(&combined, cv2_pred, cv2_prey, th);
    Ok(Classification { class, pred: a, prey: b, combined, cv2_pred, cv2_prey })
}

fn rules(r: &AcfResult, cv2_pred: f64, cv2_prey: f64, th: &Thresholds) -> DynamicsClass {
    let peaks = &r.side_peaks;
    let max_period = th.max_period_fraction * th.max_lag as f64;
    let first = peaks.first().copied().filter(|p| p.1 >= th.weak && p.0 as f64 <= max_period);
    let Some((_, v0)) = first else {
        let memory = r.acf.iter().position(|&v| v < th.weak).unwrap_or(usize::MAX);
        let short_memory = r.constant || memory as f64 <= th.stable_memory_fraction * th.max_lag as f64;
        return if cv2_pred < th.stable_cv2 && cv2_prey < th.stable_cv2 && short_memory {
            DynamicsClass::StableEquilibrium
        } else {
            DynamicsClass::Aperiodic
        };
    };
    let leading = &peaks[..peaks.len().min(th.sustained_periods)];
    if leading.len() == th.sustained_periods && leading.iter().all(|p| p.1 >= th.strong) {
        return DynamicsClass::NoisyLimitCycle;
    }
    // Sampling noise in the ACF of a damped oscillation is of the order of
    // the later peaks themselves, so the decay is judged against the first
    // peak rather than pairwise.
    let later = &leading[1..];
    let decaying = later.is_empty() || later.iter().map(|p| p.1).sum::<f64>() / (later.len() as f64) < v0;
    if v0 < th.strong && decaying {
        DynamicsClass::QuasiCycle
    } else {
        DynamicsClass::Aperiodic
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::cos;

    #[test]
    fn constant_is_flagged() {
        let r = acf(&[3.0; 40], 10).unwrap();
        assert!(r.constant);
        assert_eq!(r.acf, vec![1.0]);
    }

    #[test]
    fn too_short() {
        assert_eq!(acf(&[1.0, 2.0, 3.0], 1).unwrap_err(), AnalysisError::TooShort { need: 4, got: 3 });
    }

    #[test]
    fn lobes_of_cosine() {
        let a: Vec<f64> = (0..=100).map(|k| cos(k as f64 * core::f64::consts::TAU / 20.0)).collect();
        let p = lobe_maxima(&a);
        assert_eq!(p.iter().map(|p| p.0).collect::<Vec<_>>(), vec![20, 40, 60, 80]);
    }
}
