//! Time-series analyses over population telemetry: autocorrelation and
//! dynamics classification, phase-orbit contraction, predator/prey lag and
//! trait trends.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::world::PopulationRecord;

mod acf;
mod orbit;
pub mod synthetic;
mod trend;

pub use acf::{acf, classify_detailed, classify_dynamics, Classification, coefficient_of_variation2, AcfResult, DynamicsClass, Thresholds};
pub use orbit::{lag_report, phase_orbit_trend, prominent_peaks, LagReport, OrbitTrend};
pub use trend::{trait_trend, TrendReport, TREND_PERMUTATIONS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("series too short: need {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("series is constant; autocorrelation undefined beyond lag 0")]
    Constant,
    #[error("inconclusive: {0}")]
    Inconclusive(&'static str),
    #[error("series lengths differ")]
    LengthMismatch,
    #[error("ticks are not uniformly spaced")]
    NonUniform,
}

/// Per-tick counts and trait means; absent means are NaN.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationSeries {
    pub ticks: Vec<u64>,
    pub n_pred: Vec<f64>,
    pub n_prey: Vec<f64>,
    pub mean_attack: Vec<f64>,
    pub mean_resilience: Vec<f64>,
    pub mean_speed_pred: Vec<f64>,
    pub mean_speed_prey: Vec<f64>,
    pub mean_health: Vec<f64>,
}

impl PopulationSeries {
    pub fn from_records(records: &[PopulationRecord]) -> Self {
        let mut s = PopulationSeries::default();
        for r in records {
            s.push(r);
        }
        s
    }

    pub fn push(&mut self, r: &PopulationRecord) {
        let v = |o: Option<f64>| o.unwrap_or(f64::NAN);
        self.ticks.push(r.tick);
        self.n_pred.push(r.n_predator as f64);
        self.n_prey.push(r.n_prey as f64);
        self.mean_attack.push(v(r.mean_attack));
        self.mean_resilience.push(v(r.mean_resilience));
        self.mean_speed_pred.push(v(r.mean_speed_pred));
        self.mean_speed_prey.push(v(r.mean_speed_prey));
        self.mean_health.push(v(r.mean_health));
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Checks uniform tick spacing, equal column lengths and non-negative
    /// counts.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let n = self.ticks.len();
        let cols = [
            &self.n_pred,
            &self.n_prey,
            &self.mean_attack,
            &self.mean_resilience,
            &self.mean_speed_pred,
            &self.mean_speed_prey,
            &self.mean_health,
        ];
        if cols.iter().any(|c| c.len() != n) {
            return Err(AnalysisError::LengthMismatch);
        }
        if n >= 2 {
            let d = self.ticks[1].wrapping_sub(self.ticks[0]);
            if d == 0 || self.ticks.windows(2).any(|w| w[1].wrapping_sub(w[0]) != d) {
                return Err(AnalysisError::NonUniform);
            }
        }
        if self.n_pred.iter().chain(&self.n_prey).any(|&c| !(c >= 0.0)) {
            return Err(AnalysisError::Inconclusive("negative or missing count"));
        }
        Ok(())
    }

    /// Tail of the series starting at sample `from`.
    pub fn tail(&self, from: usize) -> PopulationSeries {
        let from = from.min(self.len());
        PopulationSeries {
            ticks: self.ticks[from..].to_vec(),
            n_pred: self.n_pred[from..].to_vec(),
            n_prey: self.n_prey[from..].to_vec(),
            mean_attack: self.mean_attack[from..].to_vec(),
            mean_resilience: self.mean_resilience[from..].to_vec(),
            mean_speed_pred: self.mean_speed_pred[from..].to_vec(),
            mean_speed_prey: self.mean_speed_prey[from..].to_vec(),
            mean_health: self.mean_health[from..].to_vec(),
        }
    }
}

/// Ordinary least squares of `y` on `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with fewer than three points.
    pub slope_stderr: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len().min(y.len());
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 && sxx > 0.0 {
        let sse: f64 = (0..n).map(|i| (y[i] - intercept - slope * x[i]).powi(2)).sum();
        sqrt(sse / (nf - 2.0) / sxx)
    } else {
        f64::NAN
    };
    LineFit { slope, intercept, slope_stderr }
}

/// Removes the least-squares line through `(t, x_t)`.
pub fn detrend(x: &[f64]) -> Vec<f64> {
    let t: Vec<f64> = (0..x.len()).map(|i| i as f64).collect();
    let fit = ols(&t, x);
    x.iter().enumerate().map(|(i, v)| v - fit.intercept - fit.slope * i as f64).collect()
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
