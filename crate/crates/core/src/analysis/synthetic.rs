//! Generators of series with known dynamics, used to validate the
//! classifier and the orbit and lag estimators.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::DynamicsClass;
use crate::math::{cos, powf, sin, sqrt};

fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

/// AR(2) with complex poles `modulus·e^{±iω}`, `ω = 2π/period`, unit
/// innovations, around `level`; a burn-in of 500 samples is discarded.
pub fn ar2<R: Rng + ?Sized>(n: usize, modulus: f64, period: f64, level: f64, scale: f64, rng: &mut R) -> Vec<f64> {
    let a1 = 2.0 * modulus * cos(TAU / period);
    let a2 = -modulus * modulus;
    let (mut x1, mut x2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + 500 {
        let x = a1 * x1 + a2 * x2 + normal(rng, 1.0);
        x2 = x1;
        x1 = x;
        if t >= 500 {
            out.push(level + scale * x);
        }
    }
    out
}

/// `level + amp·sin(2πt/period + phase)` plus white noise at power ratio
/// `snr`.
pub fn noisy_sine<R: Rng + ?Sized>(n: usize, period: f64, phase: f64, level: f64, amp: f64, snr: f64, rng: &mut R) -> Vec<f64> {
    let sd = sqrt(amp * amp / 2.0 / snr);
    (0..n).map(|t| level + amp * sin(TAU * t as f64 / period + phase) + normal(rng, sd)).collect()
}

pub fn near_constant<R: Rng + ?Sized>(n: usize, level: f64, sd: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| level + normal(rng, sd)).collect()
}

pub fn random_walk<R: Rng + ?Sized>(n: usize, start: f64, step_sd: f64, rng: &mut R) -> Vec<f64> {
    let mut x = start;
    (0..n)
        .map(|_| {
            x += normal(rng, step_sd);
            x
        })
        .collect()
}

/// Classic Lotka–Volterra `x' = a x − b x y`, `y' = c x y − d y` by RK4;
/// returns `(prey, predator)` sampled every `every` steps.
#[allow(clippy::too_many_arguments)]
pub fn lotka_volterra(n: usize, dt: f64, every: usize, (a, b, c, d): (f64, f64, f64, f64), x0: f64, y0: f64) -> (Vec<f64>, Vec<f64>) {
    let f = |x: f64, y: f64| (a * x - b * x * y, c * x * y - d * y);
    let (mut x, mut y) = (x0, y0);
    let (mut prey, mut pred) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        prey.push(x);
        pred.push(y);
        for _ in 0..every {
            let k1 = f(x, y);
            let k2 = f(x + 0.5 * dt * k1.0, y + 0.5 * dt * k1.1);
            let k3 = f(x + 0.5 * dt * k2.0, y + 0.5 * dt * k2.1);
            let k4 = f(x + dt * k3.0, y + dt * k3.1);
            x += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            y += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
    }
    (prey, pred)
}

/// Orbit around `(cx, cy)` whose radius is multiplied by `factor` every
/// cycle; returns `(pred, prey)` with the predator a quarter period behind.
pub fn spiral(cycles: usize, per_cycle: usize, r0: f64, factor: f64, cx: f64, cy: f64) -> (Vec<f64>, Vec<f64>) {
    let n = cycles * per_cycle;
    let mut pred = Vec::with_capacity(n);
    let mut prey = Vec::with_capacity(n);
    for t in 0..n {
        let phase = t as f64 / per_cycle as f64;
        let r = r0 * powf(factor, phase);
        prey.push(cy + r * cos(TAU * phase));
        pred.push(cx + r * cos(TAU * (phase - 0.25)));
    }
    (pred, prey)
}

#[derive(Clone, Debug)]
pub struct LabeledSeries {
    pub class: DynamicsClass,
    pub pred: Vec<f64>,
    pub prey: Vec<f64>,
}

/// `per_class` labelled predator/prey pairs of length `n` for each of the
/// four classes: damped AR(2) (modulus 0.95, period 20–40) as quasi-cycles,
/// noisy sines (SNR 10, period 20–100) as limit cycles, a constant level
/// with 0.5–5% noise as equilibria and Gaussian random walks as aperiodic.
pub fn labeled_corpus<R: Rng + ?Sized>(per_class: usize, n: usize, rng: &mut R) -> Vec<LabeledSeries> {
    let mut out = Vec::with_capacity(4 * per_class);
    for _ in 0..per_class {
        let period = rng.random_range(20.0..40.0);
        let level = rng.random_range(50.0..500.0);
        let scale = rng.random_range(1.0..5.0);
        out.push(LabeledSeries {
            class: DynamicsClass::QuasiCycle,
            pred: ar2(n, 0.95, period, level, scale, rng),
            prey: ar2(n, 0.95, period, level, scale, rng),
        });
    }
    for _ in 0..per_class {
        let period = rng.random_range(20.0..100.0);
        let phase = rng.random_range(0.0..TAU);
        let level = rng.random_range(50.0..500.0);
        let amp = rng.random_range(0.1..0.5) * level;
        out.push(LabeledSeries {
            class: DynamicsClass::NoisyLimitCycle,
            pred: noisy_sine(n, period, phase - TAU / 4.0, level, amp, 10.0, rng),
            prey: noisy_sine(n, period, phase, level, amp, 10.0, rng),
        });
    }
    for _ in 0..per_class {
        let level = rng.random_range(50.0..500.0);
        let sd = rng.random_range(0.005..0.05) * level;
        out.push(LabeledSeries {
            class: DynamicsClass::StableEquilibrium,
            pred: near_constant(n, level, sd, rng),
            prey: near_constant(n, level, sd, rng),
        });
    }
    for _ in 0..per_class {
        let start = rng.random_range(50.0..200.0);
        let sd = rng.random_range(1.0..3.0);
        out.push(LabeledSeries {
            class: DynamicsClass::Aperiodic,
            pred: random_walk(n, start, sd, rng),
            prey: random_walk(n, start, sd, rng),
        });
    }
    out
}
