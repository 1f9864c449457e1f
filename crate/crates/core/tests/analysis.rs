use std::f64::consts::TAU;

use predprey_core::analysis::synthetic::{labeled_corpus, lotka_volterra, spiral};
use predprey_core::analysis::{
    acf, classify_dynamics, lag_report, phase_orbit_trend, trait_trend, AnalysisError, DynamicsClass, Thresholds,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn sine_acf_has_the_period() {
    let t = 25;
    let x: Vec<f64> = (0..20_000).map(|i| (TAU * i as f64 / t as f64).sin()).collect();
    let r = acf(&x, 100).unwrap();
    assert!((r.acf[t] - 1.0).abs() < 0.02, "{}", r.acf[t]);
    assert_eq!(r.first_side_peak.unwrap().0, t);
}

#[test]
fn white_noise_stays_in_bartlett_band() {
    let n = 10_000;
    let mut g = rng(1);
    let x: Vec<f64> = (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut g)).collect();
    let r = acf(&x, 500).unwrap();
    let band = 3.0 / (n as f64).sqrt();
    let inside = r.acf[1..].iter().filter(|v| v.abs() < band).count();
    assert!(inside as f64 >= 0.99 * 500.0, "{inside}");
}

#[test]
fn acf_is_reversal_symmetric() {
    let mut g = rng(2);
    let x: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.1).sin() + Normal::new(0.0, 0.3).unwrap().sample(&mut g)).collect();
    let mut y = x.clone();
    y.reverse();
    let (a, b) = (acf(&x, 200).unwrap(), acf(&y, 200).unwrap());
    for (u, v) in a.acf.iter().zip(&b.acf) {
        assert!((u - v).abs() < 1e-12);
    }
    assert!(a.acf.iter().all(|v| v.abs() <= 1.0 + 1e-12));
}

#[test]
fn corpus_accuracy() {
    let corpus = labeled_corpus(100, 2000, &mut rng(7));
    let th = Thresholds::default();
    let mut wrong = Vec::new();
    for (i, s) in corpus.iter().enumerate() {
        let c = classify_dynamics(&s.pred, &s.prey, &th).unwrap();
        if c != s.class {
            wrong.push((i, s.class, c));
        }
    }
    let acc = 1.0 - wrong.len() as f64 / corpus.len() as f64;
    assert!(acc >= 0.95, "accuracy {acc}: {wrong:?}");
}

#[test]
fn classify_is_deterministic_and_checks_length() {
    let corpus = labeled_corpus(1, 2000, &mut rng(3));
    let th = Thresholds::default();
    for s in &corpus {
        assert_eq!(classify_dynamics(&s.pred, &s.prey, &th), classify_dynamics(&s.pred, &s.prey, &th));
    }
    let short = vec![1.0; 100];
    assert!(matches!(classify_dynamics(&short, &short, &th), Err(AnalysisError::TooShort { .. })));
}

#[test]
fn spirals_have_the_right_sign() {
    let (p, q) = spiral(12, 60, 50.0, 0.9, 100.0, 200.0);
    assert!(phase_orbit_trend(&p, &q).unwrap().slope < 0.0);
    let (p, q) = spiral(12, 60, 50.0, 1.1, 100.0, 200.0);
    assert!(phase_orbit_trend(&p, &q).unwrap().slope > 0.0);
    let (p, q) = spiral(12, 60, 50.0, 1.0, 100.0, 200.0);
    let t = phase_orbit_trend(&p, &q).unwrap();
    assert!(t.slope.abs() <= 2.0 * t.slope_stderr + 1e-9 * t.radii[0], "{t:?}");
}

#[test]
fn noisy_spirals_sign_matches_in_95_percent() {
    let mut g = rng(11);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut good = 0;
    for trial in 0..100 {
        let factor = if trial % 2 == 0 { 0.9 } else { 1.1 };
        let (mut p, mut q) = spiral(10, 80, 40.0, factor, 100.0, 100.0);
        for v in p.iter_mut().chain(q.iter_mut()) {
            *v += noise.sample(&mut g);
        }
        if let Ok(t) = phase_orbit_trend(&p, &q) {
            if (t.slope < 0.0) == (factor < 1.0) {
                good += 1;
            }
        }
    }
    assert!(good >= 95, "{good}");
}

#[test]
fn too_few_cycles_is_inconclusive() {
    let (p, q) = spiral(2, 60, 50.0, 0.9, 0.0, 0.0);
    assert!(matches!(phase_orbit_trend(&p, &q), Err(AnalysisError::Inconclusive(_))));
}

#[test]
fn quarter_period_lag() {
    let period = 50.0;
    let prey: Vec<f64> = (0..4000).map(|t| (TAU * t as f64 / period).sin()).collect();
    let pred: Vec<f64> = (0..4000).map(|t| (TAU * t as f64 / period - TAU / 4.0).sin()).collect();
    let r = lag_report(&pred, &prey).unwrap();
    assert!((r.fraction - 0.25).abs() < 0.03, "{r:?}");
    let same = lag_report(&prey, &prey).unwrap();
    assert!(same.lag.abs() < 1e-9);
}

#[test]
fn lotka_volterra_predator_lags_prey() {
    let (prey, pred) = lotka_volterra(4000, 0.01, 5, (1.0, 1.0, 1.0, 1.0), 2.0, 1.0);
    let r = lag_report(&pred, &prey).unwrap();
    assert!(r.fraction > 0.2 && r.fraction < 0.3, "{r:?}");
}

#[test]
fn increasing_series_is_significant() {
    let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let r = trait_trend(&x, 10, &mut rng(5));
    assert!(r.slope > 0.0 && r.p_value < 1e-3, "{r:?}");
    assert!((r.slope - 1.0).abs() < 1e-9);
}

#[test]
fn noise_p_values_are_uniform() {
    let mut g = rng(6);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let runs = 200;
    let mut ps: Vec<f64> = (0..runs)
        .map(|_| {
            let x: Vec<f64> = (0..60).map(|_| noise.sample(&mut g)).collect();
            trait_trend(&x, 1, &mut g).p_value
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    // Kolmogorov–Smirnov distance against U(0,1); 1.63/sqrt(n) is the 1% level.
    let d = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - i as f64 / runs as f64).abs().max(((i + 1) as f64 / runs as f64 - p).abs()))
        .fold(0.0, f64::max);
    assert!(d < 1.63 / (runs as f64).sqrt(), "{d}");
}

#[test]
fn extinct_series_is_not_periodic() {
    let zeros = vec![0.0; 2000];
    let c = classify_dynamics(&zeros, &zeros, &Thresholds::default()).unwrap();
    assert_eq!(c, DynamicsClass::Aperiodic);
}
