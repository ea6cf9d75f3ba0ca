use std::f64::consts::TAU;

use diwsim_core::noise::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Independent AR generator in the textbook form `x_t = sum phi_k x_{t-k} + e_t`.
fn ar_process(phi: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let burn = 2000;
    let mut x = vec![0.0; n + burn];
    for t in 0..n + burn {
        let mut v = normal.sample(&mut rng);
        for (k, p) in phi.iter().enumerate() {
            if t > k {
                v += p * x[t - 1 - k];
            }
        }
        x[t] = v;
    }
    x.split_off(burn)
}

fn series(x: Vec<f64>) -> FlowSeries {
    FlowSeries::new(x, 0.1)
}

#[test]
fn ar1_recovered_in_prediction_sign() {
    let m = burg_fit(&series(ar_process(&[0.9], 100_000, 1)), 1).unwrap();
    assert!((-0.95..=-0.85).contains(&m.coeffs[0]), "{:?}", m.coeffs);
    assert!((m.gain - 1.0).abs() < 0.02);
}

#[test]
fn ar2_recovered() {
    let phi = [0.5, -0.3];
    let m = burg_fit(&series(ar_process(&phi, 100_000, 2)), 2).unwrap();
    assert!((m.coeffs[0] + phi[0]).abs() < 0.05);
    assert!((m.coeffs[1] + phi[1]).abs() < 0.05);
}

#[test]
fn synthesis_reproduces_lag_one_correlation() {
    let source = series(ar_process(&[0.9], 100_000, 3));
    let m = burg_fit(&source, 1).unwrap();
    let synth = synthesize(&m, 100_000, 0.1, &mut ChaCha8Rng::seed_from_u64(4));
    assert!((synth.autocorrelation(1) - source.autocorrelation(1)).abs() < 0.05);
}

#[test]
fn white_model_std() {
    let m = ARModel::white(0.25, 0.0);
    let s = synthesize(&m, 100_000, 0.1, &mut ChaCha8Rng::seed_from_u64(5));
    assert!((s.std() - 0.25).abs() / 0.25 < 0.02);
}

#[test]
fn calibrated_width_model_hits_measured_std() {
    let reference = reference_measurement(11, 400.0, DEFAULT_INTERVAL, 0.5, 0.12);
    let fitted = burg_fit(&reference, DEFAULT_ORDER).unwrap();
    let m = calibrate_gain(&fitted, MEASURED_WIDTH_STD).unwrap();
    let s = synthesize(&m, 100_000, DEFAULT_INTERVAL, &mut ChaCha8Rng::seed_from_u64(6));
    assert!((s.std() - 0.175).abs() / 0.175 < 0.05, "{}", s.std());

    let doubled = calibrate_gain(&fitted, 2.0 * MEASURED_WIDTH_STD).unwrap();
    let s2 = synthesize(&doubled, 100_000, DEFAULT_INTERVAL, &mut ChaCha8Rng::seed_from_u64(6));
    assert!((s2.std() / s.std() - 2.0).abs() < 1e-9);
}

#[test]
fn fitted_models_are_stable_and_bounded() {
    for (k, phi) in [vec![0.9], vec![0.5, -0.3], vec![1.2, -0.5, 0.1], vec![0.2; 4]].iter().enumerate() {
        let m = burg_fit(&series(ar_process(phi, 20_000, 10 + k as u64)), DEFAULT_ORDER).unwrap();
        let ks = m.reflection_coeffs().expect("stable");
        assert!(ks.iter().all(|k| k.abs() <= 1.0));
        let sd = m.stationary_std().unwrap();
        let s = synthesize(&m, 1_000_000, 0.1, &mut ChaCha8Rng::seed_from_u64(k as u64));
        assert!(s.samples.iter().all(|q| (q - m.mean).abs() < 20.0 * sd));
    }
}

/// Welch-averaged periodogram over 256-sample Hann windows, at bins 1..128.
fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = 256;
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos()).collect();
    let wnorm: f64 = w.iter().map(|v| v * v).sum();
    let mut acc = vec![0.0; n / 2];
    let mut segs = 0;
    let mu = x.iter().sum::<f64>() / x.len() as f64;
    for start in (0..x.len() - n).step_by(n / 2) {
        for (b, slot) in acc.iter_mut().enumerate() {
            let f = (b + 1) as f64 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let v = (x[start + i] - mu) * w[i];
                re += v * (TAU * f * i as f64).cos();
                im -= v * (TAU * f * i as f64).sin();
            }
            *slot += (re * re + im * im) / wnorm;
        }
        segs += 1;
    }
    acc.iter().map(|v| v / segs as f64).collect()
}

fn log_spectral_distance(model: &ARModel, pg: &[f64]) -> f64 {
    let n = 2 * pg.len();
    let sum: f64 = pg
        .iter()
        .enumerate()
        .map(|(b, &p)| {
            let d = 10.0 * (model.psd((b + 1) as f64 / n as f64) / p).log10();
            d * d
        })
        .sum();
    (sum / pg.len() as f64).sqrt()
}

#[test]
fn fitted_spectrum_beats_white_model() {
    let fixtures = [
        ar_process(&[0.9], 20_000, 21),
        ar_process(&[0.5, -0.3], 20_000, 22),
        reference_measurement(23, 2000.0, 0.1, 0.5, 0.175).samples,
    ];
    for x in fixtures {
        let s = series(x);
        let fitted = burg_fit(&s, DEFAULT_ORDER).unwrap();
        let white = burg_fit(&s, 0).unwrap();
        let pg = periodogram(&s.samples);
        let (fit_d, white_d) = (log_spectral_distance(&fitted, &pg), log_spectral_distance(&white, &pg));
        assert!(fit_d < white_d, "{fit_d} vs {white_d}");
    }
}

#[test]
fn sinusoid_resampling_oracle() {
    let amp = 0.05;
    let period = 6.0;
    let f = |x: f64| 0.5 + amp * (TAU * x / period).sin();
    let mut text = String::from("position_mm,width_mm\n");
    for k in 0..=60 {
        let x = k as f64 * 0.5;
        text.push_str(&format!("{x},{}\n", f(x)));
    }
    let s = parse_width_csv(text.as_bytes(), 0.1).unwrap();
    assert_eq!(s.len(), 301);
    let worst = s
        .samples
        .iter()
        .enumerate()
        .map(|(k, v)| (v - f(k as f64 * 0.1)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.02 * amp, "{worst}");
}

#[test]
fn pressure_schedule_statistics() {
    let m = calibrate_gain(&burg_fit(&reference_measurement(31, 400.0, 0.1, 0.5, 0.1), 4).unwrap(), 0.175).unwrap();
    let p = pressure_schedule(&m, 50.0, 100_000, &mut ChaCha8Rng::seed_from_u64(7));
    assert!(p.iter().all(|&v| (0.0..=100.0).contains(&v)));
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    assert!((mean - 50.0).abs() / 50.0 < 0.02, "{mean}");
}

fn stable_coeffs(max_order: usize) -> impl Strategy<Value = Vec<f64>> {
    // draw reflection coefficients and step up, so every model is stable
    prop::collection::vec(-0.8f64..0.8, 1..=max_order).prop_map(|ks| {
        let mut a: Vec<f64> = Vec::new();
        for (m, &k) in ks.iter().enumerate() {
            let prev = a.clone();
            a.push(k);
            for j in 0..m {
                a[j] = prev[j] + k * prev[m - 1 - j];
            }
        }
        a
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fit_of_synthesis_round_trips(coeffs in stable_coeffs(4), seed in any::<u64>()) {
        let model = ARModel::new(coeffs.clone(), 0.1, 0.5);
        let s = synthesize(&model, 100_000, 0.1, &mut ChaCha8Rng::seed_from_u64(seed));
        let fit = burg_fit(&s, coeffs.len()).unwrap();
        for (a, b) in fit.coeffs.iter().zip(&coeffs) {
            prop_assert!((a - b).abs() < 0.05, "{:?} vs {:?}", fit.coeffs, coeffs);
        }
    }
}
