use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ARModel, FlowSeries, NoiseError};

/// Runs the model as a generative filter driven by Gaussian innovations.
///
/// `10 * order` warm-up samples are produced and discarded before the `n`
/// returned ones; the output is shifted by the model mean.
pub fn synthesize<R: Rng + ?Sized>(model: &ARModel, n: usize, interval: f64, rng: &mut R) -> FlowSeries {
    let m = model.coeffs.len();
    let burn = 10 * m;
    let mut hist = vec![0.0; m];
    let mut out = Vec::with_capacity(n);
    let gain = model.gain.max(0.0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for t in 0..burn + n {
        let mut q = gain * normal.sample(rng);
        for (k, a) in model.coeffs.iter().enumerate() {
            // hist[(t - 1 - k) mod m] is Q_{t-1-k}
            q -= a * hist[(t + m - 1 - k) % m];
        }
        if m > 0 {
            hist[t % m] = q;
        }
        if t >= burn {
            out.push(q + model.mean);
        }
    }
    FlowSeries::new(out, interval)
}

/// Rescales the innovation gain so the stationary output has `target_std`.
pub fn calibrate_gain(model: &ARModel, target_std: f64) -> Result<ARModel, NoiseError> {
    if !(target_std > 0.0) {
        return Err(NoiseError::InvalidParameter("target std must be positive".into()));
    }
    let current = model
        .stationary_std()
        .ok_or_else(|| NoiseError::InvalidParameter("model is unstable".into()))?;
    if !(current > 0.0) {
        return Err(NoiseError::ZeroVariance);
    }
    let mut out = model.clone();
    out.gain *= target_std / current;
    Ok(out)
}

/// Stand-in for a measured width record: a seeded AR(2) process plus a slow
/// sinusoidal drift, scaled to `std` about `mean` (mm), sampled every
/// `interval` mm over `length` mm.
pub fn reference_measurement(seed: u64, length: f64, interval: f64, mean: f64, std: f64) -> FlowSeries {
    let n = (length / interval).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // poles at radius 0.95, a slow oscillation of ~40 samples
    let r: f64 = 0.95;
    let theta = std::f64::consts::TAU / 40.0;
    let ar = ARModel::new(vec![-2.0 * r * theta.cos(), r * r], 1.0, 0.0);
    let base = synthesize(&ar, n, interval, &mut rng);
    let period = 25.0;
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let drift: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::TAU * i as f64 * interval / period + phase).sin())
        .collect();
    let base_std = base.std();
    let mixed: Vec<f64> = base
        .samples
        .iter()
        .zip(&drift)
        .map(|(b, d)| b / base_std + 0.5 * d)
        .collect();
    let s = super::std_dev(&mixed);
    let mu = super::mean(&mixed);
    FlowSeries::new(mixed.iter().map(|v| mean + (v - mu) * std / s).collect(), interval)
}
