use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{synthesize, ARModel};

/// Emitter pressures `P_t = nominal * Q_t / mu` from a synthesized series,
/// clamped to `[0, 2 nominal]`.
pub fn pressure_schedule<R: Rng + ?Sized>(model: &ARModel, nominal: f64, n: usize, rng: &mut R) -> Vec<f64> {
    if model.gain == 0.0 || model.mean.abs() < 1e-300 {
        return vec![nominal; n];
    }
    synthesize(model, n, 1.0, rng)
        .samples
        .iter()
        .map(|q| (nominal * q / model.mean).clamp(0.0, 2.0 * nominal))
        .collect()
}

/// How the emitter rate varies over an episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowMode {
    #[default]
    Constant,
    /// Autoregressive noise; one model sample per `interval` mm of path.
    Noise { model: ARModel, interval: f64 },
    /// `1 + amplitude sin(2 pi t / period)` with `period` in seconds.
    Sine { amplitude: f64, period: f64 },
}

/// Pressure multipliers sampled at a fixed time spacing. Values lie in
/// `[0, 2]` and the emitter rate at time `t` is `nominal * factor(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub factors: Vec<f64>,
    /// Time between samples (s).
    pub spacing: f64,
}

impl FlowSchedule {
    pub fn constant() -> Self {
        Self {
            factors: vec![1.0],
            spacing: f64::INFINITY,
        }
    }

    /// Samples `mode` over `duration` seconds. Noise samples are spaced by
    /// the time the nozzle needs to cover one model interval at `speed`.
    pub fn build<R: Rng + ?Sized>(mode: &FlowMode, duration: f64, speed: f64, rng: &mut R) -> Self {
        match mode {
            FlowMode::Constant => Self::constant(),
            FlowMode::Noise { model, interval } => {
                let spacing = interval / speed.max(1e-9);
                let n = (duration / spacing).ceil().max(1.0) as usize + 1;
                Self {
                    factors: pressure_schedule(model, 1.0, n, rng),
                    spacing,
                }
            }
            FlowMode::Sine { amplitude, period } => {
                let spacing = period / 64.0;
                let n = (duration / spacing).ceil().max(1.0) as usize + 1;
                let factors = (0..n)
                    .map(|k| {
                        let t = k as f64 * spacing;
                        (1.0 + amplitude * (std::f64::consts::TAU * t / period).sin()).clamp(0.0, 2.0)
                    })
                    .collect();
                Self { factors, spacing }
            }
        }
    }

    /// Piecewise-constant factor at time `t`; the last sample holds beyond
    /// the end.
    pub fn factor(&self, t: f64) -> f64 {
        if self.factors.len() == 1 || !self.spacing.is_finite() {
            return self.factors[0];
        }
        let k = (t.max(0.0) / self.spacing).floor() as usize;
        self.factors[k.min(self.factors.len() - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_variance_is_constant() {
        let m = ARModel::new(vec![-0.5], 0.0, 0.5);
        let p = pressure_schedule(&m, 40.0, 100, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(p.iter().all(|&v| v == 40.0));
    }

    #[test]
    fn clamp_and_mean() {
        let m = ARModel::new(vec![-0.9], 0.2 * (1.0f64 - 0.81).sqrt(), 0.5);
        let p = pressure_schedule(&m, 30.0, 100_000, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(p.iter().all(|&v| (0.0..=60.0).contains(&v)));
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 30.0).abs() / 30.0 < 0.02);
    }

    #[test]
    fn sine_schedule() {
        let mode = FlowMode::Sine {
            amplitude: 0.5,
            period: 2.0,
        };
        let s = FlowSchedule::build(&mode, 10.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s.factor(0.0), 1.0);
        assert!((s.factor(0.5) - 1.5).abs() < 1e-12);
        assert!((s.factor(1.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flow_mode_json() {
        let m: FlowMode = serde_json::from_str(r#"{"mode": "sine", "amplitude": 0.2, "period": 4}"#).unwrap();
        assert_eq!(m, FlowMode::Sine { amplitude: 0.2, period: 4.0 });
        let c: FlowMode = serde_json::from_str(r#"{"mode": "constant"}"#).unwrap();
        assert_eq!(c, FlowMode::Constant);
    }
}
