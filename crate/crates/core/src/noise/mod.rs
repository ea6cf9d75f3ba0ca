//! Flow noise: autoregressive models of measured deposition width, fitted
//! with Burg's method and run as generative filters to drive the emitter.
//!
//! Coefficients follow the prediction form
//! `Q_N = -sum_{m=1..M} a_m Q_{N-m} + eps_N`, so an AR(1) process with
//! lag-one correlation 0.9 has `a_1 = -0.9`.

mod burg;
mod csv;
mod schedule;
mod synth;

pub use burg::burg_fit;
pub use csv::{load_width_csv, parse_width_csv, write_width_csv, Pchip, DEFAULT_INTERVAL};
pub use schedule::{pressure_schedule, FlowMode, FlowSchedule};
pub use synth::{calibrate_gain, reference_measurement, synthesize};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default model order.
pub const DEFAULT_ORDER: usize = 8;

/// Standard deviation of deposited width measured on the hardware (mm).
pub const MEASURED_WIDTH_STD: f64 = 0.175;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("order {order} needs more than {len} samples")]
    InsufficientData { order: usize, len: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("positions must be strictly increasing (row {row})")]
    NonMonotonePositions { row: usize },
    #[error("width CSV needs at least 4 rows, found {0}")]
    TooFewRows(usize),
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Uniformly spaced scalar samples along the print path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSeries {
    pub samples: Vec<f64>,
    /// Sample spacing (mm of path).
    pub interval: f64,
}

impl FlowSeries {
    pub fn new(samples: Vec<f64>, interval: f64) -> Self {
        Self { samples, interval }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    pub fn std(&self) -> f64 {
        std_dev(&self.samples)
    }

    /// Sample autocorrelation at `lag`, normalised by the lag-zero value.
    pub fn autocorrelation(&self, lag: usize) -> f64 {
        let mu = self.mean();
        let x = &self.samples;
        let c0: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
        let c: f64 = (lag..x.len()).map(|i| (x[i] - mu) * (x[i - lag] - mu)).sum();
        c / c0
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(x: &[f64]) -> f64 {
    let mu = mean(x);
    (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Autoregressive flow model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ARModel {
    pub order: usize,
    pub coeffs: Vec<f64>,
    /// Innovation standard deviation.
    pub gain: f64,
    pub mean: f64,
    #[serde(default = "default_units")]
    pub units: String,
}

fn default_units() -> String {
    "mm".into()
}

impl ARModel {
    pub fn new(coeffs: Vec<f64>, gain: f64, mean: f64) -> Self {
        Self {
            order: coeffs.len(),
            coeffs,
            gain,
            mean,
            units: default_units(),
        }
    }

    pub fn white(gain: f64, mean: f64) -> Self {
        Self::new(Vec::new(), gain, mean)
    }

    /// Lattice reflection coefficients recovered by the step-down recursion.
    /// Returns `None` if some `|k_m| >= 1`, i.e. the filter is unstable.
    pub fn reflection_coeffs(&self) -> Option<Vec<f64>> {
        let mut a = self.coeffs.clone();
        let mut ks = vec![0.0; a.len()];
        for m in (0..a.len()).rev() {
            let k = a[m];
            if !(k.abs() < 1.0) {
                return None;
            }
            ks[m] = k;
            let denom = 1.0 - k * k;
            let prev: Vec<f64> = (0..m).map(|j| (a[j] - k * a[m - 1 - j]) / denom).collect();
            a.truncate(m);
            a.copy_from_slice(&prev);
        }
        Some(ks)
    }

    pub fn is_stable(&self) -> bool {
        self.reflection_coeffs().is_some()
    }

    /// Standard deviation of the stationary output,
    /// `gain / sqrt(prod (1 - k_m^2))`.
    pub fn stationary_std(&self) -> Option<f64> {
        let ks = self.reflection_coeffs()?;
        let prod: f64 = ks.iter().map(|k| 1.0 - k * k).product();
        Some(self.gain / prod.sqrt())
    }

    /// Power spectral density at normalised frequency `f` (cycles/sample).
    pub fn psd(&self, f: f64) -> f64 {
        let w = std::f64::consts::TAU * f;
        let (mut re, mut im) = (1.0, 0.0);
        for (m, a) in self.coeffs.iter().enumerate() {
            let phase = w * (m + 1) as f64;
            re += a * phase.cos();
            im -= a * phase.sin();
        }
        self.gain * self.gain / (re * re + im * im)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, NoiseError> {
        let m: Self = serde_json::from_str(text)?;
        if m.order != m.coeffs.len() {
            return Err(NoiseError::InvalidParameter(format!(
                "order {} does not match {} coefficients",
                m.order,
                m.coeffs.len()
            )));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, NoiseError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), NoiseError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
