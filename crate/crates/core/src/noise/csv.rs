use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowSeries, NoiseError};

/// Resampling interval for measured width records (mm).
pub const DEFAULT_INTERVAL: f64 = 0.1;

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    position_mm: f64,
    width_mm: f64,
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![delta[0]; 2];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { x, y, d }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

/// Shape-preserving three-point end slope.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > (3.0 * del0).abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Reads `position_mm,width_mm` rows and resamples them every `interval` mm
/// from the first position through a monotone cubic interpolant.
pub fn parse_width_csv<R: Read>(input: R, interval: f64) -> Result<FlowSeries, NoiseError> {
    if !(interval > 0.0) {
        return Err(NoiseError::InvalidParameter("interval must be positive".into()));
    }
    let mut reader = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_reader(input);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (row, rec) in reader.deserialize::<Row>().enumerate() {
        let rec = rec?;
        if x.last().is_some_and(|&p| rec.position_mm <= p) || !rec.position_mm.is_finite() {
            return Err(NoiseError::NonMonotonePositions { row: row + 1 });
        }
        if !rec.width_mm.is_finite() {
            return Err(NoiseError::InvalidParameter(format!("row {}: non-finite width", row + 1)));
        }
        x.push(rec.position_mm);
        y.push(rec.width_mm);
    }
    if x.len() < 4 {
        return Err(NoiseError::TooFewRows(x.len()));
    }
    let (x0, x1) = (x[0], *x.last().unwrap());
    let interp = Pchip::new(x, y);
    let n = ((x1 - x0) / interval + 1e-9).floor() as usize + 1;
    let samples = (0..n).map(|k| interp.eval(x0 + k as f64 * interval)).collect();
    Ok(FlowSeries::new(samples, interval))
}

pub fn load_width_csv(path: impl AsRef<Path>, interval: f64) -> Result<FlowSeries, NoiseError> {
    parse_width_csv(std::fs::File::open(path)?, interval)
}

pub fn write_width_csv<W: Write>(out: W, series: &FlowSeries) -> Result<(), NoiseError> {
    let mut w = ::csv::Writer::from_writer(out);
    for (k, &width_mm) in series.samples.iter().enumerate() {
        w.serialize(Row {
            position_mm: k as f64 * series.interval,
            width_mm,
        })?;
    }
    w.flush()?;
    Ok(())
}
