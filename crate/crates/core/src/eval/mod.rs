//! Print quality metrics and policy benchmarks.

mod bench;

pub use bench::{bench, flow_mode_name, run_episode, BenchConfig, BenchFailure, BenchReport, BenchRow, HistogramRecord};

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::Heightfield;
use crate::geom::TargetImage;

/// Largest distance the edge search marches from the target boundary (mm).
pub const PROFILE_REACH: f64 = 1.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("EmptyTarget: the target image has no pixels")]
    EmptyTarget,
    #[error("EmptyCanvas: nothing was deposited")]
    EmptyCanvas,
    #[error("GridMismatch: images live on different grids")]
    GridMismatch,
}

/// Pixels of `t` with at least one 4-neighbour outside `t` (the grid border
/// counts as outside), in row-major order.
pub fn boundary_pixels(t: &TargetImage) -> Vec<(usize, usize)> {
    let g = t.grid;
    let mut out = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            if t.get(i, j) != 0 && outside_neighbours(t, i, j).next().is_some() {
                out.push((i, j));
            }
        }
    }
    out
}

fn outside_neighbours(t: &TargetImage, i: usize, j: usize) -> impl Iterator<Item = DVec2> + '_ {
    [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)]
        .into_iter()
        .filter(move |&(di, dj)| t.try_get(i as i64 + di, j as i64 + dj).unwrap_or(0) == 0)
        .map(|(di, dj)| DVec2::new(di as f64, dj as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetReport {
    /// Target pixels left uncovered.
    pub under_px: usize,
    /// Covered pixels outside the target.
    pub over_px: usize,
    /// Outline length `l` in boundary pixels.
    pub outline_px: usize,
    /// `(under + over) / l` in pixels.
    pub offset_px: f64,
    /// The same, in mm.
    pub offset_mm: f64,
}

impl OffsetReport {
    pub fn offset_um(&self) -> f64 {
        1000.0 * self.offset_mm
    }
}

/// Average offset `O = [sum (1 - C) T + sum C (1 - T)] / l`.
pub fn average_offset(c: &TargetImage, t: &TargetImage) -> Result<OffsetReport, EvalError> {
    if c.grid != t.grid {
        return Err(EvalError::GridMismatch);
    }
    let l = boundary_pixels(t).len();
    if l == 0 {
        return Err(EvalError::EmptyTarget);
    }
    let (mut under, mut over) = (0, 0);
    for (&cv, &tv) in c.data.iter().zip(&t.data) {
        match (cv != 0, tv != 0) {
            (false, true) => under += 1,
            (true, false) => over += 1,
            _ => {}
        }
    }
    let offset_px = (under + over) as f64 / l as f64;
    Ok(OffsetReport {
        under_px: under,
        over_px: over,
        outline_px: l,
        offset_px,
        offset_mm: offset_px * t.grid.pitch,
    })
}

/// Signed edge distances binned one pixel wide, split by sign. Zero
/// distances (edge on target) count as over-deposition; the outermost bins
/// hold the censored samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges_um: Vec<f64>,
    pub counts: Vec<usize>,
    pub over: Vec<usize>,
    pub under: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepositionProfile {
    /// One signed distance per boundary pixel of the target (mm), positive
    /// where material reaches past the target edge.
    pub distances: Vec<f64>,
    pub histogram: Histogram,
    pub std_um: f64,
    pub skewness: f64,
}

/// Marches from each boundary pixel of `t` along its outward normal (the
/// mean direction to its outside 4-neighbours) in one-pixel steps. A
/// covered boundary pixel reports `+k` for `k` further covered samples
/// outward; an uncovered one reports `-k` for the `k` samples up to the
/// first covered one inward. Searches stop at [`PROFILE_REACH`] and record
/// `±PROFILE_REACH`.
pub fn deposition_profile(c: &TargetImage, t: &TargetImage) -> Result<DepositionProfile, EvalError> {
    if c.grid != t.grid {
        return Err(EvalError::GridMismatch);
    }
    let boundary = boundary_pixels(t);
    if boundary.is_empty() {
        return Err(EvalError::EmptyTarget);
    }
    if c.data.iter().all(|&v| v == 0) {
        return Err(EvalError::EmptyCanvas);
    }
    let pitch = t.grid.pitch;
    let reach = (PROFILE_REACH / pitch).floor() as usize;
    let covered = |p: DVec2| {
        let (i, j) = (p.x.round() as i64, p.y.round() as i64);
        c.try_get(i, j).unwrap_or(0) != 0
    };
    let distances: Vec<f64> = boundary
        .iter()
        .map(|&(i, j)| {
            let sum: DVec2 = outside_neighbours(t, i, j).sum();
            let n = if sum.length_squared() > 0.0 {
                sum.normalize()
            } else {
                outside_neighbours(t, i, j).next().unwrap()
            };
            let p = DVec2::new(i as f64, j as f64);
            if covered(p) {
                match (1..=reach).find(|&k| !covered(p + n * k as f64)) {
                    Some(k) => (k - 1) as f64 * pitch,
                    None => PROFILE_REACH,
                }
            } else {
                match (1..=reach).find(|&k| covered(p - n * k as f64)) {
                    Some(k) => -(k as f64) * pitch,
                    None => -PROFILE_REACH,
                }
            }
        })
        .collect();
    let histogram = histogram(&distances, pitch);
    let (std, skewness) = std_and_skewness(&distances);
    Ok(DepositionProfile {
        distances,
        histogram,
        std_um: 1000.0 * std,
        skewness,
    })
}

fn histogram(distances: &[f64], pitch: f64) -> Histogram {
    let reach = (PROFILE_REACH / pitch).floor() as i64;
    let bins = (2 * reach + 1) as usize;
    let edges_um = (0..=bins).map(|k| 1000.0 * (k as f64 - reach as f64 - 0.5) * pitch).collect();
    let mut counts = vec![0; bins];
    let mut over = vec![0; bins];
    let mut under = vec![0; bins];
    for &d in distances {
        let k = ((d / pitch).round() as i64 + reach).clamp(0, bins as i64 - 1) as usize;
        counts[k] += 1;
        if d >= 0.0 {
            over[k] += 1;
        } else {
            under[k] += 1;
        }
    }
    Histogram {
        edges_um,
        counts,
        over,
        under,
    }
}

/// Population standard deviation and Fisher skewness `m3 / m2^1.5`
/// (zero when the spread is zero).
pub fn std_and_skewness(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mu).powi(3)).sum::<f64>() / n;
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    (m2.sqrt(), skew)
}

/// Standard deviation of the heightfield over the target, in µm.
pub fn infill_uniformity(height: &Heightfield, t: &TargetImage) -> Result<f64, EvalError> {
    if height.grid != t.grid {
        return Err(EvalError::GridMismatch);
    }
    let h: Vec<f64> = height.data.iter().zip(&t.data).filter(|(_, &tv)| tv != 0).map(|(&h, _)| h).collect();
    if h.is_empty() {
        return Err(EvalError::EmptyTarget);
    }
    Ok(1000.0 * std_and_skewness(&h).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BedGrid;

    fn square(n: usize, lo: usize, hi: usize) -> TargetImage {
        let mut t = TargetImage::new(BedGrid::square(n as f64, n));
        for j in lo..hi {
            for i in lo..hi {
                t.set(i, j, 1);
            }
        }
        t
    }

    #[test]
    fn exact_print_has_zero_offset() {
        let t = square(20, 5, 15);
        let r = average_offset(&t, &t).unwrap();
        assert_eq!(r.offset_px, 0.0);
        assert_eq!(r.outline_px, 36);
        let p = deposition_profile(&t, &t).unwrap();
        assert!(p.distances.iter().all(|&d| d == 0.0));
        assert_eq!(p.std_um, 0.0);
    }

    #[test]
    fn three_extra_pixels() {
        // 100 boundary pixels: a 26 x 26 square
        let t = square(40, 7, 33);
        let mut c = t.clone();
        for i in 0..3 {
            c.set(i, 0, 1);
        }
        let r = average_offset(&c, &t).unwrap();
        assert_eq!(r.outline_px, 100);
        assert!((r.offset_px - 0.03).abs() < 1e-15);
    }

    #[test]
    fn empty_inputs() {
        let t = square(10, 0, 0);
        assert!(matches!(average_offset(&t, &t), Err(EvalError::EmptyTarget)));
        let t = square(10, 2, 8);
        let c = square(10, 0, 0);
        assert!(matches!(deposition_profile(&c, &t), Err(EvalError::EmptyCanvas)));
    }

    #[test]
    fn erosion_reads_negative() {
        let t = square(30, 5, 25);
        let c = square(30, 6, 24);
        let p = deposition_profile(&c, &t).unwrap();
        // straight edges erode one pixel; corners step diagonally
        let px = t.grid.pitch;
        assert!(p.distances.iter().all(|&d| d < 0.0 && d >= -2.0 * px));
        assert_eq!(p.histogram.total(), p.distances.len());
        assert_eq!(p.histogram.under.iter().sum::<usize>(), p.distances.len());
    }
}
