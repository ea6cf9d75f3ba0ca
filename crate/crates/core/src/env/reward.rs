use serde::{Deserialize, Serialize};

use super::obs::ViewFrame;
use super::EnvError;
use crate::fluid::Heightfield;
use crate::geom::TargetImage;

/// Heights at or below this do not count as deposited material (mm).
pub const OCCUPANCY_EPS: f64 = 0.02;

/// Bed state seen by the reward: the heightfield and its occupancy
/// `C = height > eps`, which is derived on every query.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub height: Heightfield,
    pub occupancy_eps: f64,
}

impl Canvas {
    pub fn new(height: Heightfield, occupancy_eps: f64) -> Self {
        Self { height, occupancy_eps }
    }

    #[inline]
    pub fn occupied(&self, k: usize) -> bool {
        self.height.data[k] > self.occupancy_eps
    }

    pub fn occupancy(&self) -> TargetImage {
        self.height.map(|h| (h > self.occupancy_eps) as u8)
    }

    pub fn occupied_count(&self) -> usize {
        (0..self.height.data.len()).filter(|&k| self.occupied(k)).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrintMode {
    #[default]
    Outline,
    Infill,
}

/// Which pixels a reward evaluation looks at.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    Bed,
    /// Pixels whose centre lies in the square view window.
    Window { frame: ViewFrame, view_mm: f64 },
}

/// `R = sum C T - sum C (1 - T)`, minus `std(height | T) / height_scale` in
/// infill mode.
pub fn reward_bed(
    canvas: &Canvas,
    target: &TargetImage,
    mode: PrintMode,
    height_scale: f64,
    region: Region,
) -> Result<f64, EnvError> {
    if canvas.height.grid != target.grid {
        return Err(EnvError::GridMismatch);
    }
    let grid = target.grid;
    let mut inside = 0i64;
    let mut outside = 0i64;
    let mut heights = Vec::new();
    let mut visit = |k: usize| {
        let t = target.data[k] != 0;
        if canvas.occupied(k) {
            if t {
                inside += 1;
            } else {
                outside += 1;
            }
        }
        if t && mode == PrintMode::Infill {
            heights.push(canvas.height.data[k]);
        }
    };
    match region {
        Region::Bed => (0..grid.len()).for_each(&mut visit),
        Region::Window { frame, view_mm } => {
            let reach = 0.5 * view_mm * std::f64::consts::SQRT_2;
            let lo = grid.to_pixel(frame.center - glam::DVec2::splat(reach));
            let hi = grid.to_pixel(frame.center + glam::DVec2::splat(reach));
            let i0 = lo.x.floor().max(0.0) as usize;
            let j0 = lo.y.floor().max(0.0) as usize;
            let i1 = (hi.x.ceil().max(0.0) as usize).min(grid.nx);
            let j1 = (hi.y.ceil().max(0.0) as usize).min(grid.ny);
            for j in j0..j1 {
                for i in i0..i1 {
                    if frame.covers(grid.center(i, j), view_mm) {
                        visit(j * grid.nx + i);
                    }
                }
            }
        }
    }
    let mut r = (inside - outside) as f64;
    if mode == PrintMode::Infill && !heights.is_empty() {
        r -= crate::noise::std_dev(&heights) / height_scale;
    }
    Ok(r)
}
