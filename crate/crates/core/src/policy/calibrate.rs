use glam::DVec2;
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::env::{MAX_VELOCITY, MIN_VELOCITY, OCCUPANCY_EPS};
use crate::fluid::{heightmap, BedBounds, MaterialParams, Nozzle, SimConfig, Simulation};
use crate::geom::BedGrid;

/// Constant printing parameters of the open-loop baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Emitter rate (particles / s).
    pub pressure: f64,
    /// Head velocity (mm/s).
    pub velocity: f64,
}

impl BaselineParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.pressure > 0.0) || !(MIN_VELOCITY..=MAX_VELOCITY).contains(&self.velocity) {
            return Err(PolicyError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Candidate parameters and the test line printed for each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationLattice {
    pub pressures: Vec<f64>,
    pub velocities: Vec<f64>,
    /// Length of the test line (mm).
    pub line_length: f64,
    /// Settling after the line; the material preset's time if unset.
    pub settle: Option<f64>,
    pub seed: u64,
}

impl Default for CalibrationLattice {
    fn default() -> Self {
        Self {
            pressures: log_space(10.0, 200.0, 12),
            velocities: (1..=10).map(|k| 0.2 * k as f64).collect(),
            line_length: 10.0,
            settle: None,
            seed: 0,
        }
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln();
    (0..n).map(|k| lo * (r * k as f64 / (n - 1) as f64).exp()).collect()
}

/// One line print of the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSample {
    pub pressure: f64,
    pub velocity: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: BaselineParams,
    pub width: f64,
    pub target_width: f64,
    pub samples: Vec<LineSample>,
}

/// Prints a straight line along +x through the bed centre at constant
/// pressure and velocity, settles it and returns the mean deposited width:
/// occupied area over the middle 60% of the line divided by that length.
pub fn line_width(
    material: &MaterialParams,
    sim_config: &SimConfig,
    pressure: f64,
    velocity: f64,
    length: f64,
    settle: f64,
    seed: u64,
) -> Result<f64, PolicyError> {
    let grid = BedGrid::default();
    let mid = grid.origin + 0.5 * grid.extent();
    let start = mid - DVec2::new(0.5 * length, 0.0);
    let nozzle = Nozzle {
        center: start,
        ..Default::default()
    };
    let bed = BedBounds {
        min: grid.origin,
        max: grid.max(),
    };
    let mut sim = Simulation::new(*material, *sim_config, nozzle, bed, seed)?;
    sim.emitter.pressure = pressure;
    let dt = sim_config.dt;
    let steps = (length / (velocity * dt) - 1e-9).ceil() as usize;
    for k in 1..=steps {
        sim.nozzle.center = start + DVec2::new(length * k as f64 / steps as f64, 0.0);
        sim.step()?;
    }
    sim.emitter.pressure = 0.0;
    sim.settle(settle)?;
    let field = heightmap(&sim.particles, material.radius, &grid);
    let (x0, x1) = (start.x + 0.2 * length, start.x + 0.8 * length);
    let mut covered = 0usize;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let c = grid.center(i, j);
            if c.x >= x0 && c.x < x1 && field.get(i, j) > OCCUPANCY_EPS {
                covered += 1;
            }
        }
    }
    Ok(covered as f64 * grid.pixel_area() / (x1 - x0))
}

/// Grid search for the (P, v) whose test line comes closest to
/// `target_width`; ties go to the higher velocity.
pub fn calibrate_baseline(
    material: &MaterialParams,
    sim_config: &SimConfig,
    target_width: f64,
    lattice: &CalibrationLattice,
) -> Result<Calibration, PolicyError> {
    let settle = lattice.settle.unwrap_or(material.settle_time);
    let mut samples = Vec::new();
    for &pressure in &lattice.pressures {
        for &velocity in &lattice.velocities {
            let width = line_width(material, sim_config, pressure, velocity, lattice.line_length, settle, lattice.seed)?;
            samples.push(LineSample {
                pressure,
                velocity,
                width,
            });
        }
    }
    let best = samples
        .iter()
        .min_by(|a, b| {
            let ea = (a.width - target_width).abs();
            let eb = (b.width - target_width).abs();
            ea.total_cmp(&eb).then(b.velocity.total_cmp(&a.velocity))
        })
        .copied()
        .ok_or_else(|| PolicyError::InvalidParams("empty calibration lattice".into()))?;
    let error = (best.width - target_width).abs() / target_width;
    if !(error <= 0.2) {
        return Err(PolicyError::CalibrationOutOfRange {
            width: best.width,
            target: target_width,
        });
    }
    Ok(Calibration {
        params: BaselineParams {
            pressure: best.pressure,
            velocity: best.velocity,
        },
        width: best.width,
        target_width,
        samples,
    })
}
