//! Approximate deposition simulator.
//!
//! Material is a set of particles advanced with position-based dynamics:
//! a density constraint per particle keeps the fluid incompressible, hard
//! inequality constraints keep particles out of the nozzle and above the
//! bed, and XSPH velocity smoothing stands in for viscosity. New material
//! enters through a rectangular emitter at the nozzle orifice at a rate set
//! by the pressure.

mod heightmap;
mod kernel;
mod neighbors;
mod nozzle;
pub mod snapshot;
mod solver;

pub use heightmap::{heightmap, Heightfield, FOOTPRINT};
pub use kernel::Kernels;
pub use neighbors::NeighborGrid;
pub use nozzle::{collide_bed, collide_nozzle, Emitter, Nozzle};
pub use solver::Simulation;

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity in mm/s^2.
pub const GRAVITY: f64 = 9810.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("particle budget of {cap} exceeded")]
    ParticleBudgetExceeded { cap: usize },
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Position (mm).
    pub p: DVec3,
    /// Velocity (mm/s).
    pub v: DVec3,
    pub m: f64,
}

impl Particle {
    pub fn at(p: DVec3) -> Self {
        Self {
            p,
            v: DVec3::ZERO,
            m: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Rest density (mass / mm^3).
    pub rest_density: f64,
    /// SPH smoothing scale (mm).
    pub smoothing: f64,
    /// XSPH viscosity coefficient in [0, 1].
    pub xsph: f64,
    /// Particle radius (mm).
    pub radius: f64,
    /// Fraction of tangential motion removed for particles touching the bed.
    pub bed_friction: f64,
    /// Settling time after the last waypoint (s).
    pub settle_time: f64,
}

impl MaterialParams {
    /// Material whose rest density is that of a simple-cubic packing at
    /// spacing `2 * radius`, with `h = 4 * radius`.
    pub fn from_radius(radius: f64, xsph: f64, bed_friction: f64, settle_time: f64) -> Self {
        let smoothing = 4.0 * radius;
        let rest_density = Kernels::new(smoothing).lattice_density(2.0 * radius);
        Self {
            rest_density,
            smoothing,
            xsph,
            radius,
            bed_friction,
            settle_time,
        }
    }

    pub fn low_viscosity() -> Self {
        Self::from_radius(0.07, 0.02, 0.2, 15.0)
    }

    pub fn medium_viscosity() -> Self {
        Self::from_radius(0.07, 0.1, 0.5, 5.0)
    }

    pub fn high_viscosity() -> Self {
        Self::from_radius(0.07, 0.3, 0.8, 5.0)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "low" => Some(Self::low_viscosity()),
            "medium" | "med" => Some(Self::medium_viscosity()),
            "high" => Some(Self::high_viscosity()),
            _ => None,
        }
    }

    /// Volume one particle occupies at rest (mm^3).
    pub fn particle_volume(&self) -> f64 {
        let s = 2.0 * self.radius;
        s * s * s
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParameter(m.to_string()));
        if !(self.rest_density > 0.0) {
            return bad("rest_density must be positive");
        }
        if !(self.smoothing > 2.0 * self.radius) || !(self.radius > 0.0) {
            return bad("smoothing must exceed twice the particle radius");
        }
        if !(0.0..=1.0).contains(&self.xsph) {
            return bad("xsph must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.bed_friction) {
            return bad("bed_friction must lie in [0, 1]");
        }
        if !(self.settle_time >= 0.0) {
            return bad("settle_time must be non-negative");
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::medium_viscosity()
    }
}

/// Deactivation of settled particles far from the nozzle. Asleep particles
/// keep contributing to their neighbours' densities but are not integrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SleepParams {
    /// Speed below which a particle counts as calm (mm/s).
    pub speed: f64,
    /// Consecutive calm steps before a particle falls asleep.
    pub frames: u32,
    /// Lateral distance from the nozzle inside which everything stays awake (mm).
    pub wake_radius: f64,
    /// Speed of an awake neighbour that wakes a sleeping particle (mm/s).
    pub wake_speed: f64,
}

impl Default for SleepParams {
    fn default() -> Self {
        Self {
            speed: 0.5,
            frames: 24,
            wake_radius: 1.0,
            wake_speed: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Time step (s).
    pub dt: f64,
    /// Jacobi passes of the density constraint per step.
    pub solver_iters: u32,
    /// Constraint-force-mixing relaxation added to the constraint denominator.
    pub cfm_epsilon: f64,
    /// Enforce the density constraint in both directions. When false only
    /// compression is corrected and under-dense free surfaces are left alone.
    pub cohesion: bool,
    pub gravity: f64,
    pub particle_cap: usize,
    pub sleep: Option<SleepParams>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 240.0,
            solver_iters: 4,
            cfm_epsilon: 100.0,
            cohesion: true,
            gravity: GRAVITY,
            particle_cap: 200_000,
            sleep: Some(SleepParams::default()),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::InvalidParameter("dt must be positive".into()));
        }
        if self.solver_iters == 0 {
            return Err(SimError::InvalidParameter("solver_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Axis-aligned bed rectangle; particles are clamped inside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BedBounds {
    pub min: DVec2,
    pub max: DVec2,
}

impl Default for BedBounds {
    fn default() -> Self {
        Self {
            min: DVec2::ZERO,
            max: DVec2::splat(22.0),
        }
    }
}
