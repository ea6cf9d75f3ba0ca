use glam::{DVec2, DVec3, Vec3Swizzles};
use serde::{Deserialize, Serialize};

use super::{BedBounds, Particle};

/// Clearance left between a projected particle and the nozzle surface (mm).
const NOZZLE_MARGIN: f64 = 1e-6;

/// Flat-tipped cylindrical nozzle occupying `z >= tip_height` inside `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nozzle {
    pub center: DVec2,
    pub tip_height: f64,
    pub radius: f64,
    /// Unit travel direction in the bed plane.
    pub travel_dir: DVec2,
    /// A lifted nozzle neither collides nor emits.
    pub lifted: bool,
}

impl Default for Nozzle {
    fn default() -> Self {
        Self {
            center: DVec2::ZERO,
            tip_height: 0.254,
            radius: 0.2,
            travel_dir: DVec2::X,
            lifted: false,
        }
    }
}

impl Nozzle {
    /// True when `p` is inside the solid nozzle.
    pub fn penetrates(&self, p: DVec3) -> bool {
        !self.lifted && p.z >= self.tip_height && p.xy().distance_squared(self.center) < self.radius * self.radius
    }
}

/// Particle emitter at the nozzle orifice: a square inscribed in the orifice,
/// aligned with the travel direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    /// Half side lengths in the travel frame (along, across) (mm).
    pub half_extent: DVec2,
    /// Emission rate (particles / s).
    pub pressure: f64,
}

impl Emitter {
    pub fn inscribed(nozzle: &Nozzle) -> Self {
        Self {
            half_extent: DVec2::splat(nozzle.radius / std::f64::consts::SQRT_2),
            pressure: 0.0,
        }
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extent.x * self.half_extent.y
    }
}

/// Projects a particle out of the nozzle onto the nearest surface point and
/// removes the velocity component pointing into it.
pub fn collide_nozzle(particle: Particle, nozzle: &Nozzle) -> Particle {
    if !nozzle.penetrates(particle.p) {
        return particle;
    }
    let mut out = particle;
    let lateral = particle.p.xy() - nozzle.center;
    let d = lateral.length();
    let depth_bottom = particle.p.z - nozzle.tip_height;
    let depth_side = nozzle.radius - d;
    let normal = if depth_bottom <= depth_side {
        out.p.z = nozzle.tip_height - NOZZLE_MARGIN;
        DVec3::NEG_Z
    } else {
        let dir = if d > 1e-12 { lateral / d } else { DVec2::X };
        let q = nozzle.center + dir * (nozzle.radius + NOZZLE_MARGIN);
        out.p.x = q.x;
        out.p.y = q.y;
        dir.extend(0.0)
    };
    let vn = out.v.dot(normal);
    if vn < 0.0 {
        out.v -= normal * vn;
    }
    out
}

/// Keeps the particle sphere above the bed and inside its lateral bounds.
pub fn collide_bed(particle: Particle, radius: f64, bed: &BedBounds) -> Particle {
    let mut out = particle;
    if out.p.z < radius {
        out.p.z = radius;
        out.v.z = out.v.z.max(0.0);
    }
    out.p.x = out.p.x.clamp(bed.min.x, bed.max.x);
    out.p.y = out.p.y.clamp(bed.min.y, bed.max.y);
    out
}
