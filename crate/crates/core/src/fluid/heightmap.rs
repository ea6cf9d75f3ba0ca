use glam::Vec3Swizzles;

use super::Particle;
use crate::geom::{BedGrid, Grid2};

/// Material height above the bed per pixel (mm).
pub type Heightfield = Grid2<f64>;

impl Heightfield {
    pub fn max_height(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Lateral footprint of a particle relative to its radius. Wide enough to
/// close the gaps between neighbours of a packed layer.
pub const FOOTPRINT: f64 = 1.5;

/// Top surface of the deposit. Each particle is splatted as a spheroid with
/// vertical semi-axis `r` and lateral semi-axis `FOOTPRINT * r`; each pixel
/// takes the highest `z + r sqrt(1 - d^2 / R^2)` over particles whose
/// lateral distance `d` to the pixel centre is below `R`. Empty pixels are
/// zero.
pub fn heightmap(particles: &[Particle], radius: f64, grid: &BedGrid) -> Heightfield {
    let mut field = Heightfield::new(*grid);
    let lateral = FOOTPRINT * radius;
    let r2 = lateral * lateral;
    let span = lateral / grid.pitch;
    for particle in particles {
        let c = grid.to_pixel(particle.p.xy());
        let i0 = (c.x - span - 0.5).ceil().max(0.0) as usize;
        let j0 = (c.y - span - 0.5).ceil().max(0.0) as usize;
        let i1 = ((c.x + span - 0.5).floor() as i64).min(grid.nx as i64 - 1);
        let j1 = ((c.y + span - 0.5).floor() as i64).min(grid.ny as i64 - 1);
        if i1 < 0 || j1 < 0 {
            continue;
        }
        for j in j0..=j1 as usize {
            for i in i0..=i1 as usize {
                let d2 = grid.center(i, j).distance_squared(particle.p.xy());
                if d2 < r2 {
                    let h = particle.p.z + radius * (1.0 - d2 / r2).sqrt();
                    let slot = &mut field.data[j * grid.nx + i];
                    if h > *slot {
                        *slot = h;
                    }
                }
            }
        }
    }
    field
}
