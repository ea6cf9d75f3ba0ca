use std::f64::consts::PI;

use glam::DVec3;

/// SPH smoothing kernels with support radius `h`: poly6 for density, spiky
/// gradient for constraint gradients.
#[derive(Clone, Copy, Debug)]
pub struct Kernels {
    pub h: f64,
    h2: f64,
    poly6_coeff: f64,
    spiky_coeff: f64,
}

impl Kernels {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            h2: h * h,
            poly6_coeff: 315.0 / (64.0 * PI * h.powi(9)),
            spiky_coeff: -45.0 / (PI * h.powi(6)),
        }
    }

    /// `W(r, h) = 315 / (64 pi h^9) (h^2 - |r|^2)^3` from the squared distance.
    #[inline]
    pub fn poly6(&self, r2: f64) -> f64 {
        if r2 >= self.h2 {
            0.0
        } else {
            let d = self.h2 - r2;
            self.poly6_coeff * d * d * d
        }
    }

    /// `grad W(r, h) = -45 / (pi h^6) (h - |r|)^2 r_hat`.
    ///
    /// `dir` is the unit direction used when `r` is (numerically) zero.
    #[inline]
    pub fn spiky_grad(&self, r: DVec3, dist: f64, dir: DVec3) -> DVec3 {
        if dist >= self.h {
            return DVec3::ZERO;
        }
        let rhat = if dist > 1e-12 { r / dist } else { dir };
        let d = self.h - dist;
        rhat * (self.spiky_coeff * d * d)
    }

    /// Density of an infinite simple-cubic lattice with the given spacing
    /// and unit masses.
    pub fn lattice_density(&self, spacing: f64) -> f64 {
        let reach = (self.h / spacing).ceil() as i64;
        let mut rho = 0.0;
        for i in -reach..=reach {
            for j in -reach..=reach {
                for k in -reach..=reach {
                    let r2 = ((i * i + j * j + k * k) as f64) * spacing * spacing;
                    rho += self.poly6(r2);
                }
            }
        }
        rho
    }
}
