use std::f64::consts::TAU;

use glam::DVec2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{orient_slices, plan_layer, PlanConfig, Polygon, SliceSet};

/// Parameters of the random slice generator. Feature sizes (lobes, hole
/// diameters, walls) are drawn between one and five deposition widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProceduralConfig {
    pub plan: PlanConfig,
    /// Centre of the generated part (mm).
    pub center: DVec2,
    /// Range of the mean outer radius (mm).
    pub radius: [f64; 2],
    pub max_holes: usize,
    /// Vertices per full turn of a boundary.
    pub resolution: usize,
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        Self {
            plan: PlanConfig::default(),
            center: DVec2::splat(11.0),
            radius: [2.0, 4.5],
            max_holes: 2,
            resolution: 64,
        }
    }
}

/// Smooth random star-shaped ring: `r(t) = r0 (1 + sum a_k cos(k t + phi_k))`.
/// `roughness` below 0.77 keeps the radius positive, so the ring is simple.
fn blob<R: Rng + ?Sized>(rng: &mut R, center: DVec2, r0: f64, roughness: f64, n: usize) -> Polygon {
    let harmonics: Vec<(f64, f64, f64)> = (2..=5)
        .map(|k| (k as f64, rng.random_range(0.0..roughness) / k as f64, rng.random_range(0.0..TAU)))
        .collect();
    let points = (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            let s: f64 = harmonics.iter().map(|&(k, a, phi)| a * (k * t + phi).cos()).sum();
            center + DVec2::from_angle(t) * r0 * (1.0 + s)
        })
        .collect();
    Polygon::new(points)
}

/// Random printable slice: a lobed outer boundary with up to
/// `max_holes` lobed holes. Candidates that the planner cannot offset are
/// redrawn.
pub fn procedural_slice<R: Rng + ?Sized>(rng: &mut R, cfg: &ProceduralConfig) -> SliceSet {
    let w = cfg.plan.width;
    loop {
        let r0 = rng.random_range(cfg.radius[0]..=cfg.radius[1]);
        let outer = blob(rng, cfg.center, r0, 0.6, cfg.resolution);
        let mut holes: Vec<Polygon> = Vec::new();
        let n_holes = rng.random_range(0..=cfg.max_holes);
        for _ in 0..n_holes * 8 {
            if holes.len() == n_holes {
                break;
            }
            // hole diameter 2w..5w, wall at least 1.5w
            let rh = rng.random_range(w..=2.5 * w);
            let reach = r0 * 0.6;
            let c = cfg.center + DVec2::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach));
            let hole = blob(rng, c, rh, 0.4, cfg.resolution / 2);
            let clear = |p: DVec2| outer.contains(p) && outer.boundary_distance(p) > 1.5 * w;
            let apart = holes
                .iter()
                .all(|h| hole.points.iter().all(|&p| !h.contains(p) && h.boundary_distance(p) > 1.5 * w));
            if hole.points.iter().all(|&p| clear(p)) && apart {
                holes.push(hole);
            }
        }
        let mut loops = vec![outer];
        loops.extend(holes);
        let Ok(slice) = orient_slices(loops, 0.0) else {
            continue;
        };
        if plan_layer(&slice, &cfg.plan).is_ok_and(|p| !p.outline.is_empty()) {
            return slice;
        }
    }
}
