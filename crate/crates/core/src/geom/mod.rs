//! Planar geometry for a single print layer.
//!
//! A layer starts either as a mesh cross-section ([`slice_mesh`]) or as a
//! polygon file ([`polyjson`]). [`orient_slices`] normalises the winding so
//! that material is always on the left of travel: outer loops are
//! counter-clockwise, holes clockwise. Every later stage relies on that
//! convention, from the outline offset to the observation frame.

mod infill;
mod offset;
mod orient;
pub mod polyjson;
mod procedural;
mod raster;
mod resample;
mod slice;
pub mod stl;

pub use infill::zigzag_infill;
pub use offset::{offset_loops, offset_outline, ARC_SEGMENTS};
pub use orient::orient_slices;
pub use procedural::{procedural_slice, ProceduralConfig};
pub use raster::{rasterize_target, BedGrid, Grid2, TargetImage};
pub use resample::resample_path;
pub use slice::slice_mesh;
pub use stl::Mesh;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("open contour at z={z}: segment chain does not close")]
    OpenContour { z: f64 },
    #[error("plane z={z} does not intersect the mesh")]
    EmptySlice { z: f64 },
    #[error("polygons {a} and {b} overlap; nesting is ambiguous")]
    AmbiguousNesting { a: usize, b: usize },
    #[error("every loop vanishes when offset by {delta} mm")]
    DegenerateOffset { delta: f64 },
    #[error("slice extends outside the bed grid")]
    OutOfBounds,
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("malformed STL: {0}")]
    Stl(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Closed ring of points; the closing edge from last to first is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub points: Vec<DVec2>,
}

impl Polygon {
    pub fn new(points: Vec<DVec2>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Shoelace area, positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            acc += a.perp_dot(b);
        }
        0.5 * acc
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (DVec2, DVec2)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Crossing-number point-in-polygon test.
    pub fn contains(&self, p: DVec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Signed winding number of the ring around `p`.
    pub fn winding(&self, p: DVec2) -> i32 {
        let mut w = 0;
        for (a, b) in self.edges() {
            if a.y <= p.y {
                if b.y > p.y && (b - a).perp_dot(p - a) > 0.0 {
                    w += 1;
                }
            } else if b.y <= p.y && (b - a).perp_dot(p - a) < 0.0 {
                w -= 1;
            }
        }
        w
    }

    /// Distance from `p` to the nearest point on the ring boundary.
    pub fn boundary_distance(&self, p: DVec2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bbox(&self) -> (DVec2, DVec2) {
        bbox_of(&self.points)
    }

    /// Drops repeated and collinear vertices.
    pub fn simplified(&self, eps: f64) -> Self {
        let mut pts: Vec<DVec2> = Vec::with_capacity(self.points.len());
        for &p in &self.points {
            if pts.last().is_none_or(|q| q.distance(p) > eps) {
                pts.push(p);
            }
        }
        while pts.len() > 1 && pts[0].distance(*pts.last().unwrap()) <= eps {
            pts.pop();
        }
        let mut changed = true;
        while changed && pts.len() > 3 {
            changed = false;
            let n = pts.len();
            for i in 0..n {
                let prev = pts[(i + n - 1) % n];
                let cur = pts[i];
                let next = pts[(i + 1) % n];
                let base = next - prev;
                let len = base.length();
                if len <= eps || ((cur - prev).perp_dot(base) / len).abs() <= eps {
                    // only collinear when `cur` lies between its neighbours
                    if (cur - prev).dot(next - cur) >= 0.0 || len <= eps {
                        pts.remove(i);
                        changed = true;
                        break;
                    }
                }
            }
        }
        Self { points: pts }
    }
}

pub(crate) fn bbox_of(points: &[DVec2]) -> (DVec2, DVec2) {
    let mut lo = DVec2::splat(f64::INFINITY);
    let mut hi = DVec2::splat(f64::NEG_INFINITY);
    for &p in points {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo, hi)
}

pub(crate) fn point_segment_distance(p: DVec2, a: DVec2, b: DVec2) -> f64 {
    let ab = b - a;
    let len2 = ab.length_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * t)
}

/// Oriented cross-section of a part: outer boundaries counter-clockwise,
/// holes clockwise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SliceSet {
    pub outer: Vec<Polygon>,
    pub holes: Vec<Polygon>,
    pub z: f64,
}

impl SliceSet {
    pub fn loops(&self) -> impl Iterator<Item = &Polygon> {
        self.outer.iter().chain(self.holes.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    /// Even-odd membership over all loops.
    pub fn contains(&self, p: DVec2) -> bool {
        self.loops().filter(|l| l.contains(p)).count() % 2 == 1
    }

    /// Material area (outer minus holes).
    pub fn area(&self) -> f64 {
        self.loops().map(Polygon::signed_area).sum()
    }

    pub fn boundary_distance(&self, p: DVec2) -> f64 {
        self.loops()
            .map(|l| l.boundary_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bbox(&self) -> (DVec2, DVec2) {
        let pts: Vec<DVec2> = self.loops().flat_map(|l| l.points.iter().copied()).collect();
        bbox_of(&pts)
    }

    pub fn map_points(&self, f: impl Fn(DVec2) -> DVec2) -> Self {
        let map = |l: &Polygon| Polygon::new(l.points.iter().map(|&p| f(p)).collect());
        Self {
            outer: self.outer.iter().map(map).collect(),
            holes: self.holes.iter().map(map).collect(),
            z: self.z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathRole {
    Outline,
    Infill,
}

/// Ordered deposition waypoints. Normals point to the left of travel, which
/// is the material side for outlines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolPath {
    pub role: PathRole,
    pub closed: bool,
    pub waypoints: Vec<DVec2>,
    pub normals: Vec<DVec2>,
}

impl ToolPath {
    /// Builds a path, dropping repeated waypoints and computing normals.
    ///
    /// A closed path carries its starting point again at the end.
    pub fn new(mut waypoints: Vec<DVec2>, role: PathRole, closed: bool) -> Self {
        waypoints.dedup_by(|b, a| a.distance_squared(*b) < 1e-24);
        if closed && waypoints.len() > 1 && waypoints[0] != *waypoints.last().unwrap() {
            waypoints.push(waypoints[0]);
        }
        let normals = compute_normals(&waypoints, closed);
        Self {
            role,
            closed,
            waypoints,
            normals,
        }
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Unit travel direction at waypoint `i`.
    pub fn tangent(&self, i: usize) -> DVec2 {
        let n = self.normals[i];
        DVec2::new(n.y, -n.x)
    }
}

/// Left normals of the central-difference tangent; endpoints of open paths
/// use one-sided differences and closed paths wrap around the seam.
fn compute_normals(pts: &[DVec2], closed: bool) -> Vec<DVec2> {
    let n = pts.len();
    if n < 2 {
        return vec![DVec2::Y; n];
    }
    let seam = closed && n > 2 && pts[0].distance_squared(pts[n - 1]) < 1e-24;
    (0..n)
        .map(|i| {
            let (prev, next) = if seam {
                // the seam point appears twice; skip the duplicate on either side
                let prev = if i == 0 { pts[n - 2] } else { pts[i - 1] };
                let next = if i == n - 1 { pts[1] } else { pts[i + 1] };
                (prev, next)
            } else {
                (pts[i.saturating_sub(1)], pts[(i + 1).min(n - 1)])
            };
            let mut t = (next - prev).normalize_or_zero();
            if t == DVec2::ZERO {
                t = (pts[(i + 1).min(n - 1)] - pts[i]).normalize_or(DVec2::X);
            }
            t.perp()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    /// Deposition width assumed by the planner (mm).
    pub width: f64,
    /// Waypoint spacing along every path (mm).
    pub step: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            width: 0.5,
            step: 0.315,
        }
    }
}

/// Baseline deposition plan for one layer, outline first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub outline: Vec<ToolPath>,
    pub infill: Vec<ToolPath>,
}

/// Outline at half the deposition width and zig-zag infill, both resampled
/// at the configured step.
pub fn plan_layer(slices: &SliceSet, cfg: &PlanConfig) -> Result<Plan, GeomError> {
    let outline = offset_outline(slices, 0.5 * cfg.width)?
        .iter()
        .map(|p| resample_path(p, cfg.step))
        .collect();
    let infill = zigzag_infill(slices, cfg.width)
        .iter()
        .map(|p| resample_path(p, cfg.step))
        .collect();
    Ok(Plan { outline, infill })
}
