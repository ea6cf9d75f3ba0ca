use std::io::Write;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::fluid::Heightfield;
use crate::geom::{Grid2, ToolPath};

/// Channel order of every observation.
pub const CHANNELS: [&str; 3] = ["bed", "target", "path"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSpec {
    /// Side of the square view window (mm).
    pub view_mm: f64,
    pub pixels: usize,
    /// Side of the occluded square at the image centre (px).
    pub mask_px: usize,
    pub bed: bool,
    pub target: bool,
    pub path: bool,
    /// Height above which material registers in the outline bed channel (mm).
    pub outline_threshold: f64,
}

impl Default for ObservationSpec {
    fn default() -> Self {
        Self {
            view_mm: 3.5,
            pixels: 84,
            mask_px: 12,
            bed: true,
            target: true,
            path: true,
            outline_threshold: 0.5 * 0.254,
        }
    }
}

impl ObservationSpec {
    pub fn pixel_mm(&self) -> f64 {
        self.view_mm / self.pixels as f64
    }

    /// Half-open pixel range of the occlusion mask along either axis.
    pub fn mask_range(&self) -> std::ops::Range<usize> {
        let lo = (self.pixels - self.mask_px) / 2;
        lo..lo + self.mask_px
    }

    /// Position in the head frame of pixel (column `i`, row `j`): columns run
    /// along travel (+x), rows run from the left of travel (+y) at the top.
    pub fn local(&self, i: usize, j: usize) -> DVec2 {
        let s = self.pixel_mm();
        let half = 0.5 * self.pixels as f64;
        DVec2::new((i as f64 + 0.5 - half) * s, (half - j as f64 - 0.5) * s)
    }

    /// Inverse of [`local`](Self::local) in continuous pixel units.
    pub fn to_image(&self, local: DVec2) -> DVec2 {
        let s = self.pixel_mm();
        let half = 0.5 * self.pixels as f64;
        DVec2::new(local.x / s + half - 0.5, half - 0.5 - local.y / s)
    }
}

/// Pose of the view window: centre at the nozzle, +x along travel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewFrame {
    pub center: DVec2,
    pub dir: DVec2,
}

impl ViewFrame {
    pub fn new(center: DVec2, dir: DVec2) -> Self {
        Self {
            center,
            dir: dir.normalize_or(DVec2::X),
        }
    }

    pub fn to_world(&self, local: DVec2) -> DVec2 {
        self.center + self.dir * local.x + self.dir.perp() * local.y
    }

    pub fn to_local(&self, world: DVec2) -> DVec2 {
        let d = world - self.center;
        DVec2::new(d.dot(self.dir), d.dot(self.dir.perp()))
    }

    /// True when `world` lies inside the square window of side `view_mm`.
    pub fn covers(&self, world: DVec2, view_mm: f64) -> bool {
        let l = self.to_local(world);
        l.x.abs() <= 0.5 * view_mm && l.y.abs() <= 0.5 * view_mm
    }
}

/// Three-channel image in channel-major, row-major order, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub pixels: usize,
    pub data: Vec<f32>,
}

impl Observation {
    pub fn zeros(pixels: usize) -> Self {
        Self {
            pixels,
            data: vec![0.0; 3 * pixels * pixels],
        }
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        self.data[(c * self.pixels + j) * self.pixels + i]
    }

    fn set(&mut self, c: usize, i: usize, j: usize, v: f32) {
        let n = self.pixels;
        self.data[(c * n + j) * n + i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.pixels * self.pixels;
        &self.data[c * n..(c + 1) * n]
    }

    /// Little-endian f32 bytes in storage order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(pixels: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 12 * pixels * pixels {
            return None;
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Some(Self { pixels, data })
    }

    /// One channel as an 8-bit greyscale PNG.
    pub fn write_png<W: Write>(&self, c: usize, out: W) -> Result<(), png::EncodingError> {
        let n = self.pixels as u32;
        let mut enc = png::Encoder::new(out, n, n);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let bytes: Vec<u8> = self.channel(c).iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        enc.write_header()?.write_image_data(&bytes)
    }
}

/// How the bed heightfield is mapped into the bed channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BedEncoding {
    /// `height / scale` clamped to [0, 1].
    Height { scale: f64 },
    /// 1 where the height exceeds the threshold.
    Threshold { level: f64 },
}

/// Upcoming part of the plan to draw in the path channel.
pub struct PathView<'a> {
    pub paths: &'a [ToolPath],
    /// Index of the current path and of the next waypoint on it.
    pub path: usize,
    pub waypoint: usize,
}

pub fn render_observation(
    spec: &ObservationSpec,
    frame: &ViewFrame,
    height: &Heightfield,
    encoding: BedEncoding,
    target: &Grid2<f64>,
    upcoming: &PathView,
) -> Observation {
    let n = spec.pixels;
    let mut obs = Observation::zeros(n);
    let mask = spec.mask_range();
    for j in 0..n {
        for i in 0..n {
            let w = frame.to_world(spec.local(i, j));
            if spec.bed && !(mask.contains(&i) && mask.contains(&j)) {
                let h = height.sample_bilinear(w);
                let v = match encoding {
                    BedEncoding::Height { scale } => (h / scale).clamp(0.0, 1.0),
                    BedEncoding::Threshold { level } => (h > level) as u8 as f64,
                };
                obs.set(0, i, j, v as f32);
            }
            if spec.target {
                obs.set(1, i, j, target.sample_bilinear(w).clamp(0.0, 1.0) as f32);
            }
        }
    }
    if spec.path {
        draw_path(spec, frame, upcoming, &mut obs);
    }
    obs
}

/// Rasterises the not-yet-printed waypoints as a polyline of half-width
/// half a pixel, measured from pixel centres.
fn draw_path(spec: &ObservationSpec, frame: &ViewFrame, upcoming: &PathView, obs: &mut Observation) {
    let n = spec.pixels as f64;
    for (k, path) in upcoming.paths.iter().enumerate().skip(upcoming.path) {
        let start = if k == upcoming.path { upcoming.waypoint.saturating_sub(1) } else { 0 };
        let pts: Vec<DVec2> = path.waypoints[start.min(path.waypoints.len())..]
            .iter()
            .map(|&p| spec.to_image(frame.to_local(p)))
            .collect();
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let lo = a.min(b) - DVec2::splat(1.0);
            let hi = a.max(b) + DVec2::splat(1.0);
            if hi.x < 0.0 || hi.y < 0.0 || lo.x > n || lo.y > n {
                continue;
            }
            let i0 = lo.x.floor().max(0.0) as usize;
            let j0 = lo.y.floor().max(0.0) as usize;
            let i1 = (hi.x.ceil() as usize).min(spec.pixels - 1);
            let j1 = (hi.y.ceil() as usize).min(spec.pixels - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = DVec2::new(i as f64, j as f64);
                    if crate::geom::point_segment_distance(c, a, b) <= 0.5 + 1e-9 {
                        obs.set(2, i, j, 1.0);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_and_image_are_inverse() {
        let spec = ObservationSpec::default();
        for (i, j) in [(0, 0), (41, 42), (83, 10)] {
            let q = spec.to_image(spec.local(i, j));
            assert!((q - DVec2::new(i as f64, j as f64)).length() < 1e-9);
        }
        assert_eq!(spec.mask_range(), 36..48);
        // top-left pixel sits behind and to the left of the nozzle
        let l = spec.local(0, 0);
        assert!(l.x < 0.0 && l.y > 0.0);
    }

    #[test]
    fn frame_round_trip() {
        let f = ViewFrame::new(DVec2::new(3.0, 4.0), DVec2::new(0.0, -1.0));
        let w = DVec2::new(2.5, 4.2);
        assert!((f.to_world(f.to_local(w)) - w).length() < 1e-12);
        // travelling -y, the left side is +x in the world
        assert!(f.to_local(DVec2::new(4.0, 4.0)).y > 0.0);
    }

    #[test]
    fn byte_round_trip() {
        let mut o = Observation::zeros(84);
        o.set(2, 5, 7, 0.25);
        let back = Observation::from_le_bytes(84, &o.to_le_bytes()).unwrap();
        assert_eq!(back, o);
        assert_eq!(o.to_le_bytes().len(), 4 * 21168);
    }
}
