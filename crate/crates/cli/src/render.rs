//! PNG previews. Bed images are flipped so +y points up.

use std::io::BufWriter;
use std::path::Path;

use diwsim_core::env::Observation;
use diwsim_core::geom::{PathRole, Plan, TargetImage};

pub struct Rgb {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; 3 * width * height],
        }
    }

    pub fn put(&mut self, x: usize, y: usize, c: [u8; 3]) {
        if x < self.width && y < self.height {
            let k = 3 * (y * self.width + x);
            self.data[k..k + 3].copy_from_slice(&c);
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = BufWriter::new(std::fs::File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(std::io::Error::other)?;
        w.write_image_data(&self.data).map_err(std::io::Error::other)?;
        w.finish().map_err(std::io::Error::other)
    }
}

/// Target in grey with outline paths in red and infill in blue.
pub fn plan_preview(target: &TargetImage, plan: &Plan) -> Rgb {
    let g = target.grid;
    let mut img = Rgb::new(g.nx, g.ny);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = if target.get(i, j) != 0 { [90, 90, 90] } else { [20, 20, 20] };
            img.put(i, g.ny - 1 - j, c);
        }
    }
    for path in plan.outline.iter().chain(&plan.infill) {
        let colour = match path.role {
            PathRole::Outline => [230, 60, 40],
            PathRole::Infill => [60, 120, 230],
        };
        for w in path.waypoints.windows(2) {
            let (a, b) = (g.to_pixel(w[0]), g.to_pixel(w[1]));
            let n = (b - a).length().ceil().max(1.0) as usize * 2;
            for k in 0..=n {
                let p = a + (b - a) * (k as f64 / n as f64);
                if p.x >= 0.0 && p.y >= 0.0 && (p.y as usize) < g.ny {
                    img.put(p.x as usize, g.ny - 1 - p.y as usize, colour);
                }
            }
        }
    }
    img
}

/// Final print against the target: deposited inside in white, outside in
/// red, uncovered target in blue.
pub fn coverage_image(canvas: &TargetImage, target: &TargetImage) -> Rgb {
    let g = target.grid;
    let mut img = Rgb::new(g.nx, g.ny);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = match (canvas.get(i, j) != 0, target.get(i, j) != 0) {
                (true, true) => [235, 235, 235],
                (true, false) => [220, 50, 40],
                (false, true) => [40, 70, 200],
                (false, false) => [0, 0, 0],
            };
            img.put(i, g.ny - 1 - j, c);
        }
    }
    img
}

/// Observation channels bed, target, path as red, green, blue.
pub fn observation_image(obs: &Observation) -> Rgb {
    let n = obs.pixels;
    let mut img = Rgb::new(n, n);
    for j in 0..n {
        for i in 0..n {
            let px = |c| (obs.get(c, i, j).clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put(i, j, [px(0), px(1), px(2)]);
        }
    }
    img
}
