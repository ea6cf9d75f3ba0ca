use glam::DVec2;
use serde::{Deserialize, Serialize};

use super::{GeomError, SliceSet};

/// Regular pixel grid over the print bed. Pixel `(i, j)` covers
/// `origin + [i, i+1) x [j, j+1) * pitch`; rows run along +y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BedGrid {
    pub nx: usize,
    pub ny: usize,
    pub origin: DVec2,
    pub pitch: f64,
}

impl Default for BedGrid {
    /// 512 x 512 pixels over a 22 x 22 mm bed.
    fn default() -> Self {
        Self::square(22.0, 512)
    }
}

impl BedGrid {
    pub fn square(size_mm: f64, pixels: usize) -> Self {
        Self {
            nx: pixels,
            ny: pixels,
            origin: DVec2::ZERO,
            pitch: size_mm / pixels as f64,
        }
    }

    pub fn center(&self, i: usize, j: usize) -> DVec2 {
        self.origin + DVec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.pitch
    }

    pub fn extent(&self) -> DVec2 {
        DVec2::new(self.nx as f64, self.ny as f64) * self.pitch
    }

    pub fn max(&self) -> DVec2 {
        self.origin + self.extent()
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch * self.pitch
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Continuous pixel coordinates, pixel centres at half-integers.
    pub fn to_pixel(&self, p: DVec2) -> DVec2 {
        (p - self.origin) / self.pitch
    }

    pub fn contains(&self, p: DVec2) -> bool {
        let q = self.to_pixel(p);
        q.x >= 0.0 && q.y >= 0.0 && q.x <= self.nx as f64 && q.y <= self.ny as f64
    }
}

/// Row-major image over a [`BedGrid`]: index `j * nx + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2<T> {
    pub grid: BedGrid,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Grid2<T> {
    pub fn new(grid: BedGrid) -> Self {
        Self {
            grid,
            data: vec![T::default(); grid.len()],
        }
    }

    pub fn filled(grid: BedGrid, value: T) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.grid.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let nx = self.grid.nx;
        self.data[j * nx + i] = v;
    }

    /// Value at signed pixel indices, `None` outside the grid.
    pub fn try_get(&self, i: i64, j: i64) -> Option<T> {
        if i < 0 || j < 0 || i >= self.grid.nx as i64 || j >= self.grid.ny as i64 {
            None
        } else {
            Some(self.get(i as usize, j as usize))
        }
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Grid2<U> {
        Grid2 {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Grid2<f64> {
    /// Bilinear interpolation at a world position; zero outside the grid.
    pub fn sample_bilinear(&self, p: DVec2) -> f64 {
        let q = self.grid.to_pixel(p) - DVec2::splat(0.5);
        let i0 = q.x.floor();
        let j0 = q.y.floor();
        let fx = q.x - i0;
        let fy = q.y - j0;
        let (i0, j0) = (i0 as i64, j0 as i64);
        let v = |i, j| self.try_get(i, j).unwrap_or(0.0);
        let a = v(i0, j0) * (1.0 - fx) + v(i0 + 1, j0) * fx;
        let b = v(i0, j0 + 1) * (1.0 - fx) + v(i0 + 1, j0 + 1) * fx;
        a * (1.0 - fy) + b * fy
    }
}

/// Binary target image `T`: 1 where the pixel centre lies in the material.
pub type TargetImage = Grid2<u8>;

impl TargetImage {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn as_f64(&self) -> Grid2<f64> {
        self.map(|v| v as f64)
    }
}

/// Even-odd scanline fill of the slice at pixel centres.
pub fn rasterize_target(slices: &SliceSet, grid: &BedGrid) -> Result<TargetImage, GeomError> {
    let mut img = TargetImage::new(*grid);
    if slices.is_empty() {
        return Ok(img);
    }
    let (lo, hi) = slices.bbox();
    let eps = 1e-9;
    let gmax = grid.max();
    if lo.x < grid.origin.x - eps || lo.y < grid.origin.y - eps || hi.x > gmax.x + eps || hi.y > gmax.y + eps {
        return Err(GeomError::OutOfBounds);
    }
    let edges: Vec<(DVec2, DVec2)> = slices.loops().flat_map(|l| l.edges()).collect();
    let mut xs = Vec::new();
    for j in 0..grid.ny {
        let y = grid.origin.y + (j as f64 + 0.5) * grid.pitch;
        if y < lo.y || y > hi.y {
            continue;
        }
        xs.clear();
        for &(a, b) in &edges {
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // pixel centres strictly inside [x0, x1)
            let i0 = ((pair[0] - grid.origin.x) / grid.pitch - 0.5).ceil().max(0.0) as i64;
            let i1 = ((pair[1] - grid.origin.x) / grid.pitch - 0.5).ceil().min(grid.nx as f64) as i64;
            for i in i0..i1 {
                img.set(i as usize, j, 1);
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;

    fn slice_of(outer: Vec<Polygon>, holes: Vec<Polygon>) -> SliceSet {
        SliceSet { outer, holes, z: 0.0 }
    }

    fn circle(c: DVec2, r: f64, n: usize) -> Polygon {
        Polygon::new(
            (0..n)
                .map(|k| {
                    let t = k as f64 / n as f64 * std::f64::consts::TAU;
                    c + r * DVec2::new(t.cos(), t.sin())
                })
                .collect(),
        )
    }

    #[test]
    fn full_bed_square_is_all_ones() {
        let grid = BedGrid::square(22.0, 64);
        let sq = Polygon::new(vec![
            DVec2::ZERO,
            DVec2::new(22.0, 0.0),
            DVec2::new(22.0, 22.0),
            DVec2::new(0.0, 22.0),
        ]);
        let img = rasterize_target(&slice_of(vec![sq], vec![]), &grid).unwrap();
        assert_eq!(img.count(), 64 * 64);
    }

    #[test]
    fn empty_slice_is_all_zeros() {
        let img = rasterize_target(&SliceSet::default(), &BedGrid::default()).unwrap();
        assert_eq!(img.count(), 0);
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let poly = circle(DVec2::new(21.5, 11.0), 1.0, 32);
        let res = rasterize_target(&slice_of(vec![poly], vec![]), &BedGrid::default());
        assert!(matches!(res, Err(GeomError::OutOfBounds)));
    }

    #[test]
    fn disk_pixel_count_matches_area() {
        let grid = BedGrid::default();
        for r_px in [50.0, 80.0, 120.0] {
            let r = r_px * grid.pitch;
            let poly = circle(DVec2::splat(11.0), r, 720);
            let img = rasterize_target(&slice_of(vec![poly], vec![]), &grid).unwrap();
            let expected = std::f64::consts::PI * r_px * r_px;
            let rel = (img.count() as f64 - expected).abs() / expected;
            assert!(rel < 0.02, "r={r_px}px rel err {rel}");
        }
    }

    #[test]
    fn holes_are_excluded() {
        let grid = BedGrid::square(22.0, 220);
        let outer = circle(DVec2::splat(11.0), 8.0, 256);
        let hole = circle(DVec2::splat(11.0), 4.0, 256).reversed();
        let img = rasterize_target(&slice_of(vec![outer], vec![hole]), &grid).unwrap();
        let center = (110, 110);
        assert_eq!(img.get(center.0, center.1), 0);
        assert_eq!(img.get(110 + 60, 110), 1);
    }

    #[test]
    fn area_estimate_converges_with_resolution() {
        let mut areas = Vec::new();
        for px in [512, 1024] {
            let grid = BedGrid::square(22.0, px);
            let poly = Polygon::new(vec![
                DVec2::new(3.1, 2.7),
                DVec2::new(17.3, 4.9),
                DVec2::new(12.2, 18.4),
                DVec2::new(6.0, 11.0),
            ]);
            let img = rasterize_target(&slice_of(vec![poly], vec![]), &grid).unwrap();
            areas.push(img.count() as f64 * grid.pixel_area());
        }
        assert!((areas[0] - areas[1]).abs() / areas[1] < 0.01);
    }
}
