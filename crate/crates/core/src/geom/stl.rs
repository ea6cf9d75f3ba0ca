//! STL input, binary and ASCII.
//!
//! Binary layout: 80-byte header, `u32` triangle count, then 50-byte records
//! (normal, three vertices as `f32` triples, `u16` attribute), all
//! little-endian. Files whose first non-blank bytes are `solid` and that
//! contain a `facet` keyword are parsed as ASCII.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use glam::DVec3;

use super::GeomError;

/// Vertices closer than this are merged on load (mm).
pub const WELD_TOLERANCE: f64 = 1e-6;

/// Indexed triangle mesh with welded vertices and no degenerate faces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<DVec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    /// Welds a triangle soup and drops faces with repeated vertices or zero
    /// area.
    pub fn from_triangles(soup: &[[DVec3; 3]]) -> Self {
        let mut index: HashMap<[i64; 3], u32> = HashMap::new();
        let mut mesh = Mesh::default();
        for tri in soup {
            let mut ids = [0u32; 3];
            for (k, &v) in tri.iter().enumerate() {
                let key = quantize(v);
                ids[k] = *index.entry(key).or_insert_with(|| {
                    mesh.vertices.push(v);
                    (mesh.vertices.len() - 1) as u32
                });
            }
            if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
                continue;
            }
            let [a, b, c] = ids.map(|i| mesh.vertices[i as usize]);
            if (b - a).cross(c - a).length_squared() == 0.0 {
                continue;
            }
            mesh.triangles.push(ids);
        }
        mesh
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeomError> {
        let bytes = std::fs::read(path)?;
        Self::parse(&bytes)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, GeomError> {
        if looks_ascii(bytes) {
            let text = std::str::from_utf8(bytes).map_err(|_| GeomError::Stl("ASCII STL is not UTF-8".into()))?;
            parse_ascii(text)
        } else {
            parse_binary(bytes)
        }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let n = self.vertices.len() as u32;
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(GeomError::Stl("triangle index out of range".into()));
        }
        Ok(())
    }

    pub fn z_range(&self) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.z), hi.max(v.z)))
    }

    pub fn triangle(&self, t: usize) -> [DVec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&[0u8; 80])?;
        out.write_all(&(self.triangles.len() as u32).to_le_bytes())?;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(t);
            let n = (b - a).cross(c - a).normalize_or_zero();
            for v in [n, a, b, c] {
                for x in [v.x, v.y, v.z] {
                    out.write_all(&(x as f32).to_le_bytes())?;
                }
            }
            out.write_all(&[0u8; 2])?;
        }
        Ok(())
    }
}

fn quantize(v: DVec3) -> [i64; 3] {
    [v.x, v.y, v.z].map(|x| (x / WELD_TOLERANCE).round() as i64)
}

fn looks_ascii(bytes: &[u8]) -> bool {
    let start = bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(bytes.len());
    if !bytes[start..].starts_with(b"solid") {
        return false;
    }
    // binary files are allowed to start with "solid" in their header
    let probe = &bytes[..bytes.len().min(1024)];
    probe.windows(5).any(|w| w == b"facet")
}

fn parse_binary(bytes: &[u8]) -> Result<Mesh, GeomError> {
    if bytes.len() < 84 {
        return Err(GeomError::Stl("truncated header".into()));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let needed = 84 + count * 50;
    if bytes.len() < needed {
        return Err(GeomError::Stl(format!("expected {count} triangles, file holds fewer")));
    }
    let f = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let soup: Vec<[DVec3; 3]> = (0..count)
        .map(|t| {
            let base = 84 + t * 50 + 12;
            [0, 1, 2].map(|k| {
                let o = base + 12 * k;
                DVec3::new(f(o), f(o + 4), f(o + 8))
            })
        })
        .collect();
    Ok(Mesh::from_triangles(&soup))
}

fn parse_ascii(text: &str) -> Result<Mesh, GeomError> {
    let mut soup = Vec::new();
    let mut current: Vec<DVec3> = Vec::with_capacity(3);
    for (lineno, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("vertex") => {
                let mut xyz = [0.0; 3];
                for x in &mut xyz {
                    *x = tok
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| GeomError::Stl(format!("line {}: bad vertex", lineno + 1)))?;
                }
                current.push(DVec3::from_array(xyz));
            }
            Some("endloop") => {
                if current.len() != 3 {
                    return Err(GeomError::Stl(format!("line {}: facet without three vertices", lineno + 1)));
                }
                soup.push([current[0], current[1], current[2]]);
                current.clear();
            }
            _ => {}
        }
    }
    if soup.is_empty() {
        return Err(GeomError::Stl("no facets".into()));
    }
    Ok(Mesh::from_triangles(&soup))
}
