//! Binary particle snapshots and heightfield exports.
//!
//! Snapshot layout (little-endian): the 7-byte magic `DIWSIM1`, a `u64`
//! particle count, then per particle seven `f32`: position, velocity, mass.

use std::io::{self, Read, Write};

use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::{Heightfield, Particle};

pub const SNAPSHOT_MAGIC: &[u8; 7] = b"DIWSIM1";

/// Heightfield quantisation for PGM export: 1 um per least significant bit.
pub const PGM_MM_PER_LSB: f64 = 1e-3;

pub fn write_snapshot<W: Write>(mut out: W, particles: &[Particle]) -> io::Result<()> {
    out.write_all(SNAPSHOT_MAGIC)?;
    out.write_all(&(particles.len() as u64).to_le_bytes())?;
    for p in particles {
        for v in [p.p.x, p.p.y, p.p.z, p.v.x, p.v.y, p.v.z, p.m] {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> io::Result<Vec<Particle>> {
    let mut magic = [0u8; 7];
    input.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad snapshot magic"));
    }
    let mut count = [0u8; 8];
    input.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut particles = Vec::with_capacity(count.min(1 << 20));
    let mut rec = [0u8; 28];
    for _ in 0..count {
        input.read_exact(&mut rec)?;
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        particles.push(Particle {
            p: DVec3::new(f(0), f(1), f(2)),
            v: DVec3::new(f(3), f(4), f(5)),
            m: f(6),
        });
    }
    Ok(particles)
}

/// 16-bit binary PGM, rows written top (max y) first.
pub fn write_pgm16<W: Write>(mut out: W, field: &Heightfield) -> io::Result<()> {
    let g = field.grid;
    write!(out, "P5\n{} {}\n65535\n", g.nx, g.ny)?;
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let q = (field.get(i, j) / PGM_MM_PER_LSB).round().clamp(0.0, 65535.0) as u16;
            out.write_all(&q.to_be_bytes())?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub nx: usize,
    pub ny: usize,
    pub mm_per_pixel: f64,
    pub origin: [f64; 2],
    pub dtype: String,
    pub order: String,
}

/// Raw `f32` little-endian heights in row-major order (row 0 at min y) and
/// the matching JSON sidecar.
pub fn write_raw_f32<W: Write>(mut out: W, field: &Heightfield) -> io::Result<RawSidecar> {
    for &h in &field.data {
        out.write_all(&(h as f32).to_le_bytes())?;
    }
    Ok(RawSidecar {
        nx: field.grid.nx,
        ny: field.grid.ny,
        mm_per_pixel: field.grid.pitch,
        origin: [field.grid.origin.x, field.grid.origin.y],
        dtype: "f32le".into(),
        order: "row-major, row 0 at min y".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BedGrid;

    #[test]
    fn snapshot_round_trip() {
        let particles = vec![
            Particle {
                p: DVec3::new(1.5, 2.25, 0.125),
                v: DVec3::new(-0.5, 0.0, 3.0),
                m: 1.0,
            },
            Particle::at(DVec3::new(10.0, 11.0, 0.07)),
        ];
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &particles).unwrap();
        assert_eq!(buf.len(), 7 + 8 + 2 * 28);
        assert_eq!(&buf[..7], b"DIWSIM1");
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back[0], particles[0]);
        assert!((back[1].p - particles[1].p).length() < 1e-6);
    }

    #[test]
    fn snapshot_rejects_bad_magic() {
        let err = read_snapshot(&b"NOTSIM1\0\0\0\0\0\0\0\0"[..]).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn pgm_quantises_to_microns() {
        let mut field = Heightfield::new(BedGrid::square(1.0, 2));
        field.set(0, 1, 0.2504);
        let mut buf = Vec::new();
        write_pgm16(&mut buf, &field).unwrap();
        let header = b"P5\n2 2\n65535\n";
        assert_eq!(&buf[..header.len()], header);
        // top row first: pixel (0, 1) is the first sample
        assert_eq!(u16::from_be_bytes([buf[header.len()], buf[header.len() + 1]]), 250);
    }
}
