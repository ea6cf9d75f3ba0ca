use std::collections::HashMap;

use glam::DVec2;

use super::{orient_slices, GeomError, Mesh, Polygon, SliceSet};

/// Open chains whose ends are closer than this are joined (mm).
pub const CLOSE_TOLERANCE: f64 = 1e-4;

/// Identity of a plane intersection point. Points that fall on a mesh vertex
/// are keyed by the vertex so that all faces around it agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Vertex(u32),
    Edge(u32, u32),
}

/// Cross-section of `mesh` with the plane at height `z`.
///
/// Vertices lying exactly on the plane count as above it, so every crossing
/// is an edge with one endpoint strictly below. Segments are chained through
/// shared intersection keys; the resulting loops are oriented by nesting.
pub fn slice_mesh(mesh: &Mesh, z: f64) -> Result<SliceSet, GeomError> {
    mesh.validate()?;
    let (lo, hi) = mesh.z_range();
    if mesh.triangles.is_empty() || z < lo || z > hi {
        return Err(GeomError::EmptySlice { z });
    }

    let above = |i: u32| mesh.vertices[i as usize].z >= z;
    let mut points: HashMap<Key, DVec2> = HashMap::new();
    let mut segments: Vec<(Key, Key)> = Vec::new();
    for tri in &mesh.triangles {
        let mut ends = Vec::with_capacity(2);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if above(a) == above(b) {
                continue;
            }
            let (up, down) = if above(a) { (a, b) } else { (b, a) };
            let pu = mesh.vertices[up as usize];
            let pd = mesh.vertices[down as usize];
            let key = if pu.z == z {
                Key::Vertex(up)
            } else {
                Key::Edge(up.min(down), up.max(down))
            };
            points.entry(key).or_insert_with(|| {
                let t = (pu.z - z) / (pu.z - pd.z);
                let p = pu + (pd - pu) * t;
                DVec2::new(p.x, p.y)
            });
            ends.push(key);
        }
        if ends.len() == 2 && ends[0] != ends[1] {
            segments.push((ends[0], ends[1]));
        }
    }
    if segments.is_empty() {
        return Err(GeomError::EmptySlice { z });
    }

    let chains = chain_segments(&segments);
    let mut closed = Vec::new();
    let mut open = Vec::new();
    for chain in chains {
        let pts: Vec<DVec2> = chain.keys.iter().map(|k| points[k]).collect();
        if chain.closed {
            closed.push(pts);
        } else {
            open.push(pts);
        }
    }
    join_open_chains(&mut open, &mut closed, z)?;

    let polygons: Vec<Polygon> = closed
        .into_iter()
        .map(|pts| Polygon::new(pts).simplified(1e-9))
        .filter(|p| p.len() >= 3 && p.signed_area().abs() > 1e-12)
        .collect();
    if polygons.is_empty() {
        return Err(GeomError::EmptySlice { z });
    }
    orient_slices(polygons, z)
}

struct Chain {
    keys: Vec<Key>,
    closed: bool,
}

fn chain_segments(segments: &[(Key, Key)]) -> Vec<Chain> {
    let mut incident: HashMap<Key, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    let next_from = |key: Key, used: &[bool]| -> Option<usize> {
        incident.get(&key)?.iter().copied().find(|&s| !used[s])
    };
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut keys = vec![a, b];
        // walk forward from b, then backward from a
        let mut tail = b;
        while let Some(s) = next_from(tail, &used) {
            used[s] = true;
            let (p, q) = segments[s];
            tail = if p == tail { q } else { p };
            if tail == keys[0] {
                break;
            }
            keys.push(tail);
        }
        let closed = tail == keys[0] && keys.len() > 2;
        if !closed {
            let mut head = a;
            let mut front = Vec::new();
            while let Some(s) = next_from(head, &used) {
                used[s] = true;
                let (p, q) = segments[s];
                head = if p == head { q } else { p };
                front.push(head);
            }
            front.reverse();
            front.extend(keys);
            keys = front;
        }
        chains.push(Chain { keys, closed });
    }
    chains
}

/// Greedily joins open chains whose endpoints lie within the closing
/// tolerance. Anything left open is reported as a broken contour.
fn join_open_chains(open: &mut Vec<Vec<DVec2>>, closed: &mut Vec<Vec<DVec2>>, z: f64) -> Result<(), GeomError> {
    while let Some(mut chain) = open.pop() {
        loop {
            let head = chain[0];
            let tail = *chain.last().unwrap();
            if chain.len() > 2 && head.distance(tail) <= CLOSE_TOLERANCE {
                chain.pop();
                closed.push(chain);
                break;
            }
            let mut best: Option<(usize, bool, bool, f64)> = None;
            for (k, other) in open.iter().enumerate() {
                let o_head = other[0];
                let o_tail = *other.last().unwrap();
                for (append, from_head, d) in [
                    (true, true, tail.distance(o_head)),
                    (true, false, tail.distance(o_tail)),
                    (false, true, head.distance(o_head)),
                    (false, false, head.distance(o_tail)),
                ] {
                    if d <= CLOSE_TOLERANCE && best.is_none_or(|b| d < b.3) {
                        best = Some((k, append, from_head, d));
                    }
                }
            }
            let Some((k, append, from_head, _)) = best else {
                return Err(GeomError::OpenContour { z });
            };
            let mut other = open.swap_remove(k);
            match (append, from_head) {
                (true, true) => chain.extend(other.into_iter().skip(1)),
                (true, false) => {
                    other.reverse();
                    chain.extend(other.into_iter().skip(1));
                }
                (false, true) => {
                    other.reverse();
                    other.pop();
                    other.extend(chain);
                    chain = other;
                }
                (false, false) => {
                    other.pop();
                    other.extend(chain);
                    chain = other;
                }
            }
        }
    }
    Ok(())
}
