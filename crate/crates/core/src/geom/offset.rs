//! Polygon offsetting with round joins.
//!
//! Every loop is shifted to its left (the material side) by `delta`. Where
//! the shifted edges separate, the gap is bridged by a circular arc about
//! the original vertex; where they overlap, the join runs through the vertex
//! itself. The raw curves self-intersect near sharp features and thin
//! walls, so the result is cleaned up by keeping the boundary of the region
//! with positive total winding.

use std::collections::HashMap;
use std::f64::consts::TAU;

use glam::DVec2;

use super::{GeomError, PathRole, Polygon, SliceSet, ToolPath};

/// Segments used to approximate a full circle in round joins.
pub const ARC_SEGMENTS: usize = 16;

/// Loops with less area than this after cleanup are discarded (mm^2).
const SLIVER_AREA: f64 = 1e-10;

/// Outline toolpaths at `delta` inside the material boundary.
pub fn offset_outline(slices: &SliceSet, delta: f64) -> Result<Vec<ToolPath>, GeomError> {
    if !(delta > 0.0) {
        return Err(GeomError::InvalidPolygon(format!("outline offset must be positive, got {delta}")));
    }
    let loops = offset_loops(slices, delta);
    if loops.is_empty() {
        return Err(GeomError::DegenerateOffset { delta });
    }
    Ok(loops
        .into_iter()
        .map(|l| ToolPath::new(l.points, PathRole::Outline, true))
        .collect())
}

/// Region `{p : disk(p, delta) inside material}` for positive `delta`, or
/// the material grown by `-delta` for negative values. Outer loops come back
/// counter-clockwise and holes clockwise, outers first.
pub fn offset_loops(slices: &SliceSet, delta: f64) -> Vec<Polygon> {
    let raw: Vec<Vec<DVec2>> = slices
        .loops()
        .map(|l| l.simplified(1e-9))
        .filter(|l| l.len() >= 3)
        .map(|l| if delta == 0.0 { l.points } else { raw_offset(&l, delta) })
        .collect();
    let mut loops: Vec<Polygon> = positive_region(&raw)
        .into_iter()
        .map(|p| p.simplified(1e-9))
        .filter(|p| p.len() >= 3 && p.signed_area().abs() > SLIVER_AREA)
        .map(rotate_to_lowest)
        .collect();
    loops.sort_by(|a, b| {
        let ka = (!a.is_ccw(), a.points[0].y, a.points[0].x);
        let kb = (!b.is_ccw(), b.points[0].y, b.points[0].x);
        ka.partial_cmp(&kb).unwrap()
    });
    loops
}

fn rotate_to_lowest(mut p: Polygon) -> Polygon {
    let k = (0..p.len())
        .min_by(|&i, &j| {
            let (a, b) = (p.points[i], p.points[j]);
            (a.y, a.x).partial_cmp(&(b.y, b.x)).unwrap()
        })
        .unwrap_or(0);
    p.points.rotate_left(k);
    p
}

fn raw_offset(poly: &Polygon, delta: f64) -> Vec<DVec2> {
    let pts = &poly.points;
    let n = pts.len();
    let dirs: Vec<DVec2> = (0..n)
        .map(|i| (pts[(i + 1) % n] - pts[i]).normalize())
        .collect();
    let normals: Vec<DVec2> = dirs.iter().map(|d| d.perp()).collect();
    let step = TAU / ARC_SEGMENTS as f64;
    let mut out = Vec::with_capacity(n * 3);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let v = pts[i];
        let a = normals[prev] * delta;
        let b = normals[i] * delta;
        out.push(v + a);
        let turn = dirs[prev].perp_dot(dirs[i]);
        if turn * delta > 1e-12 * delta.abs() {
            out.push(v);
        } else if turn * delta < -1e-12 * delta.abs() || dirs[prev].dot(dirs[i]) < 0.0 {
            let sweep = a.perp_dot(b).atan2(a.dot(b));
            let segs = (sweep.abs() / step).ceil().max(1.0) as usize;
            let r = delta.abs();
            let a0 = a.y.atan2(a.x);
            for k in 1..segs {
                let t = a0 + sweep * k as f64 / segs as f64;
                out.push(v + DVec2::new(t.cos(), t.sin()) * r);
            }
        }
        out.push(v + b);
    }
    out.dedup();
    out
}

type Key = (u64, u64);

fn key(p: DVec2) -> Key {
    // normalise signed zero so that equal points share a key
    ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())
}

/// Boundary loops of `{p : sum of windings of curves around p > 0}`,
/// traced with the region on the left.
fn positive_region(curves: &[Vec<DVec2>]) -> Vec<Polygon> {
    let mut edges: Vec<(DVec2, DVec2)> = Vec::new();
    for c in curves {
        let n = c.len();
        for i in 0..n {
            let (a, b) = (c[i], c[(i + 1) % n]);
            if a != b {
                edges.push((a, b));
            }
        }
    }
    if edges.is_empty() {
        return Vec::new();
    }

    let splits = intersection_splits(&edges);
    let mut pieces: Vec<(DVec2, DVec2)> = Vec::new();
    for (e, &(a, b)) in edges.iter().enumerate() {
        let mut cuts = splits[e].clone();
        cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut last = a;
        for &(_, p) in &cuts {
            if p != last && p != b {
                pieces.push((last, p));
                last = p;
            }
        }
        if last != b {
            pieces.push((last, b));
        }
    }

    let winding = WindingIndex::new(&edges);
    let kept: Vec<(DVec2, DVec2)> = pieces
        .into_iter()
        .filter(|&(a, b)| {
            let d = b - a;
            let len = d.length();
            let m = (a + b) * 0.5;
            let eta = (1e-7_f64).min(0.25 * len);
            let nrm = d.perp() / len;
            winding.at(m + nrm * eta) > 0 && winding.at(m - nrm * eta) <= 0
        })
        .collect();
    link_loops(&kept)
}

/// Split parameters and points for every edge at its crossings with others.
fn intersection_splits(edges: &[(DVec2, DVec2)]) -> Vec<Vec<(f64, DVec2)>> {
    let mut splits = vec![Vec::new(); edges.len()];
    // sweep over x-sorted bounding boxes
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let xmin = |e: &(DVec2, DVec2)| e.0.x.min(e.1.x);
    let xmax = |e: &(DVec2, DVec2)| e.0.x.max(e.1.x);
    order.sort_by(|&i, &j| xmin(&edges[i]).total_cmp(&xmin(&edges[j])));
    for (oi, &i) in order.iter().enumerate() {
        let (p, q) = edges[i];
        let hi = xmax(&edges[i]);
        let (ylo, yhi) = (p.y.min(q.y), p.y.max(q.y));
        for &j in &order[oi + 1..] {
            let (r, s) = edges[j];
            if xmin(&edges[j]) > hi {
                break;
            }
            if r.y.max(s.y) < ylo || r.y.min(s.y) > yhi {
                continue;
            }
            intersect(i, j, p, q, r, s, &mut splits);
        }
    }
    splits
}

fn intersect(i: usize, j: usize, p: DVec2, q: DVec2, r: DVec2, s: DVec2, splits: &mut [Vec<(f64, DVec2)>]) {
    const T_EPS: f64 = 1e-12;
    let d1 = q - p;
    let d2 = s - r;
    let denom = d1.perp_dot(d2);
    let scale = d1.length() * d2.length();
    if denom.abs() <= 1e-14 * scale {
        // parallel: only collinear overlaps matter
        if (r - p).perp_dot(d1).abs() > 1e-12 * d1.length() {
            return;
        }
        let l1 = d1.length_squared();
        let l2 = d2.length_squared();
        for (pt, onto, a, dir, len2) in [(r, i, p, d1, l1), (s, i, p, d1, l1), (p, j, r, d2, l2), (q, j, r, d2, l2)] {
            let t = (pt - a).dot(dir) / len2;
            if t > T_EPS && t < 1.0 - T_EPS {
                splits[onto].push((t, pt));
            }
        }
        return;
    }
    let t = (r - p).perp_dot(d2) / denom;
    let u = (r - p).perp_dot(d1) / denom;
    if !(-T_EPS..=1.0 + T_EPS).contains(&t) || !(-T_EPS..=1.0 + T_EPS).contains(&u) {
        return;
    }
    let t_in = t > T_EPS && t < 1.0 - T_EPS;
    let u_in = u > T_EPS && u < 1.0 - T_EPS;
    match (t_in, u_in) {
        (true, true) => {
            let x = p + d1 * t;
            splits[i].push((t, x));
            splits[j].push((u, x));
        }
        // an endpoint of one edge touches the interior of the other
        (true, false) => splits[i].push((t, if u < 0.5 { r } else { s })),
        (false, true) => splits[j].push((u, if t < 0.5 { p } else { q })),
        (false, false) => {}
    }
}

/// Winding number queries over a fixed edge set, bucketed in y.
struct WindingIndex<'a> {
    edges: &'a [(DVec2, DVec2)],
    y0: f64,
    inv: f64,
    buckets: Vec<Vec<u32>>,
}

impl<'a> WindingIndex<'a> {
    fn new(edges: &'a [(DVec2, DVec2)]) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(a, b) in edges {
            lo = lo.min(a.y.min(b.y));
            hi = hi.max(a.y.max(b.y));
        }
        let nb = (edges.len() / 4).clamp(1, 4096);
        let span = (hi - lo).max(1e-12);
        let inv = nb as f64 / span;
        let mut buckets = vec![Vec::new(); nb];
        for (k, &(a, b)) in edges.iter().enumerate() {
            let b0 = (((a.y.min(b.y) - lo) * inv) as usize).min(nb - 1);
            let b1 = (((a.y.max(b.y) - lo) * inv) as usize).min(nb - 1);
            for bucket in &mut buckets[b0..=b1] {
                bucket.push(k as u32);
            }
        }
        Self {
            edges,
            y0: lo,
            inv,
            buckets,
        }
    }

    fn at(&self, p: DVec2) -> i32 {
        let fb = (p.y - self.y0) * self.inv;
        if fb < 0.0 || fb >= self.buckets.len() as f64 + 1.0 {
            return 0;
        }
        let b = (fb as usize).min(self.buckets.len() - 1);
        let mut w = 0;
        for &k in &self.buckets[b] {
            let (a, c) = self.edges[k as usize];
            if a.y <= p.y {
                if c.y > p.y && (c - a).perp_dot(p - a) > 0.0 {
                    w += 1;
                }
            } else if c.y <= p.y && (c - a).perp_dot(p - a) < 0.0 {
                w -= 1;
            }
        }
        w
    }
}

/// Chains directed pieces into closed loops. At a vertex with several exits
/// the sharpest left turn is taken, which keeps regions that only touch at a
/// point in separate loops.
fn link_loops(pieces: &[(DVec2, DVec2)]) -> Vec<Polygon> {
    let mut outgoing: HashMap<Key, Vec<usize>> = HashMap::new();
    for (k, &(a, _)) in pieces.iter().enumerate() {
        outgoing.entry(key(a)).or_default().push(k);
    }
    let mut used = vec![false; pieces.len()];
    let mut loops = Vec::new();
    for start in 0..pieces.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let start_key = key(pieces[start].0);
        let mut pts = vec![pieces[start].0];
        let mut cur = start;
        loop {
            let (a, b) = pieces[cur];
            if key(b) == start_key {
                break;
            }
            let din = b - a;
            let next = outgoing.get(&key(b)).and_then(|cands| {
                cands
                    .iter()
                    .copied()
                    .filter(|&c| !used[c])
                    .max_by(|&x, &y| {
                        let tx = turn_angle(din, pieces[x].1 - pieces[x].0);
                        let ty = turn_angle(din, pieces[y].1 - pieces[y].0);
                        tx.total_cmp(&ty)
                    })
            });
            let Some(next) = next else {
                // dangling chain from numerical noise
                pts.clear();
                break;
            };
            used[next] = true;
            pts.push(b);
            cur = next;
        }
        if pts.len() >= 3 {
            loops.push(Polygon::new(pts));
        }
    }
    loops
}

fn turn_angle(din: DVec2, dout: DVec2) -> f64 {
    din.perp_dot(dout).atan2(din.dot(dout))
}
