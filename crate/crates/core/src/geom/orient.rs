use glam::DVec2;

use super::{GeomError, Polygon, SliceSet};

/// Assigns roles by nesting depth: even depth is material boundary (turned
/// counter-clockwise), odd depth is a hole (turned clockwise).
pub fn orient_slices(raw: Vec<Polygon>, z: f64) -> Result<SliceSet, GeomError> {
    for (k, p) in raw.iter().enumerate() {
        if p.len() < 3 {
            return Err(GeomError::InvalidPolygon(format!("loop {k} has fewer than three points")));
        }
    }
    for a in 0..raw.len() {
        for b in a + 1..raw.len() {
            if boundaries_cross(&raw[a], &raw[b]) {
                return Err(GeomError::AmbiguousNesting { a, b });
            }
        }
    }
    let mut set = SliceSet {
        z,
        ..SliceSet::default()
    };
    for (k, poly) in raw.iter().enumerate() {
        let probe = interior_probe(poly, &raw, k);
        let depth = raw
            .iter()
            .enumerate()
            .filter(|&(j, other)| j != k && encloses(other, poly, probe))
            .count();
        if depth % 2 == 0 {
            set.outer.push(if poly.is_ccw() { poly.clone() } else { poly.reversed() });
        } else {
            set.holes.push(if poly.is_ccw() { poly.reversed() } else { poly.clone() });
        }
    }
    Ok(set)
}

/// A vertex of `poly` clear of every other boundary, used for containment.
fn interior_probe(poly: &Polygon, all: &[Polygon], k: usize) -> DVec2 {
    poly.points
        .iter()
        .copied()
        .max_by(|&p, &q| {
            let dp = clearance(p, all, k);
            let dq = clearance(q, all, k);
            dp.total_cmp(&dq)
        })
        .unwrap()
}

fn clearance(p: DVec2, all: &[Polygon], k: usize) -> f64 {
    all.iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, o)| o.boundary_distance(p))
        .fold(f64::INFINITY, f64::min)
}

fn encloses(outer: &Polygon, inner: &Polygon, probe: DVec2) -> bool {
    outer.signed_area().abs() > inner.signed_area().abs() && outer.contains(probe)
}

fn boundaries_cross(a: &Polygon, b: &Polygon) -> bool {
    let (alo, ahi) = a.bbox();
    let (blo, bhi) = b.bbox();
    if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
        return false;
    }
    a.edges().any(|(p, q)| b.edges().any(|(r, s)| segments_cross(p, q, r, s)))
}

/// Proper crossing of two segments; touching endpoints do not count.
pub(crate) fn segments_cross(p: DVec2, q: DVec2, r: DVec2, s: DVec2) -> bool {
    let d1 = (q - p).perp_dot(r - p);
    let d2 = (q - p).perp_dot(s - p);
    let d3 = (s - r).perp_dot(p - r);
    let d4 = (s - r).perp_dot(q - r);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(c: f64, half: f64) -> Polygon {
        Polygon::new(vec![
            DVec2::new(c - half, c - half),
            DVec2::new(c + half, c - half),
            DVec2::new(c + half, c + half),
            DVec2::new(c - half, c + half),
        ])
    }

    #[test]
    fn lone_clockwise_square_becomes_ccw() {
        let s = orient_slices(vec![square(0.0, 1.0).reversed()], 0.0).unwrap();
        assert_eq!(s.outer.len(), 1);
        assert!(s.outer[0].is_ccw());
    }

    #[test]
    fn inner_square_becomes_hole() {
        let s = orient_slices(vec![square(0.0, 1.0), square(0.0, 0.5)], 0.0).unwrap();
        assert_eq!(s.outer.len(), 1);
        assert_eq!(s.holes.len(), 1);
        assert!(!s.holes[0].is_ccw());
        assert_eq!(s.area(), 3.0);
    }

    #[test]
    fn overlap_is_ambiguous() {
        let b = Polygon::new(square(0.0, 1.0).points.iter().map(|&p| p + DVec2::splat(1.0)).collect());
        assert!(matches!(
            orient_slices(vec![square(0.0, 1.0), b], 0.0),
            Err(GeomError::AmbiguousNesting { a: 0, b: 1 })
        ));
    }
}
