use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use diwsim_core::geom::*;
use glam::{DVec2, DVec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quad(soup: &mut Vec<[DVec3; 3]>, a: DVec3, b: DVec3, c: DVec3, d: DVec3) {
    soup.push([a, b, c]);
    soup.push([a, c, d]);
}

/// Axis-aligned square prism over `[lo, hi]^2 x [0, 1]`, optionally with a
/// square through-hole `[hlo, hhi]^2`.
fn prism(lo: f64, hi: f64, hole: Option<(f64, f64)>) -> Mesh {
    let ring = |a: f64, b: f64, z: f64| {
        [
            DVec3::new(a, a, z),
            DVec3::new(b, a, z),
            DVec3::new(b, b, z),
            DVec3::new(a, b, z),
        ]
    };
    let mut soup = Vec::new();
    let (o0, o1) = (ring(lo, hi, 0.0), ring(lo, hi, 1.0));
    for k in 0..4 {
        let n = (k + 1) % 4;
        quad(&mut soup, o0[k], o0[n], o1[n], o1[k]);
    }
    match hole {
        None => {
            quad(&mut soup, o0[0], o0[3], o0[2], o0[1]);
            quad(&mut soup, o1[0], o1[1], o1[2], o1[3]);
        }
        Some((a, b)) => {
            let (i0, i1) = (ring(a, b, 0.0), ring(a, b, 1.0));
            for k in 0..4 {
                let n = (k + 1) % 4;
                quad(&mut soup, i0[n], i0[k], i1[k], i1[n]);
                quad(&mut soup, o0[n], o0[k], i0[k], i0[n]);
                quad(&mut soup, o1[k], o1[n], i1[n], i1[k]);
            }
        }
    }
    Mesh::from_triangles(&soup)
}

/// Subdivided icosahedron with a vertex at each pole, so that from the first
/// subdivision on an equatorial ring of vertices lies exactly at z = 0.
fn icosphere(radius: f64, levels: usize) -> Mesh {
    let zr = 1.0 / 5f64.sqrt();
    let rr = 2.0 * zr;
    let mut v = vec![DVec3::Z, DVec3::NEG_Z];
    for k in 0..5 {
        let a = TAU * k as f64 / 5.0;
        v.push(DVec3::new(rr * a.cos(), rr * a.sin(), zr));
    }
    for k in 0..5 {
        let a = TAU * (k as f64 + 0.5) / 5.0;
        v.push(DVec3::new(rr * a.cos(), rr * a.sin(), -zr));
    }
    let up = |k: usize| 2 + k % 5;
    let dn = |k: usize| 7 + k % 5;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for k in 0..5 {
        faces.push([0, up(k), up(k + 1)]);
        faces.push([up(k), dn(k), up(k + 1)]);
        faces.push([up(k + 1), dn(k), dn(k + 1)]);
        faces.push([1, dn(k + 1), dn(k)]);
    }
    for _ in 0..levels {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<DVec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(((v[a] + v[b]) * 0.5).normalize());
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        faces = next;
    }
    let soup: Vec<[DVec3; 3]> = faces.iter().map(|f| f.map(|i| v[i] * radius)).collect();
    Mesh::from_triangles(&soup)
}

fn square(c: DVec2, half: f64) -> Polygon {
    Polygon::new(vec![
        c + DVec2::new(-half, -half),
        c + DVec2::new(half, -half),
        c + DVec2::new(half, half),
        c + DVec2::new(-half, half),
    ])
}

fn region(loops: Vec<Polygon>) -> SliceSet {
    let (outer, holes) = loops.into_iter().partition(|l| l.is_ccw());
    SliceSet { outer, holes, z: 0.0 }
}

fn assert_oriented(s: &SliceSet) {
    assert!(s.outer.iter().all(|p| p.signed_area() > 0.0));
    assert!(s.holes.iter().all(|p| p.signed_area() < 0.0));
}

/// Brute-force count of erosion mismatches: `p` belongs to the inset iff
/// it is inside the material and at least `delta` from its boundary.
/// Points within `band` of the exact offset boundary are skipped since the
/// arcs are polygonal.
fn erosion_mismatches(material: &SliceSet, delta: f64, samples: &[DVec2], band: f64) -> usize {
    let inset = region(offset_loops(material, delta));
    samples
        .iter()
        .filter(|&&p| {
            let d = material.boundary_distance(p);
            let signed = if material.contains(p) { d } else { -d };
            if (signed - delta).abs() < band {
                return false;
            }
            (signed > delta) != inset.contains(p)
        })
        .count()
}

fn segment_distance(p: DVec2, a: DVec2, b: DVec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.length_squared()).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn arc_sagitta(delta: f64) -> f64 {
    delta * (1.0 - (PI / ARC_SEGMENTS as f64).cos()) + 1e-9
}

#[test]
fn cube_cross_section() {
    let s = slice_mesh(&prism(0.0, 1.0, None), 0.5).unwrap();
    assert_oriented(&s);
    assert_eq!(s.outer.len(), 1);
    assert!(s.holes.is_empty());
    let (lo, hi) = s.outer[0].bbox();
    assert_eq!((lo, hi), (DVec2::ZERO, DVec2::ONE));
    assert!((s.area() - 1.0).abs() < 1e-12);
}

#[test]
fn holed_cube_cross_section() {
    let s = slice_mesh(&prism(0.0, 3.0, Some((1.0, 2.0))), 0.5).unwrap();
    assert_oriented(&s);
    assert_eq!(s.outer.len(), 1);
    assert_eq!(s.holes.len(), 1);
    let (lo, hi) = s.holes[0].bbox();
    assert_eq!((lo, hi), (DVec2::ONE, DVec2::splat(2.0)));
    assert!((s.area() - 8.0).abs() < 1e-12);
}

#[test]
fn icosphere_equator_lies_on_circle() {
    let mesh = icosphere(5.0, 3);
    let s = slice_mesh(&mesh, 0.0).unwrap();
    assert_oriented(&s);
    assert_eq!(s.outer.len(), 1);
    assert!(s.outer[0].len() >= 40);
    for p in &s.outer[0].points {
        assert!((p.length() - 5.0).abs() < 1e-6, "{p}");
    }
}

#[test]
fn icosphere_off_equator_slices_close() {
    let mesh = icosphere(5.0, 2);
    for z in [-4.3, -1.1, 0.37, 2.9, 4.6] {
        let s = slice_mesh(&mesh, z).unwrap();
        assert_eq!(s.outer.len(), 1, "z={z}");
        let r = (25.0 - z * z).sqrt();
        for p in &s.outer[0].points {
            assert!(p.length() <= r + 1e-9);
        }
    }
}

#[test]
fn binary_stl_round_trip_slices_identically() {
    let mesh = prism(0.0, 3.0, Some((1.0, 2.0)));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frame.stl");
    let mut buf = Vec::new();
    mesh.write_binary(&mut buf).unwrap();
    std::fs::write(&path, &buf).unwrap();
    let back = Mesh::load(&path).unwrap();
    assert_eq!(slice_mesh(&back, 0.5).unwrap(), slice_mesh(&mesh, 0.5).unwrap());
}

#[test]
fn nesting_parity_sets_orientation() {
    let c = DVec2::splat(5.0);
    // feed all three clockwise to make sure nothing depends on input winding
    let raw = vec![square(c, 1.0).reversed(), square(c, 4.0).reversed(), square(c, 2.5).reversed()];
    let s = orient_slices(raw, 0.0).unwrap();
    assert_oriented(&s);
    let mut areas: Vec<f64> = s.loops().map(Polygon::signed_area).collect();
    areas.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    assert_eq!(areas, vec![64.0, -25.0, 4.0]);
}

#[test]
fn l_shape_erosion_matches_disk_oracle() {
    let l = Polygon::new(vec![
        DVec2::new(0.0, 0.0),
        DVec2::new(4.0, 0.0),
        DVec2::new(4.0, 2.0),
        DVec2::new(2.0, 2.0),
        DVec2::new(2.0, 4.0),
        DVec2::new(0.0, 4.0),
    ]);
    let material = region(vec![l]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<DVec2> = (0..10_000)
        .map(|_| DVec2::new(rng.random_range(-0.5..4.5), rng.random_range(-0.5..4.5)))
        .collect();
    assert_eq!(erosion_mismatches(&material, 0.5, &samples, arc_sagitta(0.5)), 0);
    let paths = offset_outline(&material, 0.5).unwrap();
    assert_eq!(paths.len(), 1);
    assert!(paths.iter().all(|p| p.role == PathRole::Outline && p.closed));
}

#[test]
fn annulus_offsets_and_infill() {
    let circle = |r: f64, n: usize| {
        Polygon::new(
            (0..n)
                .map(|k| {
                    let a = TAU * k as f64 / n as f64;
                    DVec2::new(11.0 + r * a.cos(), 11.0 + r * a.sin())
                })
                .collect(),
        )
    };
    let material = orient_slices(vec![circle(5.0, 96), circle(2.0, 48)], 0.0).unwrap();
    let inset = offset_loops(&material, 0.25);
    assert_eq!(inset.len(), 2);
    assert_eq!(inset.iter().filter(|l| l.is_ccw()).count(), 1);

    let w = 0.5;
    let paths = zigzag_infill(&material, w);
    assert!(paths.len() >= 2);
    let target = region(offset_loops(&material, w));
    for p in &paths {
        assert_eq!(p.role, PathRole::Infill);
        for pair in p.waypoints.windows(2) {
            // scanline segments stay inside; connectors only join neighbours
            if pair[0].y == pair[1].y {
                let mid = (pair[0] + pair[1]) * 0.5;
                assert!(target.contains(mid) || target.boundary_distance(mid) < 1e-6, "{mid}");
            } else {
                assert!((pair[1].y - pair[0].y - w).abs() < 1e-9);
            }
        }
    }
    // components share no scanline interval: every interval is covered once
    let intervals: usize = paths.iter().map(|p| p.waypoints.len() / 2).sum();
    let (lo, hi) = target.bbox();
    let mut expected = 0;
    let mut y = lo.y;
    while y <= hi.y + 1e-9 {
        let yy = y.clamp(lo.y + 1e-9 * 1.5, hi.y - 1e-9 * 1.5);
        let mut xs: Vec<f64> = target
            .loops()
            .flat_map(|l| l.edges().collect::<Vec<_>>())
            .filter(|(a, b)| (a.y > yy) != (b.y > yy))
            .map(|(a, b)| a.x + (yy - a.y) / (b.y - a.y) * (b.x - a.x))
            .collect();
        xs.sort_by(f64::total_cmp);
        expected += xs.len() / 2;
        y += w;
    }
    assert_eq!(intervals, expected);
}

#[test]
fn plan_layer_outline_then_infill() {
    let material = region(vec![square(DVec2::splat(5.0), 3.0)]);
    let plan = plan_layer(&material, &PlanConfig::default()).unwrap();
    assert_eq!(plan.outline.len(), 1);
    assert!(!plan.infill.is_empty());
    for p in plan.outline.iter().chain(&plan.infill) {
        for pair in p.waypoints.windows(2) {
            assert!(pair[0].distance(pair[1]) <= 0.315 + 1e-9);
            assert!(pair[0] != pair[1]);
        }
        for (i, n) in p.normals.iter().enumerate() {
            assert!((n.length() - 1.0).abs() < 1e-9);
            assert!(n.dot(p.tangent(i)).abs() < 1e-9);
        }
    }
    let json = serde_json::to_string(&plan).unwrap();
    let back: Plan = serde_json::from_str(&json).unwrap();
    assert_eq!(back, plan);
}

fn star() -> impl Strategy<Value = Polygon> {
    (5usize..12, prop::collection::vec(1.5f64..5.0, 12), 0.0f64..TAU).prop_map(|(n, radii, phase)| {
        Polygon::new(
            (0..n)
                .map(|k| {
                    let a = phase + TAU * k as f64 / n as f64;
                    DVec2::new(11.0, 11.0) + DVec2::new(a.cos(), a.sin()) * radii[k]
                })
                .collect(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn star_erosion_matches_oracle(poly in star(), delta in 0.05f64..1.0, seed in any::<u64>()) {
        let material = region(vec![poly]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<DVec2> = (0..1500)
            .map(|_| DVec2::new(rng.random_range(5.5..16.5), rng.random_range(5.5..16.5)))
            .collect();
        prop_assert_eq!(erosion_mismatches(&material, delta, &samples, arc_sagitta(delta)), 0);
    }

    #[test]
    fn offset_is_monotone(poly in star(), d1 in 0.05f64..0.8, extra in 0.01f64..0.8, seed in any::<u64>()) {
        let material = region(vec![poly]);
        let a = region(offset_loops(&material, d1));
        let b = region(offset_loops(&material, d1 + extra));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let p = DVec2::new(rng.random_range(5.5..16.5), rng.random_range(5.5..16.5));
            if b.contains(p) && a.boundary_distance(p) > 1e-9 {
                prop_assert!(a.contains(p));
            }
        }
    }

    #[test]
    fn resample_keeps_arc_length(
        pts in prop::collection::vec((0.0f64..20.0, 0.0f64..20.0), 2..12),
        ds in 0.05f64..1.5,
        closed in any::<bool>(),
    ) {
        let pts: Vec<DVec2> = pts.into_iter().map(|(x, y)| DVec2::new(x, y)).collect();
        let path = ToolPath::new(pts, PathRole::Outline, closed);
        prop_assume!(path.waypoints.len() >= 2);
        let r = resample_path(&path, ds);
        // samples sit every ds of arc length along the original path
        let n = r.waypoints.len();
        let total = path.length();
        prop_assert!(((n - 2) as f64) * ds < total + 1e-9);
        prop_assert!(((n - 1) as f64) * ds >= total - 1e-9);
        prop_assert!(r.length() <= total + 1e-9);
        prop_assert_eq!(r.waypoints.first(), path.waypoints.first());
        prop_assert_eq!(r.waypoints.last(), path.waypoints.last());
        for w in &r.waypoints {
            let d = path.waypoints.windows(2).map(|s| segment_distance(*w, s[0], s[1])).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-9);
        }
        for pair in r.waypoints.windows(2) {
            prop_assert!(pair[0].distance(pair[1]) <= ds + 1e-9);
        }
        for n in &r.normals {
            prop_assert!((n.length() - 1.0).abs() < 1e-9);
        }
    }
}
