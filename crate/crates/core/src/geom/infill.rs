use glam::DVec2;

use super::{offset_loops, PathRole, Polygon, SliceSet, ToolPath};

/// Boustrophedon infill of the region `w` inside the material boundary.
///
/// Scanlines run along +X every `w`, starting on the lowest boundary of the
/// inset region. Consecutive scanline intervals that overlap one-to-one are
/// joined into a single serpentine path; wherever the region splits or
/// merges a new path begins.
pub fn zigzag_infill(slices: &SliceSet, w: f64) -> Vec<ToolPath> {
    if !(w > 0.0) {
        return Vec::new();
    }
    let region = offset_loops(slices, w);
    if region.is_empty() {
        return Vec::new();
    }
    let pts: Vec<DVec2> = region.iter().flat_map(|l| l.points.iter().copied()).collect();
    let (lo, hi) = super::bbox_of(&pts);
    let lines = ((hi.y - lo.y) / w + 1e-9).floor() as usize;
    let nudge = 1e-9 * (1.0 + w);

    let rows: Vec<Vec<(f64, f64)>> = (0..=lines)
        .map(|k| {
            let y = lo.y + k as f64 * w;
            scan(&region, y.clamp(lo.y + nudge, hi.y - nudge))
                .into_iter()
                .map(|(a, b)| (a, b))
                .collect()
        })
        .collect();

    struct Open {
        path: usize,
        /// Interval on the previous row.
        span: (f64, f64),
    }
    let mut paths: Vec<(Vec<DVec2>, bool)> = Vec::new();
    let mut open: Vec<Open> = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let y = lo.y + k as f64 * w;
        let overlaps = |a: (f64, f64), b: (f64, f64)| a.0 < b.1 && b.0 < a.1;
        let mut next_open = Vec::with_capacity(row.len());
        for &span in row {
            let parents: Vec<usize> = (0..open.len()).filter(|&p| overlaps(open[p].span, span)).collect();
            let unique = parents.len() == 1 && row.iter().filter(|&&s| overlaps(open[parents[0]].span, s)).count() == 1;
            let path = if unique {
                let id = open[parents[0]].path;
                let rightward = !paths[id].1;
                let (a, b) = if rightward { (span.0, span.1) } else { (span.1, span.0) };
                paths[id].0.push(DVec2::new(a, y));
                paths[id].0.push(DVec2::new(b, y));
                paths[id].1 = rightward;
                id
            } else {
                paths.push((vec![DVec2::new(span.0, y), DVec2::new(span.1, y)], true));
                paths.len() - 1
            };
            next_open.push(Open { path, span });
        }
        open = next_open;
    }
    paths
        .into_iter()
        .map(|(pts, _)| ToolPath::new(pts, PathRole::Infill, false))
        .collect()
}

/// Even-odd intervals of the horizontal line at `y` inside `loops`.
pub(crate) fn scan(loops: &[Polygon], y: f64) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = Vec::new();
    for l in loops {
        for (a, b) in l.edges() {
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.chunks_exact(2)
        .map(|c| (c[0], c[1]))
        .filter(|(a, b)| b - a > 1e-9)
        .collect()
}
