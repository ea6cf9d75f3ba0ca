use glam::DVec2;

use super::ToolPath;

/// Waypoints every `ds` of arc length along `path`, starting at its first
/// point. The final point is always kept, so the last spacing may be
/// shorter. Normals are recomputed.
pub fn resample_path(path: &ToolPath, ds: f64) -> ToolPath {
    let pts = &path.waypoints;
    if pts.len() < 2 || !(ds > 0.0) {
        return path.clone();
    }
    let total = path.length();
    let count = (total / ds + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(count + 2);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..=count {
        let s = (k as f64 * ds).min(total);
        while seg + 1 < pts.len() - 1 && seg_start + pts[seg].distance(pts[seg + 1]) < s {
            seg_start += pts[seg].distance(pts[seg + 1]);
            seg += 1;
        }
        let len = pts[seg].distance(pts[seg + 1]);
        let t = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(pts[seg].lerp(pts[seg + 1], t));
    }
    let end = *pts.last().unwrap();
    if out.last().is_none_or(|p: &DVec2| p.distance(end) > 1e-9) {
        out.push(end);
    } else {
        *out.last_mut().unwrap() = end;
    }
    ToolPath::new(out, path.role, path.closed)
}
