use diwsim_core::env::*;
use diwsim_core::fluid::heightmap;
use diwsim_core::geom::{procedural_slice, PathRole, Polygon, ProceduralConfig, SliceSet, ToolPath};
use glam::DVec2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rect(lo: DVec2, hi: DVec2) -> Polygon {
    Polygon::new(vec![lo, DVec2::new(hi.x, lo.y), hi, DVec2::new(lo.x, hi.y)])
}

fn square_slice(lo: f64, hi: f64) -> SliceSet {
    SliceSet {
        outer: vec![rect(DVec2::splat(lo), DVec2::splat(hi))],
        holes: vec![],
        z: 0.0,
    }
}

fn quick_config() -> EpisodeConfig {
    EpisodeConfig {
        settle_time_end: Some(0.25),
        ..Default::default()
    }
}

fn run_constant(env: &mut Env, action: Action) -> Vec<StepResult> {
    let mut out = Vec::new();
    while !env.is_done() {
        out.push(env.step(action).unwrap());
    }
    out
}

#[test]
fn reset_observation_contract() {
    let slice = square_slice(8.0, 12.0);
    let (env, obs) = Env::reset(slice.clone(), quick_config(), 5).unwrap();
    assert_eq!(obs.data.len(), 84 * 84 * 3);
    assert!(obs.data.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(env.initial_reward(), 0.0);
    // the head sits on the outline with the part to its left (top half)
    let target = obs.channel(1);
    let top: f32 = target[..42 * 84].iter().sum();
    let bottom: f32 = target[42 * 84..].iter().sum();
    assert!(top > 10.0 * bottom.max(1.0), "{top} {bottom}");
    assert!(obs.channel(2).iter().any(|&v| v == 1.0));

    let (_, again) = Env::reset(slice.clone(), quick_config(), 5).unwrap();
    assert_eq!(obs, again);

    let mut cfg = quick_config();
    cfg.observation.target = false;
    let (_, blind) = Env::reset(slice, cfg, 5).unwrap();
    assert!(blind.channel(1).iter().all(|&v| v == 0.0));
}

#[test]
fn unprintable_slice_is_reported() {
    let err = Env::new(square_slice(10.0, 10.3), quick_config(), 0).err().unwrap();
    assert!(matches!(err, EnvError::UnprintableSlice(_)));
}

#[test]
fn privileged_rewards_telescope() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let slice = procedural_slice(&mut rng, &ProceduralConfig::default());
    let mut env = Env::new(slice, quick_config(), 2).unwrap();
    let mut total = 0.0;
    let mut k = 0;
    while !env.is_done() {
        // vary the action so the episode is not trivial
        let a = Action::new(((k * 7) % 5) as f64 / 2.0 - 1.0, ((k * 3) % 7) as f64 / 3.0 - 1.0);
        total += env.step(a).unwrap().reward;
        k += 1;
    }
    assert!(env.bed_reward() > 0.0);
    assert!((total - (env.bed_reward() - env.initial_reward())).abs() < 1e-9);
    assert!(matches!(env.step(Action::new(0.0, 0.0)), Err(EnvError::EpisodeFinished)));
}

#[test]
fn zero_pressure_deposits_nothing() {
    let mut cfg = quick_config();
    cfg.pressure = 0.0;
    let mut env = Env::new(square_slice(9.0, 12.0), cfg, 3).unwrap();
    for r in run_constant(&mut env, Action::new(1.0, 0.0)) {
        assert!(r.reward <= 0.0);
        assert_eq!(r.info.bed_reward, 0.0);
    }
    assert_eq!(env.canvas().occupied_count(), 0);
}

#[test]
fn delayed_rewards_pay_at_the_end() {
    let mut cfg = quick_config();
    cfg.reward = RewardMode::Delayed;
    let mut env = Env::new(square_slice(9.0, 12.0), cfg, 3).unwrap();
    let results = run_constant(&mut env, Action::new(0.5, 0.0));
    let (last, rest) = results.split_last().unwrap();
    assert!(rest.iter().all(|r| r.reward == 0.0));
    assert!(last.done);
    assert_eq!(last.reward, env.bed_reward());
    assert!(last.reward > 0.0);
}

#[test]
fn progress_and_done_flag() {
    let mut env = Env::new(square_slice(9.0, 12.0), quick_config(), 4).unwrap();
    let n = env.total_steps();
    let results = run_constant(&mut env, Action::new(1.0, 0.0));
    assert_eq!(results.len(), n);
    assert!(results[..n - 1].iter().all(|r| !r.done));
    assert_eq!(results[n - 1].info.progress, 1.0);
    assert_eq!(env.trace().len(), n);
}

fn line_path(start: DVec2, dir: DVec2, steps: usize) -> ToolPath {
    let pts = (0..=steps).map(|k| start + dir * (0.315 * k as f64)).collect();
    ToolPath::new(pts, PathRole::Outline, false)
}

#[test]
fn immediate_matches_privileged_inside_the_window() {
    let slice = square_slice(10.0, 12.0);
    let path = line_path(DVec2::new(10.5, 10.25), DVec2::X, 3);
    let rewards = |mode: RewardMode| -> Vec<f64> {
        let mut cfg = quick_config();
        cfg.reward = mode;
        let mut env = Env::from_paths(slice.clone(), vec![path.clone()], cfg, 11).unwrap();
        run_constant(&mut env, Action::new(0.0, 0.0)).iter().map(|r| r.reward).collect()
    };
    let a = rewards(RewardMode::Privileged);
    let b = rewards(RewardMode::Immediate);
    assert!(a.iter().any(|&r| r > 0.0));
    assert_eq!(a, b);
}

#[test]
fn straight_print_is_rotation_invariant() {
    let c = DVec2::splat(11.0);
    let mut observations = Vec::new();
    for dir in [DVec2::X, DVec2::Y, DVec2::NEG_X, DVec2::NEG_Y] {
        // a bar to the left of travel, rotated with the direction
        let side = dir.perp();
        let corners = [c - dir * 1.0, c + dir * 4.0, c + dir * 4.0 + side * 1.0, c - dir * 1.0 + side * 1.0];
        let lo = corners.iter().copied().reduce(DVec2::min).unwrap();
        let hi = corners.iter().copied().reduce(DVec2::max).unwrap();
        let slice = SliceSet {
            outer: vec![rect(lo, hi)],
            holes: vec![],
            z: 0.0,
        };
        let mut env = Env::from_paths(slice, vec![line_path(c, dir, 8)], quick_config(), 21).unwrap();
        let mut obs = Vec::new();
        for _ in 0..4 {
            obs.push(env.step(Action::new(0.3, 0.2)).unwrap().obs);
        }
        observations.push(obs);
    }
    for other in &observations[1..] {
        for (a, b) in observations[0].iter().zip(other) {
            let worst = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max);
            assert!(worst <= 1e-3, "{worst}");
        }
    }
}

#[test]
fn holes_and_outers_share_the_image_half() {
    let outer = rect(DVec2::splat(7.0), DVec2::splat(15.0));
    let hole = rect(DVec2::splat(10.0), DVec2::splat(12.0)).reversed();
    let slice = SliceSet {
        outer: vec![outer],
        holes: vec![hole],
        z: 0.0,
    };
    let plan = diwsim_core::geom::plan_layer(&slice, &Default::default()).unwrap();
    assert_eq!(plan.outline.len(), 2);
    for path in plan.outline {
        let (_, obs) = Env::reset_with_paths(slice.clone(), path, quick_config());
        let t = obs.channel(1);
        let top: f32 = t[..42 * 84].iter().sum();
        let bottom: f32 = t[42 * 84..].iter().sum();
        assert!(top > bottom, "{top} {bottom}");
    }
}

trait ResetWithPaths {
    fn reset_with_paths(slice: SliceSet, path: ToolPath, cfg: EpisodeConfig) -> (Env, Observation);
}

impl ResetWithPaths for Env {
    fn reset_with_paths(slice: SliceSet, path: ToolPath, cfg: EpisodeConfig) -> (Env, Observation) {
        let env = Env::from_paths(slice, vec![path], cfg, 0).unwrap();
        let obs = env.observe();
        (env, obs)
    }
}

#[test]
fn observation_mask_and_channels() {
    let mut env = Env::new(square_slice(8.0, 12.0), quick_config(), 6).unwrap();
    let mut last = None;
    for _ in 0..6 {
        last = Some(env.step(Action::new(-0.5, 0.0)).unwrap().obs);
    }
    let obs = last.unwrap();
    let bed = obs.channel(0);
    assert!(bed.iter().any(|&v| v > 0.0));
    for j in 36..48 {
        for i in 36..48 {
            assert_eq!(bed[j * 84 + i], 0.0);
        }
    }
    // material lies behind the nozzle (left half of the image)
    let behind: f32 = (0..84).flat_map(|j| (0..36).map(move |i| (i, j))).map(|(i, j)| bed[j * 84 + i]).sum();
    let ahead: f32 = (0..84).flat_map(|j| (48..84).map(move |i| (i, j))).map(|(i, j)| bed[j * 84 + i]).sum();
    assert!(behind > ahead);
}

#[test]
fn trace_is_reproducible() {
    let run = || {
        let mut env = Env::new(square_slice(9.0, 12.0), quick_config(), 8).unwrap();
        run_constant(&mut env, Action::new(0.2, -0.3));
        let mut buf = Vec::new();
        env.write_trace(&mut buf).unwrap();
        buf
    };
    let a = run();
    assert_eq!(a, run());
    let first: serde_json::Value = serde_json::from_slice(a.split(|&b| b == b'\n').next().unwrap()).unwrap();
    for key in ["t", "action", "reward", "head", "P"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

#[test]
fn action_modes_pin_components() {
    let slice = square_slice(10.0, 12.0);
    let path = line_path(DVec2::new(10.5, 10.25), DVec2::X, 2);
    let mut cfg = quick_config();
    cfg.action_mode = ActionMode::VelocityOnly;
    let mut env = Env::from_paths(slice.clone(), vec![path.clone()], cfg.clone(), 0).unwrap();
    env.step(Action::new(1.0, 1.0)).unwrap();
    assert!((env.head() - path.waypoints[1]).length() < 1e-12);

    cfg.action_mode = ActionMode::OffsetOnly;
    let mut env = Env::from_paths(slice, vec![path.clone()], cfg, 0).unwrap();
    let t0 = env.sim().time;
    env.step(Action::new(1.0, 1.0)).unwrap();
    assert!((env.head() - (path.waypoints[1] + path.normals[1] * MAX_OFFSET)).length() < 1e-12);
    // pinned at 1 mm/s: the step takes at least the straight travel time
    let elapsed = env.sim().time - t0;
    let dist = path.waypoints[0].distance(path.waypoints[1] + path.normals[1] * MAX_OFFSET);
    assert!((elapsed - dist / PINNED_VELOCITY).abs() <= env.sim().config.dt + 1e-9);
}

#[test]
fn settle_conserves_material() {
    let path = line_path(DVec2::new(10.0, 11.0), DVec2::X, 3);
    let mut env = Env::from_paths(square_slice(9.0, 13.0), vec![path], quick_config(), 0).unwrap();
    for _ in 0..2 {
        env.step(Action::new(-1.0, 0.0)).unwrap();
    }
    let n = env.sim().len();
    let before = env.canvas().clone();
    env.settle(0.0).unwrap();
    assert_eq!(env.canvas(), &before);
    env.settle(0.5).unwrap();
    assert_eq!(env.sim().len(), n);
    let grid = env.config().grid;
    assert_eq!(heightmap(&env.sim().particles, env.config().material.radius, &grid), env.canvas().height);
}
