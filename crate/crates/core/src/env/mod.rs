//! The printing MDP.
//!
//! One episode prints every path of one role (outline or infill) of a slice.
//! Each step advances the head to the next baseline waypoint, displaced along
//! the waypoint normal by the commanded offset, at the commanded velocity.
//! Steps are therefore fixed in path distance rather than time.

mod obs;
mod reward;

pub use obs::{render_observation, BedEncoding, Observation, ObservationSpec, PathView, ViewFrame, CHANNELS};
pub use reward::{reward_bed, Canvas, PrintMode, Region, OCCUPANCY_EPS};

use std::io::Write;

use glam::DVec2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::{heightmap, BedBounds, MaterialParams, Nozzle, SimConfig, SimError, Simulation};
use crate::geom::{plan_layer, rasterize_target, BedGrid, GeomError, Grid2, PlanConfig, SliceSet, TargetImage, ToolPath};
use crate::noise::{FlowMode, FlowSchedule};

pub const MIN_VELOCITY: f64 = 0.2;
pub const MAX_VELOCITY: f64 = 2.0;
/// Largest displacement from the baseline waypoint (mm).
pub const MAX_OFFSET: f64 = 0.315;
/// Velocity used when only the offset is controlled (mm/s).
pub const PINNED_VELOCITY: f64 = 1.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("slice cannot be printed: {0}")]
    UnprintableSlice(GeomError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("canvas and target grids differ")]
    GridMismatch,
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
}

/// Normalised action, both components in [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub velocity: f64,
    pub offset: f64,
}

impl Action {
    pub fn new(velocity: f64, offset: f64) -> Self {
        Self { velocity, offset }
    }

    /// Clamps to the unit box; non-finite components become 0. The flag
    /// reports whether anything changed.
    pub fn clamped(self) -> (Self, bool) {
        let fix = |x: f64| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 };
        let out = Self::new(fix(self.velocity), fix(self.offset));
        (out, out != self)
    }

    /// Head velocity in mm/s.
    pub fn velocity_mm_s(&self) -> f64 {
        velocity_from_norm(self.velocity)
    }

    /// Offset from the baseline waypoint in mm.
    pub fn offset_mm(&self) -> f64 {
        self.offset * MAX_OFFSET
    }
}

pub fn velocity_from_norm(x: f64) -> f64 {
    MIN_VELOCITY + (x + 1.0) * 0.5 * (MAX_VELOCITY - MIN_VELOCITY)
}

pub fn norm_from_velocity(v: f64) -> f64 {
    2.0 * (v - MIN_VELOCITY) / (MAX_VELOCITY - MIN_VELOCITY) - 1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Change of the full-bed reward per step.
    #[default]
    Privileged,
    /// Zero until the last step, which pays the settled final reward.
    Delayed,
    /// Change of the reward restricted to the view window.
    Immediate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    #[default]
    Full,
    VelocityOnly,
    OffsetOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub mode: PrintMode,
    pub reward: RewardMode,
    /// Immediate rewards over the whole bed instead of the view window.
    pub immediate_full_bed: bool,
    pub flow: FlowMode,
    pub material: MaterialParams,
    pub sim: SimConfig,
    pub action_mode: ActionMode,
    pub plan: PlanConfig,
    /// Nominal emitter pressure (particles / s).
    pub pressure: f64,
    /// Head velocity at which flow-noise intervals are converted to time (mm/s).
    pub noise_velocity: f64,
    /// Settling after the final waypoint; the material preset's time if unset.
    pub settle_time_end: Option<f64>,
    pub observation: ObservationSpec,
    pub grid: BedGrid,
    pub nozzle_radius: f64,
    pub tip_height: f64,
    pub occupancy_eps: f64,
    /// Normaliser of the infill height std in the reward (mm).
    pub height_scale: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        let nozzle = Nozzle::default();
        Self {
            mode: PrintMode::Outline,
            reward: RewardMode::Privileged,
            immediate_full_bed: false,
            flow: FlowMode::Constant,
            material: MaterialParams::default(),
            sim: SimConfig::default(),
            action_mode: ActionMode::Full,
            plan: PlanConfig::default(),
            pressure: 45.0,
            noise_velocity: 1.0,
            settle_time_end: None,
            observation: ObservationSpec::default(),
            grid: BedGrid::default(),
            nozzle_radius: nozzle.radius,
            tip_height: nozzle.tip_height,
            occupancy_eps: OCCUPANCY_EPS,
            height_scale: nozzle.tip_height,
        }
    }
}

impl EpisodeConfig {
    pub fn settle_time(&self) -> f64 {
        self.settle_time_end.unwrap_or(self.material.settle_time)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if !(self.plan.step > 0.0) || !(self.plan.width > 0.0) {
            return bad("plan width and step must be positive");
        }
        if !(self.pressure >= 0.0) {
            return bad("pressure must be non-negative");
        }
        if !(self.noise_velocity > 0.0) {
            return bad("noise_velocity must be positive");
        }
        if !(self.settle_time() >= 0.0) {
            return bad("settle time must be non-negative");
        }
        if !(self.tip_height > 0.0) || !(self.nozzle_radius > 0.0) || !(self.height_scale > 0.0) {
            return bad("nozzle dimensions and height_scale must be positive");
        }
        let o = &self.observation;
        if o.pixels == 0 || o.mask_px > o.pixels || (o.pixels - o.mask_px) % 2 != 0 || !(o.view_mm > 0.0) {
            return bad("observation needs pixels > 0 and a centred mask");
        }
        self.material.validate()?;
        self.sim.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Full-bed reward `R^t` after the step.
    pub bed_reward: f64,
    /// Fraction of steps completed.
    pub progress: f64,
    pub head: [f64; 2],
    /// Mean emitter pressure over the step.
    pub pressure: f64,
    /// The action was outside [-1, 1] and has been clamped.
    pub clamped: bool,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of the episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub action: [f64; 2],
    pub reward: f64,
    pub head: [f64; 2],
    #[serde(rename = "P")]
    pub pressure: f64,
}

pub struct Env {
    config: EpisodeConfig,
    slice: SliceSet,
    paths: Vec<ToolPath>,
    target: TargetImage,
    target_f: Grid2<f64>,
    sim: Simulation,
    schedule: FlowSchedule,
    /// Current path and index of the next waypoint on it.
    path: usize,
    waypoint: usize,
    head: DVec2,
    total_steps: usize,
    steps_done: usize,
    canvas: Canvas,
    bed_reward: f64,
    initial_reward: f64,
    done: bool,
    trace: Vec<TraceRecord>,
}

impl Env {
    /// Fresh episode: plans the slice, places the head at the first waypoint
    /// and evaluates `R^0`.
    pub fn new(slice: SliceSet, config: EpisodeConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let plan = plan_layer(&slice, &config.plan).map_err(|e| match e {
            GeomError::DegenerateOffset { .. } => EnvError::UnprintableSlice(e),
            other => EnvError::Geom(other),
        })?;
        let paths = match config.mode {
            PrintMode::Outline => plan.outline,
            PrintMode::Infill => plan.infill,
        };
        Self::from_paths(slice, paths, config, seed)
    }

    /// Episode over explicit paths instead of the planner's; `slice` still
    /// defines the target.
    pub fn from_paths(slice: SliceSet, paths: Vec<ToolPath>, config: EpisodeConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let paths: Vec<ToolPath> = paths.into_iter().filter(|p| p.waypoints.len() >= 2).collect();
        if paths.is_empty() {
            return Err(EnvError::UnprintableSlice(GeomError::DegenerateOffset {
                delta: config.plan.width,
            }));
        }
        let target = rasterize_target(&slice, &config.grid)?;
        let target_f = target.as_f64();

        let head = paths[0].waypoints[0];
        let nozzle = Nozzle {
            center: head,
            tip_height: config.tip_height,
            radius: config.nozzle_radius,
            travel_dir: paths[0].tangent(0),
            lifted: false,
        };
        let bed = BedBounds {
            min: config.grid.origin,
            max: config.grid.max(),
        };
        let sim = Simulation::new(config.material, config.sim, nozzle, bed, seed)?;

        let total_len: f64 = paths.iter().map(ToolPath::length).sum();
        let mut flow_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let schedule = FlowSchedule::build(&config.flow, total_len / MIN_VELOCITY, config.noise_velocity, &mut flow_rng);
        let total_steps = paths.iter().map(|p| p.waypoints.len() - 1).sum();
        let canvas = Canvas::new(heightmap(&[], config.material.radius, &config.grid), config.occupancy_eps);
        let mut env = Self {
            config,
            slice,
            paths,
            target,
            target_f,
            sim,
            schedule,
            path: 0,
            waypoint: 1,
            head,
            total_steps,
            steps_done: 0,
            canvas,
            bed_reward: 0.0,
            initial_reward: 0.0,
            done: false,
            trace: Vec::new(),
        };
        env.bed_reward = env.evaluate(&env.canvas, Region::Bed)?;
        env.initial_reward = env.bed_reward;
        Ok(env)
    }

    /// [`Env::new`] followed by the first observation.
    pub fn reset(slice: SliceSet, config: EpisodeConfig, seed: u64) -> Result<(Self, Observation), EnvError> {
        let env = Self::new(slice, config, seed)?;
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn slice(&self) -> &SliceSet {
        &self.slice
    }

    pub fn paths(&self) -> &[ToolPath] {
        &self.paths
    }

    pub fn target(&self) -> &TargetImage {
        &self.target
    }

    pub fn canvas(&self) -> &Canvas {
        &self.canvas
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn head(&self) -> DVec2 {
        self.head
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// Full-bed reward of the current canvas.
    pub fn bed_reward(&self) -> f64 {
        self.bed_reward
    }

    pub fn initial_reward(&self) -> f64 {
        self.initial_reward
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Pressure multiplier the flow schedule applies right now. Not
    /// observable on hardware; used by privileged scripted policies.
    pub fn flow_factor(&self) -> f64 {
        self.schedule.factor(self.sim.time)
    }

    /// Mean flow factor over the next `substeps` simulation steps.
    pub fn flow_factor_ahead(&self, substeps: usize) -> f64 {
        let dt = self.sim.config.dt;
        let n = substeps.max(1);
        (0..n).map(|k| self.schedule.factor(self.sim.time + k as f64 * dt)).sum::<f64>() / n as f64
    }

    /// Substeps a move to `goal` at `velocity` takes.
    pub fn substeps_to(&self, goal: DVec2, velocity: f64) -> usize {
        let dist = self.head.distance(goal);
        ((dist / (velocity * self.sim.config.dt)) - 1e-9).ceil().max(1.0) as usize
    }

    /// Baseline waypoint and normal the next step heads for.
    pub fn next_waypoint(&self) -> Option<(DVec2, DVec2)> {
        if self.done {
            return None;
        }
        let p = &self.paths[self.path];
        Some((p.waypoints[self.waypoint], p.normals[self.waypoint]))
    }

    pub fn frame(&self) -> ViewFrame {
        ViewFrame::new(self.head, self.sim.nozzle.travel_dir)
    }

    pub fn observe(&self) -> Observation {
        let encoding = match self.config.mode {
            PrintMode::Infill => BedEncoding::Height {
                scale: self.config.tip_height,
            },
            PrintMode::Outline => BedEncoding::Threshold {
                level: self.config.observation.outline_threshold,
            },
        };
        let upcoming = if self.done {
            PathView {
                paths: &[],
                path: 0,
                waypoint: 0,
            }
        } else {
            PathView {
                paths: &self.paths,
                path: self.path,
                waypoint: self.waypoint,
            }
        };
        render_observation(
            &self.config.observation,
            &self.frame(),
            &self.canvas.height,
            encoding,
            &self.target_f,
            &upcoming,
        )
    }

    fn evaluate(&self, canvas: &Canvas, region: Region) -> Result<f64, EnvError> {
        reward_bed(canvas, &self.target, self.config.mode, self.config.height_scale, region)
    }

    fn refresh_canvas(&mut self) {
        self.canvas = Canvas::new(
            heightmap(&self.sim.particles, self.config.material.radius, &self.config.grid),
            self.config.occupancy_eps,
        );
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let (action, clamped) = action.clamped();
        let (velocity, offset) = match self.config.action_mode {
            ActionMode::Full => (action.velocity_mm_s(), action.offset_mm()),
            ActionMode::VelocityOnly => (action.velocity_mm_s(), 0.0),
            ActionMode::OffsetOnly => (PINNED_VELOCITY, action.offset_mm()),
        };
        let (wp, normal) = self.next_waypoint().expect("episode active");
        let goal = wp + normal * offset;
        let pressure = self.travel(goal, velocity)?;

        self.steps_done += 1;
        self.waypoint += 1;
        if self.waypoint == self.paths[self.path].waypoints.len() {
            if self.path + 1 < self.paths.len() {
                // lift and jump to the start of the next path
                self.path += 1;
                self.waypoint = 1;
                self.head = self.paths[self.path].waypoints[0];
                self.sim.nozzle.center = self.head;
            } else {
                self.done = true;
            }
        }
        let p = &self.paths[self.path];
        self.sim.nozzle.travel_dir = p.tangent(self.waypoint - 1);
        if self.done {
            self.sim.emitter.pressure = 0.0;
            self.sim.settle(self.config.settle_time())?;
        }

        let previous = std::mem::replace(
            &mut self.canvas,
            Canvas::new(Grid2::new(self.config.grid), self.config.occupancy_eps),
        );
        self.refresh_canvas();
        let before = self.bed_reward;
        self.bed_reward = self.evaluate(&self.canvas, Region::Bed)?;
        let reward = match self.config.reward {
            RewardMode::Privileged => self.bed_reward - before,
            RewardMode::Delayed => {
                if self.done {
                    self.bed_reward
                } else {
                    0.0
                }
            }
            RewardMode::Immediate if self.config.immediate_full_bed => self.bed_reward - before,
            RewardMode::Immediate => {
                let region = Region::Window {
                    frame: self.frame(),
                    view_mm: self.config.observation.view_mm,
                };
                self.evaluate(&self.canvas, region)? - self.evaluate(&previous, region)?
            }
        };

        let info = StepInfo {
            bed_reward: self.bed_reward,
            progress: self.steps_done as f64 / self.total_steps as f64,
            head: self.head.to_array(),
            pressure,
            clamped,
        };
        self.trace.push(TraceRecord {
            t: self.steps_done - 1,
            action: [action.velocity, action.offset],
            reward,
            head: info.head,
            pressure,
        });
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info,
        })
    }

    /// Moves the head in a straight line to `goal` at `velocity`, one
    /// simulation step per `dt`. Returns the mean emitter pressure.
    fn travel(&mut self, goal: DVec2, velocity: f64) -> Result<f64, EnvError> {
        let start = self.head;
        let dist = start.distance(goal);
        let n = self.substeps_to(goal, velocity);
        if dist > 1e-12 {
            self.sim.nozzle.travel_dir = (goal - start) / dist;
        }
        self.sim.nozzle.lifted = false;
        let mut total = 0.0;
        for k in 1..=n {
            self.sim.nozzle.center = start + (goal - start) * (k as f64 / n as f64);
            let p = self.config.pressure * self.schedule.factor(self.sim.time);
            self.sim.emitter.pressure = p;
            total += p;
            self.sim.step()?;
        }
        self.head = goal;
        Ok(total / n as f64)
    }

    /// Advances the simulation with the head lifted and no emission.
    pub fn settle(&mut self, duration: f64) -> Result<(), EnvError> {
        self.sim.settle(duration)?;
        self.refresh_canvas();
        self.bed_reward = self.evaluate(&self.canvas, Region::Bed)?;
        Ok(())
    }

    /// Trace as JSON lines.
    pub fn write_trace<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in &self.trace {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
