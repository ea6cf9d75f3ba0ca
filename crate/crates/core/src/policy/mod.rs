//! Controllers for the printing environment.

mod calibrate;
mod cnn;

pub use calibrate::{calibrate_baseline, line_width, log_space, BaselineParams, Calibration, CalibrationLattice, LineSample};
pub use cnn::{act, Activations, CnnWeights, PolicyOutput, Tensor, LAYOUT, MAGIC};

use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{norm_from_velocity, Action, Env, Observation, MAX_OFFSET, MAX_VELOCITY, MIN_VELOCITY};
use crate::fluid::SimError;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("CalibrationOutOfRange: best width {width} mm is more than 20% from {target} mm")]
    CalibrationOutOfRange { width: f64, target: f64 },
    #[error("BadMagic: not a DIWPOLICY1 file")]
    BadMagic,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("TruncatedFile: weight file ends early")]
    TruncatedFile,
    #[error("NonFinite: tensor {0} has non-finite values")]
    NonFinite(String),
    #[error("InvalidParams: {0}")]
    InvalidParams(String),
    #[error("UnknownPolicy: {0}")]
    UnknownPolicy(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub trait Policy {
    /// Next action. `env` is available for privileged scripted policies; the
    /// others look only at `obs`.
    fn act(&mut self, env: &Env, obs: &Observation) -> Action;
}

/// Calibrated constant velocity, zero offset.
#[derive(Clone, Copy, Debug)]
pub struct BaselinePolicy {
    pub params: BaselineParams,
}

impl BaselinePolicy {
    pub fn action(&self) -> Action {
        Action::new(norm_from_velocity(self.params.velocity), 0.0)
    }
}

impl Policy for BaselinePolicy {
    fn act(&mut self, _: &Env, _: &Observation) -> Action {
        self.action()
    }
}

/// Uniform actions over the normalized box.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _: &Env, _: &Observation) -> Action {
        Action::new(self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn act(&mut self, _: &Env, _: &Observation) -> Action {
        self.0
    }
}

/// Privileged controller that reads the true flow factor over the coming
/// move. It scales the velocity with the flow so the deposited width stays
/// at the planned width, and shifts the path by half of whatever width error
/// the velocity limits leave, keeping the outer edge on the target boundary.
#[derive(Clone, Copy, Debug)]
pub struct OraclePolicy {
    pub params: BaselineParams,
    /// Planned deposition width (mm).
    pub width: f64,
}

impl Policy for OraclePolicy {
    fn act(&mut self, env: &Env, _: &Observation) -> Action {
        let Some((wp, _)) = env.next_waypoint() else {
            return BaselinePolicy { params: self.params }.action();
        };
        let v_cal = self.params.velocity;
        let mut v = v_cal;
        for _ in 0..4 {
            let f = env.flow_factor_ahead(env.substeps_to(wp, v));
            v = (v_cal * f).clamp(MIN_VELOCITY, MAX_VELOCITY);
        }
        let f = env.flow_factor_ahead(env.substeps_to(wp, v));
        let width = self.width * f * v_cal / v;
        let offset = 0.5 * (width - self.width);
        Action::new(norm_from_velocity(v), (offset / MAX_OFFSET).clamp(-1.0, 1.0))
    }
}

/// Network policy; samples from the squashed Gaussian when stochastic.
pub struct CnnPolicy {
    pub weights: CnnWeights,
    pub stochastic: bool,
    rng: ChaCha8Rng,
}

impl CnnPolicy {
    pub fn new(weights: CnnWeights, stochastic: bool, seed: u64) -> Self {
        Self {
            weights,
            stochastic,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for CnnPolicy {
    fn act(&mut self, _: &Env, obs: &Observation) -> Action {
        match self.weights.forward(obs) {
            Ok(out) => act(&out, &mut self.rng, self.stochastic),
            Err(_) => Action::new(0.0, 0.0),
        }
    }
}

/// Policy selector as written on the command line:
/// `baseline | random | constant:<v,off> | oracle | cnn:<path> | external`.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    Baseline,
    Random,
    Constant(Action),
    Oracle,
    Cnn(PathBuf),
    External,
}

impl FromStr for PolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolicyError::UnknownPolicy(s.to_string());
        match s.split_once(':') {
            None => match s {
                "baseline" => Ok(Self::Baseline),
                "random" => Ok(Self::Random),
                "oracle" => Ok(Self::Oracle),
                "external" => Ok(Self::External),
                _ => Err(bad()),
            },
            Some(("constant", rest)) => {
                let (v, off) = rest.split_once(',').ok_or_else(bad)?;
                let v: f64 = v.trim().parse().map_err(|_| bad())?;
                let off: f64 = off.trim().parse().map_err(|_| bad())?;
                Ok(Self::Constant(Action::new(v, off)))
            }
            Some(("cnn", path)) if !path.is_empty() => Ok(Self::Cnn(path.into())),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Baseline => write!(f, "baseline"),
            Self::Random => write!(f, "random"),
            Self::Constant(a) => write!(f, "constant:{},{}", a.velocity, a.offset),
            Self::Oracle => write!(f, "oracle"),
            Self::Cnn(p) => write!(f, "cnn:{}", p.display()),
            Self::External => write!(f, "external"),
        }
    }
}

impl PolicySpec {
    /// Instantiates an in-process policy. `External` has no in-process form.
    pub fn build(&self, params: BaselineParams, width: f64, seed: u64) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self {
            Self::Baseline => Box::new(BaselinePolicy { params }),
            Self::Random => Box::new(RandomPolicy::new(seed)),
            Self::Constant(a) => Box::new(ConstantPolicy(*a)),
            Self::Oracle => Box::new(OraclePolicy { params, width }),
            Self::Cnn(path) => Box::new(CnnPolicy::new(CnnWeights::load(path)?, false, seed)),
            Self::External => return Err(PolicyError::UnknownPolicy("external policies are driven over the wire protocol".into())),
        })
    }
}
