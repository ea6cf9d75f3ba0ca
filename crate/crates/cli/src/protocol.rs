//! Line-delimited JSON environment protocol.
//!
//! ```text
//! -> {"cmd":"reset","slice":"<id|path|procedural:N>","seed":0,"config":{...}}
//! <- {"obs":"<base64>","info":{"total_steps":N,"bed_reward":R,"progress":0.0}}
//! -> {"cmd":"step","action":[v_norm,off_norm]}
//! <- {"obs":"<base64>","reward":r,"done":false,"info":{"bed_reward":R,"progress":p}}
//! -> {"cmd":"close"}
//! <- {"ok":true}
//! ```
//!
//! Observations are 84 x 84 x 3 little-endian `f32`, channel-major in the
//! order bed, target, path. `config` is a partial episode config merged over
//! the server's. Failures answer `{"error":"<Code>: <message>"}` and leave
//! the session usable.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use diwsim_core::env::{Action, Env, EnvError, EpisodeConfig, Observation};

use crate::dataset::{load_file, procedural, Dataset, PROCEDURAL_PREFIX};

pub const OBS_PIXELS: usize = 84;
pub const OBS_VALUES: usize = OBS_PIXELS * OBS_PIXELS * 3;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Reset {
        slice: String,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        config: Option<Value>,
    },
    Step {
        action: [f64; 2],
    },
    Close,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResetInfo {
    pub total_steps: usize,
    pub bed_reward: f64,
    pub progress: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepInfo {
    pub bed_reward: f64,
    pub progress: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Response {
    Reset {
        obs: String,
        info: ResetInfo,
    },
    Step {
        obs: String,
        reward: f64,
        done: bool,
        info: StepInfo,
    },
    Closed {
        ok: bool,
    },
    Error {
        error: String,
    },
}

impl Response {
    pub fn error(code: &str, message: impl std::fmt::Display) -> Self {
        Self::Error {
            error: format!("{code}: {message}"),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serialises")
    }
}

pub fn encode_obs(obs: &Observation) -> String {
    let bytes: Vec<u8> = obs.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_obs(text: &str) -> Option<Vec<f32>> {
    let bytes = STANDARD.decode(text).ok()?;
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

/// Recursive JSON merge; a `flow` object naming a different `mode`
/// replaces the old one.
pub fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let switch = k == "flow" && v.get("mode").is_some() && b.get(&k).and_then(|f| f.get("mode")) != v.get("mode");
                match b.get_mut(&k) {
                    Some(slot) if !switch => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// What every session of a server shares.
#[derive(Clone, Debug, Default)]
pub struct ServerContext {
    pub episode: EpisodeConfig,
    pub dataset: Dataset,
}

/// One client's environment.
pub struct Session<'a> {
    ctx: &'a ServerContext,
    env: Option<Env>,
    closed: bool,
}

impl<'a> Session<'a> {
    pub fn new(ctx: &'a ServerContext) -> Self {
        Self {
            ctx,
            env: None,
            closed: false,
        }
    }

    pub fn env(&self) -> Option<&Env> {
        self.env.as_ref()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Answers one request line.
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Response::error("BadRequest", e),
        };
        response.to_line()
    }

    pub fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Reset { slice, seed, config } => self.reset(&slice, seed, config),
            Request::Step { action } => self.step(action),
            Request::Close => {
                self.env = None;
                self.closed = true;
                Response::Closed { ok: true }
            }
        }
    }

    fn episode_config(&self, partial: Option<Value>) -> Result<EpisodeConfig, String> {
        let mut config = self.ctx.episode.clone();
        if let Some(partial) = partial {
            if !partial.is_object() {
                return Err("config must be an object".into());
            }
            let mut value = serde_json::to_value(&config).expect("episode config serialises");
            merge_json(&mut value, partial);
            config = serde_json::from_value(value).map_err(|e| e.to_string())?;
        }
        if config.observation.pixels != OBS_PIXELS {
            return Err(format!("observation.pixels must be {OBS_PIXELS}"));
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    fn reset(&mut self, slice: &str, seed: u64, partial: Option<Value>) -> Response {
        let config = match self.episode_config(partial) {
            Ok(c) => c,
            Err(e) => return Response::error("InvalidConfig", e),
        };
        let slices = if let Some(s) = slice.strip_prefix(PROCEDURAL_PREFIX) {
            match s.parse() {
                Ok(n) => procedural(n, config.plan),
                Err(_) => return Response::error("UnknownSlice", format!("bad procedural seed {s:?}")),
            }
        } else {
            let path = match self.ctx.dataset.path(slice) {
                Some(p) => p,
                None if Path::new(slice).is_file() => Path::new(slice),
                None => return Response::error("UnknownSlice", format!("no slice {slice:?}")),
            };
            match load_file(path, None) {
                Ok(s) => s,
                Err(e) => return Response::error("UnknownSlice", format!("{slice}: {e}")),
            }
        };
        self.env = None;
        match Env::reset(slices, config, seed) {
            Ok((env, obs)) => {
                let info = ResetInfo {
                    total_steps: env.total_steps(),
                    bed_reward: env.bed_reward(),
                    progress: 0.0,
                };
                self.env = Some(env);
                Response::Reset {
                    obs: encode_obs(&obs),
                    info,
                }
            }
            Err(EnvError::UnprintableSlice(e)) => Response::error("UnprintableSlice", e),
            Err(EnvError::InvalidConfig(e)) => Response::error("InvalidConfig", e),
            Err(e) => Response::error("UnprintableSlice", e),
        }
    }

    fn step(&mut self, action: [f64; 2]) -> Response {
        let Some(env) = self.env.as_mut() else {
            return Response::error("NoEpisode", "reset before stepping");
        };
        if env.is_done() {
            return Response::error("EpisodeFinished", "the episode is over; reset to start another");
        }
        match env.step(Action::new(action[0], action[1])) {
            Ok(r) => Response::Step {
                obs: encode_obs(&r.obs),
                reward: r.reward,
                done: r.done,
                info: StepInfo {
                    bed_reward: r.info.bed_reward,
                    progress: r.info.progress,
                    clamped: r.info.clamped,
                },
            },
            Err(EnvError::EpisodeFinished) => Response::error("EpisodeFinished", "the episode is over"),
            Err(e) => Response::error("SimulationError", e),
        }
    }
}
