//! TOML run configuration.
//!
//! A file only needs the keys it changes: it is merged over the defaults
//! before validation, and `--set path.to.key=value` overrides are merged
//! over the file. A top-level `material = "low" | "medium" | "high"` selects
//! a viscosity preset that explicit `[episode.material]` keys refine.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use diwsim_core::env::EpisodeConfig;
use diwsim_core::fluid::MaterialParams;
use diwsim_core::noise::{ARModel, FlowMode, DEFAULT_INTERVAL};
use diwsim_core::policy::{BaselineParams, CalibrationLattice};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Viscosity preset name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    pub episode: EpisodeConfig,
    pub calibration: CalibrationLattice,
    /// Calibrated baseline; computed from `calibration` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineParams>,
    /// Fitted AR model JSON; switches the episode to noisy flow.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_model: Option<PathBuf>,
    /// Path distance per noise sample (mm).
    pub noise_interval: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            material: None,
            episode: EpisodeConfig::default(),
            calibration: CalibrationLattice::default(),
            baseline: None,
            noise_model: None,
            noise_interval: DEFAULT_INTERVAL,
        }
    }
}

/// Recursive merge of `over` into `base`. A `flow` table naming a different
/// `mode` replaces the old one instead, so switching flow modes does not
/// drag along the fields of the previous mode.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if k != "flow" || o.get("mode").is_none() || b.get("mode") == o.get("mode") => {
                merge(b, o)
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Applies `a.b.c=value`. The value is read as a TOML literal and falls
/// back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not key=value")))?;
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key {key:?}")));
    }
    let mut over = Table::new();
    let (last, path) = parts.split_last().unwrap();
    let mut cursor = &mut over;
    for p in path {
        cursor = cursor
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .unwrap();
    }
    cursor.insert(last.to_string(), value);
    merge(table, over);
    Ok(())
}

impl Config {
    /// Reads `path` (if any), applies the overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut user = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        Self::from_table(user)
    }

    pub fn from_table(user: Table) -> Result<Self, CliError> {
        let mut base = Table::try_from(Config::default()).map_err(config_err)?;
        if let Some(v) = user.get("material") {
            let name = v.as_str().ok_or_else(|| CliError::Config("material must be a preset name".into()))?;
            let preset = MaterialParams::preset(name)
                .ok_or_else(|| CliError::Config(format!("unknown material preset {name:?} (low, medium, high)")))?;
            let episode = base["episode"].as_table_mut().unwrap();
            episode.insert("material".into(), Value::try_from(preset).map_err(config_err)?);
        }
        merge(&mut base, user);
        let config: Config = base.try_into().map_err(config_err)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.episode.validate()?;
        if let Some(b) = &self.baseline {
            b.validate().map_err(config_err)?;
        }
        if !(self.noise_interval > 0.0) {
            return Err(CliError::Config("noise_interval must be positive".into()));
        }
        let c = &self.calibration;
        if c.pressures.is_empty() || c.velocities.is_empty() || !(c.line_length > 0.0) {
            return Err(CliError::Config("calibration lattice needs pressures, velocities and a positive line_length".into()));
        }
        Ok(())
    }

    /// Inlines the noise model into the episode flow.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(path) = self.noise_model.take() {
            let model = ARModel::load(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            self.episode.flow = FlowMode::Noise {
                model,
                interval: self.noise_interval,
            };
        }
        Ok(self)
    }

    /// Episode settings with the baseline pressure applied when one is known.
    pub fn episode(&self) -> EpisodeConfig {
        let mut e = self.episode.clone();
        if let Some(b) = self.baseline {
            e.pressure = b.pressure;
        }
        e
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::write(dir.join("resolved_config.toml"), self.to_toml())?;
        Ok(())
    }
}
