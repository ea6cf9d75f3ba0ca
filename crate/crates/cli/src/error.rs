use thiserror::Error;

use diwsim_core::env::EnvError;
use diwsim_core::geom::GeomError;
use diwsim_core::noise::NoiseError;
use diwsim_core::policy::PolicyError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("Usage: {0}")]
    Usage(String),
    #[error("InvalidConfig: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }

    /// Single-line JSON form written as the last line of stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}

pub fn runtime(code: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{code}: {e}"))
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        runtime("Io", e)
    }
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> Self {
        runtime("Geometry", e)
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::InvalidConfig(m) => CliError::Config(m),
            EnvError::UnprintableSlice(g) => runtime("UnprintableSlice", g),
            e => runtime("Env", e),
        }
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        runtime("Noise", e)
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::UnknownPolicy(m) => CliError::Usage(format!("unknown policy {m}")),
            e => CliError::Runtime(e.to_string()),
        }
    }
}
