//! Command line front end and environment server of the DIW workbench.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod protocol;
pub mod render;
pub mod server;

pub use config::Config;
pub use error::CliError;
