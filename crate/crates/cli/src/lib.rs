//! Library side of the `chance` command: configuration, problem
//! construction and the run pipeline.

pub mod config;
pub mod problems;
pub mod run;

use thiserror::Error;

use config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] chance_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}
