//! CLI error taxonomy mapped onto process exit codes.

use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn config(err: impl std::fmt::Display) -> Self {
        CliError::Config(err.to_string())
    }

    pub fn numerical(err: impl std::fmt::Display) -> Self {
        CliError::Numerical(err.to_string())
    }

    pub fn io(err: impl std::fmt::Display) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

impl From<ringdown_core::experiments::ExperimentError> for CliError {
    fn from(err: ringdown_core::experiments::ExperimentError) -> Self {
        match err {
            ringdown_core::experiments::ExperimentError::UnknownRecipe { .. }
            | ringdown_core::experiments::ExperimentError::BadSweepGrid
            | ringdown_core::experiments::ExperimentError::SweptParameterMismatch { .. }
            | ringdown_core::experiments::ExperimentError::BadPhasePair { .. } => {
                CliError::Config(err.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ringdown_core::model::ModelError> for CliError {
    fn from(err: ringdown_core::model::ModelError) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<ringdown_core::evolve::EvolveError> for CliError {
    fn from(err: ringdown_core::evolve::EvolveError) -> Self {
        CliError::Numerical(err.to_string())
    }
}

impl From<ringdown_core::floquet::FloquetError> for CliError {
    fn from(err: ringdown_core::floquet::FloquetError) -> Self {
        CliError::Numerical(err.to_string())
    }
}

impl From<ringdown_core::perturb::PerturbError> for CliError {
    fn from(err: ringdown_core::perturb::PerturbError) -> Self {
        CliError::Numerical(err.to_string())
    }
}

impl From<ringdown_core::signal::SignalError> for CliError {
    fn from(err: ringdown_core::signal::SignalError) -> Self {
        CliError::Numerical(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
