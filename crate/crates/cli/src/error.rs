use lds_core::lds_model::ModelError;
use lds_core::pomdp::PomdpError;
use lds_core::sim::SimError;
use lds_core::solver::{SolverError, SolverMeta};
use thiserror::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_TIMEOUT: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_POLICY: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Usage(String),
    #[error("solver timed out after {:.1}s with gap {:.3e}", .0.wall_secs, .0.gap)]
    TimedOut(SolverMeta),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(e) => CliError::Model(e),
            SimError::Pomdp(e) => CliError::Pomdp(e),
            SimError::Network(e) => CliError::Model(ModelError::Network(e)),
            SimError::Solver(e) => CliError::Solver(e),
            SimError::Invalid(m) => CliError::Usage(m),
        }
    }
}

impl CliError {
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(ModelError::Io { .. }) | CliError::Io { .. } | CliError::Solver(SolverError::Io { .. }) => EXIT_IO,
            CliError::Model(_) | CliError::Pomdp(_) | CliError::InvalidModel(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::TimedOut(_) | CliError::Solver(SolverError::Timeout(_)) => EXIT_TIMEOUT,
            CliError::Solver(SolverError::FingerprintMismatch { .. } | SolverError::Malformed(_) | SolverError::EmptyPolicy) => EXIT_POLICY,
            CliError::Solver(_) => EXIT_FAILURE,
        }
    }
}
