use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not hermitian: {0}")]
    NotHermitian(String),

    #[error("map is singular or ill-conditioned (condition estimate {cond:.3e})")]
    Singular { cond: f64 },

    #[error("frame is not informationally complete (condition estimate {cond:.3e})")]
    NotInformationallyComplete { cond: f64 },

    #[error("no feasible schedule within max_active = {max_active} (best found {best})")]
    Schedule { max_active: usize, best: usize },

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for validation failures, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Singular { .. }
            | Error::NotInformationallyComplete { .. }
            | Error::Schedule { .. }
            | Error::NotConverged(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
