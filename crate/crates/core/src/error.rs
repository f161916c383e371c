//! Error types shared across the crate.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration that parses but cannot be realized (infeasible spec,
    /// inconsistent sizes, missing artifacts).
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical failure at a specific location (non-convergence, NaN).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: config problems exit 2, numeric
    /// failures exit 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Io(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}
