use thiserror::Error;

/// Errors raised while building or solving a bang-bang control problem.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid problem, mesh or run configuration.
    #[error("{0}")]
    Config(String),

    /// A time or index outside the admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent use of the API, e.g. trajectories on different meshes.
    #[error("usage error: {0}")]
    Usage(String),

    /// A numerical failure (singular closure, non-finite values).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for this error: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
