use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance: {0}")]
    MalformedInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("instance too large for exhaustive search: {m} edges (limit {limit})")]
    TooLarge { m: usize, limit: usize },

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
            Error::MalformedInstance(_) => 3,
            Error::InvalidConfig(_) | Error::TooLarge { .. } => 4,
            Error::Infeasible(_) => 5,
        }
    }
}
