use thiserror::Error;

use crate::resource_pool::ServiceId;

/// Errors raised by the scheduling engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cell (row {row}, col {col}) already held by service {holder}, requested by {requester}")]
    Conflict {
        row: usize,
        col: usize,
        holder: ServiceId,
        requester: ServiceId,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("link unusable: {0}")]
    LinkUnusable(String),

    #[error("learning-gain target {target} unreachable, best achievable {max_achievable}")]
    GainShortfall { target: f64, max_achievable: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
