//! Crate-wide error type. Every fallible operation reports the violated
//! precondition or invariant in its message; nothing fails silently.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A signal matrix invariant failed; the message names the offending
    /// model id, record id, or cell.
    #[error("signal matrix violation: {0}")]
    Matrix(String),

    /// Training produced a non-finite parameter or loss.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    /// A structured text file (matrix CSV or config) failed to parse.
    #[error("{path}:{line}: {msg}")]
    Schema {
        path: String,
        line: usize,
        msg: String,
    },

    /// Experiment configuration is missing a field or holds an
    /// out-of-range value. The message names the field.
    #[error("config error: {0}")]
    Config(String),

    /// A calibration table has no entry for the queried key.
    #[error("no calibration entry: {0}")]
    MissingCalibration(String),

    /// Numerical guard tripped (non-finite energy, empty integral, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
