use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },

    #[error("flat patch: no usable gradient content")]
    FlatPatch,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("weights: tensor `{tensor}`: {reason}")]
    Weights { tensor: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Io {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// True for errors caused by the file system or file contents rather than
    /// by numerical validation.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
