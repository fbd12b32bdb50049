use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the restoration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image format error: {0}")]
    Format(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("bit budget of {budget} bits is below the single-leaf cost of {min} bits")]
    Budget { budget: u64, min: u64 },
    #[error("bitstream error: {0}")]
    Bitstream(String),
    #[error("event error: {0}")]
    Event(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("architecture mismatch: model expects {expected}, checkpoint holds {found}")]
    Architecture { expected: String, found: String },
    #[error("missing forward cache: {0}")]
    MissingCache(&'static str),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    NonFinite { iteration: usize, loss: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
