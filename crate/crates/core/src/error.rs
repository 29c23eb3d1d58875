use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimension, parameter range or option combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// A sphere (or other indexed item) failed validation.
    #[error("validation error at index {index}: {reason}")]
    Validation { index: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Text input could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    /// Inputs do not belong together, e.g. a backward buffer from another scene.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("optimization diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// I/O failure on `path`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
