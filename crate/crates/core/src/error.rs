use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid depth {0}: depth must be finite and > 0")]
    InvalidDepth(f64),

    #[error("cheirality violation: point has z = {0}")]
    Cheirality(f64),

    #[error("image size {width}x{height} too small: {reason}")]
    ImageSize {
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("interior of {available} pixels cannot hold {requested} keypoints")]
    Capacity { requested: usize, available: usize },

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate patch: {valid} jointly valid samples, need at least 2")]
    DegeneratePatch { valid: usize },

    #[error("no keypoint has a valid patch in any source frame")]
    NoOverlap,

    #[error("pixel ({x}, {y}) is not covered by any plane")]
    Coverage { x: usize, y: usize },

    #[error("no valid pixels to evaluate")]
    EmptyEvaluation,

    #[error("zero-length translation has no direction")]
    UndefinedDirection,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("photometric term lost all overlap at iteration {iteration}")]
    NoOverlapAt { iteration: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of the numerical pipeline rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NoOverlapAt { .. } | Error::NoOverlap
        )
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
