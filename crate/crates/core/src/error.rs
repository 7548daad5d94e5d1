use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the analysis, training and conversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("waveform too short: {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("frame count mismatch: {a} vs {b} frames")]
    FrameMismatch { a: usize, b: usize },

    #[error("need at least 2 voiced frames, found {0}")]
    InsufficientVoicing(usize),

    #[error("no frames voiced in both tracks")]
    NoCoVoicedFrames,

    #[error("empty mask span")]
    EmptyMask,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
