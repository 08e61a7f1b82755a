use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid 3D box: {0}")]
    InvalidBox3D(String),
    #[error("invalid 2D box: {0}")]
    InvalidBox2D(String),
    #[error("invalid camera calibration `{camera}`: {reason}")]
    InvalidCalibration { camera: String, reason: String },
    #[error("invalid cost matrix: {0}")]
    InvalidCostMatrix(String),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("frame {got} presented after frame {last}; frames must be strictly increasing")]
    OutOfOrderFrame { last: u32, got: u32 },
    #[error("detection {detection_id} appears twice in frame {frame}")]
    DuplicateDetection { frame: u32, detection_id: u64 },
    #[error("mixed frame indices in one batch: expected {expected}, got {got}")]
    FrameMismatch { expected: u32, got: u32 },
    #[error("no calibration for camera `{0}`")]
    MissingCalibration(String),
    #[error("degenerate 2D box for depth estimation: {0}")]
    DegenerateBox(String),
    #[error("training data: {0}")]
    TrainingData(String),
    #[error("invalid config key `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },
    #[error("unknown split `{0}`; expected one of rare, urban, diverse")]
    UnknownSplit(String),
    #[error("{path}:{line}: {reason}")]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    // The cause is part of the message rather than a chained source, so
    // `{:#}` chains do not print it twice.
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
