use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quaternion is not unit length (norm {0})")]
    NonUnitQuaternion(f64),

    #[error("rotation matrix is not orthonormal")]
    NotOrthonormal,

    #[error("occluded point (depth {0} <= 0)")]
    Occluded(f64),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("active arm tracking lost (last seen at t={last_seen:.3}s)")]
    TrackingLost { last_seen: f64 },

    #[error("invalid wrist position: {0}")]
    InvalidWrist(String),

    #[error("force mapper training failed: {0}")]
    TrainingFailed(String),

    #[error("qp solver: {0}")]
    Qp(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("log format: {0}")]
    LogFormat(String),

    #[error("no completed trials to report")]
    EmptyReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
