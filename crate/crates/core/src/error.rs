use thiserror::Error;

/// Errors produced while building or querying a task map.
#[derive(Debug, Error)]
pub enum Error {
    #[error("task list is empty")]
    EmptyTaskList,
    #[error("task {0:?} is empty or duplicated")]
    InvalidTask(String),
    #[error("scene contains no gaussians")]
    EmptyScene,
    #[error("duplicate gaussian id {0}")]
    DuplicateGaussian(u64),
    #[error("unknown gaussian id {0}")]
    UnknownGaussian(u64),
    #[error("gaussian {0} is associated with more than one mask in the same frame")]
    OverlappingMasks(u64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("prior {0} is degenerate; must lie strictly inside (0, 1)")]
    DegeneratePrior(f64),
    #[error("invalid likelihood model: {0}")]
    InvalidModel(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid mask {mask_id}: {reason}")]
    InvalidMask { mask_id: u64, reason: String },
    #[error("mask {mask_id} has neither precomputed gaussian ids nor a depth map")]
    MissingDepth { mask_id: u64 },
    #[error("expected {expected} scores, got {got}")]
    ScoreLength { expected: usize, got: usize },
    #[error("primitive {0} is empty or unknown")]
    EmptyPrimitive(u64),
    #[error("task index {index} out of range for {count} tasks")]
    TaskIndex { index: usize, count: usize },
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("could not place {0} disjoint objects inside the scene extent")]
    Placement(usize),
    #[error("frames out of order: frame {current} follows frame {previous}")]
    FrameOrder { previous: u64, current: u64 },
    #[error("{source_name}:{line}: {message}")]
    Schema {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
