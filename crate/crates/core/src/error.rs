use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("random stream exhausted: 64-bit offset counter would overflow")]
    StreamExhausted,

    #[error("non-finite loss {loss} (diverged)")]
    Divergence { loss: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("objective `{0}` has no analytic gradient")]
    NoGradient(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("batch size {requested} exceeds dataset size {available}")]
    BatchTooLarge { requested: usize, available: usize },

    #[error("batch index {index} out of range for {len} examples")]
    BadBatch { index: usize, len: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },

    #[error("trajectory has no parameter snapshots")]
    MissingSnapshots,

    #[error("cannot compare runs on different objectives: `{0}` vs `{1}`")]
    IncompatibleObjectives(String, String),

    #[error("need at least {0} trajectories")]
    TooFewRuns(usize),

    #[error("checkpoint does not match optimizer: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
