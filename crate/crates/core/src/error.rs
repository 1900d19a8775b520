use std::path::PathBuf;

/// Errors raised by every stage of the normalization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("degenerate room: {0}")]
    DegenerateRoom(String),

    #[error("sample rate mismatch: signal {signal} Hz, channel {channel} Hz")]
    RateMismatch { signal: u32, channel: u32 },

    #[error("rank deficient: covariance rank {rank} < requested {requested} components")]
    RankDeficient { rank: usize, requested: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("metric has no valid cells")]
    NoValidCells,

    #[error("region too small: no cell has enough valid neighbours for differencing")]
    RegionTooSmall,

    #[error("transport path leaves the valid region at {exit:?}")]
    PathLeavesValidRegion { exit: Vec<f64> },

    #[error("degenerate reference frame: {0}")]
    DegenerateReference(String),

    #[error("reference point {0:?} lies outside the valid connection region")]
    ReferenceOutsideRegion(Vec<f64>),

    #[error("scale lattice folds over at node {node:?}")]
    FoldedLattice { node: Vec<i64> },

    #[error("point {0:?} lies outside the scale domain")]
    OutsideScaleDomain(Vec<f64>),

    #[error("scale coordinates {0:?} are outside the scale range")]
    SOutOfRange(Vec<f64>),

    #[error("incompatible scales: {0}")]
    IncompatibleScales(String),

    #[error("element count mismatch: expected {expected}, got {got}")]
    ElementCountMismatch { expected: usize, got: usize },

    #[error("trajectory length mismatch: {a} vs {b} frames")]
    LengthMismatch { a: usize, b: usize },

    #[error("mask selects no frames")]
    EmptyMask,

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config invalid at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },

    #[error("stage `{stage}` failed: {source}")]
    StageFailure {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::StageFailure { .. } => e,
            e @ Error::ConfigInvalid { .. } => e,
            e => Error::StageFailure {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }
}
