use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("split sizes {requested} exceed corpus size {available}")]
    SplitSize { requested: usize, available: usize },

    #[error("invalid email address: {0:?}")]
    InvalidEmail(String),

    #[error("invalid host {0:?}: expected domain.tld")]
    InvalidHost(String),

    #[error("part store is empty: {0}")]
    EmptyStore(&'static str),

    #[error("could not draw a unique replacement for row {row} after {attempts} attempts")]
    ReplacementExhausted { row: usize, attempts: usize },

    #[error("span mismatch in datapoint {datapoint_id} at {start}..{end}: expected {expected}")]
    SpanMismatch {
        datapoint_id: usize,
        start: usize,
        end: usize,
        expected: String,
    },

    #[error("plan does not match index table: {0}")]
    PlanMismatch(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("text of {len} bytes is shorter than model order {order}")]
    ShortInput { len: usize, order: usize },

    #[error("original email set is empty")]
    EmptyOriginalSet,

    #[error("seen email set is empty")]
    EmptySeenSet,

    #[error("length mismatch: treatment has {treatment} values, baseline has {baseline}")]
    LengthMismatch { treatment: usize, baseline: usize },

    #[error("checkpoint ordering violated: {0}")]
    CheckpointOrder(String),

    #[error("empty series")]
    EmptySeries,

    #[error("baseline value must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported snapshot format: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
