use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by graph construction, simulation, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unit `{0}` has no geometry")]
    MissingGeometry(String),
    #[error("duplicate unit id `{0}`")]
    DuplicateId(String),
    #[error("snap tolerance must be non-negative and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("invalid polygon for unit `{id}`: {reason}")]
    InvalidPolygon { id: String, reason: String },
    #[error("edge ({src}, {dst}) references unknown node `{missing}`")]
    UnknownEndpoint { src: String, dst: String, missing: String },
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(String, String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("threshold {value} of node {index} is outside [0, 1]")]
    ThresholdOutOfRange { index: usize, value: f64 },
    #[error("invalid visit series: {0}")]
    InvalidSeries(String),
    #[error("duration {duration} of node `{id}` exceeds the horizon {horizon}")]
    DurationExceedsHorizon { id: String, duration: f64, horizon: usize },
    #[error("invalid duration {duration} for node `{id}`")]
    InvalidDuration { id: String, duration: f64 },
    #[error("no duration for node `{0}`")]
    MissingDuration(String),
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("fitness evaluation failed for chromosome {chromosome}: {source}")]
    Fitness {
        chromosome: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("invalid multiplier set: {0}")]
    InvalidMultiplierSet(String),
    #[error("enumeration of {count} subsets exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("increment rate undefined: no node recovers without multipliers")]
    ZeroBaseline,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("missing attribute rows for: {}", .0.join(", "))]
    MissingAttributes(Vec<String>),
    #[error("invalid attribute for `{id}`: {reason}")]
    InvalidAttribute { id: String, reason: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
    #[error("could not generate a connected perturbed grid after {0} attempts")]
    DisconnectedGrid(usize),
    #[error("could not draw thresholds with full recovery after {0} attempts")]
    IncompleteRecovery(usize),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
