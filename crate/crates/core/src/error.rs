use std::path::PathBuf;

use crate::domain::{BrokerId, RequestId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no utility recorded for pair (request {request}, broker {broker})")]
    MissingUtility { request: RequestId, broker: BrokerId },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite weight at ({row}, {col})")]
    NonFiniteWeight { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("exploration radicand {0} is negative, covariance state is broken")]
    NegativeRadicand(f64),

    #[error("rank-1 update denominator {0} is not positive, covariance state is corrupt")]
    NonPositiveDenominator(f64),

    #[error("residue capacity cannot grow within a day: {from} -> {to}")]
    ResidueIncrease { from: u32, to: u32 },

    #[error("request {0} is not currently matched")]
    NotMatched(RequestId),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible world: {0}")]
    InfeasibleWorld(String),

    #[error("capacity violated: broker {broker} served {served} with capacity {capacity} on day {day}")]
    CapacityViolation {
        broker: BrokerId,
        day: u32,
        served: u32,
        capacity: u32,
    },

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("schema mismatch in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}
