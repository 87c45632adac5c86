use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("battery state of charge {soc} kWh outside [0, {capacity}] kWh")]
    SocOutOfRange { soc: f64, capacity: f64 },

    #[error("negative order quantity (bid {bid} kWh, ask {ask} kWh)")]
    NegativeQuantity { bid: f64, ask: f64 },

    #[error("non-finite reward at t={t}, soc index {soc_index}")]
    NonFiniteReward { t: usize, soc_index: usize },

    #[error("policy of building `{building}` prescribes infeasible transition {from} -> {to} at t={t}")]
    InfeasiblePolicy {
        building: String,
        t: usize,
        from: usize,
        to: usize,
    },

    #[error("policy state spaces differ: {0}")]
    StateSpaceMismatch(String),

    #[error("the ALEX scenario needs a market background")]
    MissingBackground,

    #[error("every window was skipped (non-positive maximum)")]
    AllWindowsSkipped,

    #[error("empty series")]
    EmptySeries,

    #[error("dataset is invalid: {}", .0.join("; "))]
    InvalidDataset(Vec<String>),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("unmapped field `{field}` for {context}")]
    UnmappedField { field: String, context: String },

    #[error("length mismatch for building `{building}`: expected {expected} steps, found {found}")]
    LengthMismatch {
        building: String,
        expected: usize,
        found: usize,
    },

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
