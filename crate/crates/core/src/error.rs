use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which side of the problem an error belongs to. The CLI maps these onto
/// exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Runtime,
}

/// Why a constraint set admits no portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// Lower bounds sum above one, upper bounds sum below one, or some l > u.
    Bounds,
    /// The best achievable expected return under the bounds is below R_min.
    MinReturnTooHigh,
}

impl std::fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfeasibleReason::Bounds => f.write_str("weight bounds conflict with the budget"),
            InfeasibleReason::MinReturnTooHigh => f.write_str("minimum expected return exceeds the attainable maximum"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("data file not found: {0}")]
    MissingFile(PathBuf),
    #[error("schema violation at row {row}: {message}")]
    SchemaViolation { row: u64, message: String },
    #[error("panel is empty")]
    EmptyPanel,
    #[error("insufficient history: need {needed} observations, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("no data at {0}")]
    NoDataAtDate(NaiveDate),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("universe is empty")]
    EmptyUniverse,
    #[error("no assets")]
    NoAssets,
    #[error("every asset has zero variance over the window")]
    SingularStats,
    #[error("Infeasible: {0}")]
    Infeasible(InfeasibleReason),
    #[error("solver did not converge (final step {gap:e} after {iterations} iterations)")]
    NotConverged { gap: f64, iterations: usize },
    #[error("equity must be positive, got {0}")]
    NonPositiveEquity(f64),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("start value must be positive")]
    NonPositiveStart,
    #[error("series contains non-positive values")]
    NonPositiveValues,
    #[error("zero variance")]
    ZeroVariance,
    #[error("empty series")]
    EmptySeries,
    #[error("need at least two weight snapshots")]
    InsufficientSnapshots,
    #[error("sample too small: need {needed}, have {available}")]
    InsufficientSample { needed: usize, available: usize },
    #[error("no returns below the risk-free rate")]
    NoDownside,
    #[error("benchmark excess returns have zero variance")]
    DegenerateBenchmark,

    #[error("malformed expression: {0}")]
    MalformedTree(String),
    #[error("signal is cross-sectionally constant on every day")]
    DegenerateSignal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::ConfigInvalid { .. } => ErrorClass::Config,
            Error::MissingFile(_)
            | Error::SchemaViolation { .. }
            | Error::EmptyPanel
            | Error::InsufficientHistory { .. }
            | Error::NoDataAtDate(_)
            | Error::Io { .. } => ErrorClass::Data,
            _ => ErrorClass::Runtime,
        }
    }

    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
