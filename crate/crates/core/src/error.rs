use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}: no data rows")]
    EmptyInput(PathBuf),

    #[error("duplicate observation for {ticker} on {date}")]
    DuplicateObservation { ticker: String, date: NaiveDate },

    #[error("duplicate {what} `{key}`")]
    Duplicate { what: &'static str, key: String },

    #[error("negative weight {value} for {ticker}")]
    NegativeWeight { ticker: String, value: f64 },

    #[error("event date {0} is not a business day of the panel calendar")]
    DateNotInCalendar(NaiveDate),

    #[error("insufficient {what}: required {required}, available {available}")]
    InsufficientData {
        what: &'static str,
        required: usize,
        available: usize,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("degenerate regressor: market returns have zero variance")]
    DegenerateRegressor,

    #[error("undefined DW (perfect fit)")]
    UndefinedDurbinWatson,

    #[error("perfect fit, t undefined")]
    PerfectFit,

    #[error("market series `{ticker}` incomplete: {reason}")]
    MarketIncomplete { ticker: String, reason: String },

    #[error("zero market weight for {0}")]
    ZeroMarketWeight(String),

    #[error("ticker set mismatch; missing: {}", .missing.join(", "))]
    TickerMismatch { missing: Vec<String> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown feature column `{0}`")]
    UnknownColumn(String),

    #[error("unknown ticker `{0}`")]
    UnknownTicker(String),

    #[error("cell ({i}, {j}) outside {rows}x{cols} grid")]
    CellOutOfRange {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },

    #[error("portfolio {0} is empty")]
    EmptyPortfolio(usize),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
