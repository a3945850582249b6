use thiserror::Error;

use crate::coeff::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("field has non-finite value {value} at cell {cell}")]
    NonFinite { cell: usize, value: f64 },

    #[error("nonpositive density {value} at cell {cell}")]
    NonPositive { cell: usize, value: f64 },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    /// A modelling assumption (A1..A4) is violated by the sampled data.
    #[error("assumption {assumption} violated: {detail}")]
    Assumption {
        assumption: &'static str,
        detail: String,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("time span {span} exceeds the unit horizon")]
    HorizonExceeded { span: f64 },

    #[error("iterate left the fixed-point set: {0}")]
    LeftFixedPointSet(String),

    #[error("map is not contracting: successive ratios {ratios:?}")]
    NonContraction { ratios: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
