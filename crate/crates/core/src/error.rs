use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconError {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("duplicate year {year}{}", .column.as_ref().map(|c| format!(" for column {c}")).unwrap_or_default())]
    DuplicateYear { year: i32, column: Option<String> },
    #[error("years not increasing: {prev} followed by {next}")]
    NonMonotoneYears { prev: i32, next: i32 },
    #[error("window {first}-{last} outside data span {span_first}-{span_last}")]
    WindowOutOfRange {
        first: i32,
        last: i32,
        span_first: i32,
        span_last: i32,
    },
    #[error("invalid window: first year {first} after last year {last}")]
    InvalidWindow { first: i32, last: i32 },
    #[error("missing values in window ({count} cells, first in column {column} at {year})")]
    MissingValues {
        count: usize,
        column: String,
        year: i32,
    },
    #[error("column {0} is constant over the window")]
    ConstantColumn(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("requested {requested} components but attainable rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("singular design matrix")]
    SingularDesign,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("loess window too small: {points} points for a degree-{degree} local fit")]
    WindowTooSmall { points: usize, degree: usize },
    #[error("coordinate descent did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("ARMA({p},{q}) fit failed: {msg}")]
    ArmaFit { p: usize, q: usize, msg: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl ReconError {
    /// True for errors caused by the input data rather than the arithmetic.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            ReconError::Parse { .. }
                | ReconError::Io { .. }
                | ReconError::DuplicateYear { .. }
                | ReconError::NonMonotoneYears { .. }
                | ReconError::WindowOutOfRange { .. }
                | ReconError::InvalidWindow { .. }
                | ReconError::MissingValues { .. }
                | ReconError::ConstantColumn(_)
                | ReconError::UnknownColumn(_)
                | ReconError::Shape(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, ReconError>;
