use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RgamError>;

#[derive(Debug, Error)]
pub enum RgamError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("{family} family cannot model response value {value} (row {row})")]
    FamilyMismatch {
        family: String,
        row: usize,
        value: f64,
    },

    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every column has zero variance")]
    AllZeroVariance,

    #[error("lambda_max is zero: the working response is orthogonal to every penalized column")]
    DegenerateResponse,

    #[error("IRLS diverged at lambda index {lambda_index}: {reason}")]
    Divergence { lambda_index: usize, reason: String },

    #[error("coordinate descent did not converge within {sweeps} sweeps at lambda index {lambda_index}")]
    NoConvergence { lambda_index: usize, sweeps: usize },

    #[error("smoothing spline needs at least 4 unique x values, got {0}")]
    TooFewUniqueValues(usize),

    #[error("target df {target} outside the attainable range [2, {max}]")]
    DfOutOfRange { target: f64, max: f64 },

    #[error("df search did not converge; smoothing parameter bracket [{lo:e}, {hi:e}]")]
    DfSearch { lo: f64, hi: f64 },

    #[error("fold {fold} has a single class in its {part} data")]
    SingleClass { fold: usize, part: &'static str },

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<RgamError>,
    },

    #[error("model file has format version {found}, this build reads version {expected}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RgamError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RgamError::Io {
            path: path.into(),
            source,
        }
    }
}
