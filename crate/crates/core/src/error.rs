use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series of length {n} is shorter than the window length {required}")]
    LengthTooShort { n: usize, required: usize },

    #[error("node ({var}, {time}) out of range for p = {p}, window length {window}")]
    InvalidNode {
        var: usize,
        time: usize,
        p: usize,
        window: usize,
    },

    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is singular within tolerance (pivot {pivot:e} at index {index})")]
    Singular { index: usize, pivot: f64 },

    #[error("conditioning covariance is singular")]
    SingularConditioning,

    #[error("variable has zero residual variance")]
    DegenerateVariance,

    #[error("argument {value} outside the open interval (-1, 1)")]
    Domain { value: f64 },

    #[error("insufficient samples: {available} available, {required} required")]
    InsufficientSamples { available: usize, required: usize },

    #[error("rank-deficient design matrix when regressing component {target}")]
    RankDeficient { target: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{0} is undefined (zero denominator)")]
    UndefinedRate(&'static str),

    #[error("recording contains no complete bin")]
    EmptyRecording,

    #[error("series of {len} bins is shorter than one trial of {trial_bins} bins")]
    TooShort { len: usize, trial_bins: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
