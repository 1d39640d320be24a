use std::io;

use thiserror::Error;

/// Errors produced by the `ssp-core` library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {dim} is not divisible by {subspaces} subspaces")]
    IndivisibleDimension { dim: usize, subspaces: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("empty gallery")]
    EmptyGallery,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("relevant set is empty for query {query}")]
    EmptyRelevantSet { query: usize },

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("K = {0} is not a power of two")]
    NonPowerOfTwoK(usize),

    #[error("target probability is zero at subspace {subspace}, centroid {centroid}")]
    ZeroTargetProbability { subspace: usize, centroid: usize },

    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: usize, total: usize },

    #[error("bad dimension: {0}")]
    BadDimension(String),

    #[error("bad config: {0}")]
    BadConfig(String),

    #[error("row {0} has zero norm")]
    DegenerateRow(usize),

    #[error("embeddings are not L2-normalized")]
    NotNormalized,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndivisibleDimension { .. } => "IndivisibleDimension",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::EmptyInput => "EmptyInput",
            Error::EmptyGallery => "EmptyGallery",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::EmptyRelevantSet { .. } => "EmptyRelevantSet",
            Error::MissingLabels(_) => "MissingLabels",
            Error::NonPowerOfTwoK(_) => "NonPowerOfTwoK",
            Error::ZeroTargetProbability { .. } => "ZeroTargetProbability",
            Error::StepOutOfRange { .. } => "StepOutOfRange",
            Error::BadDimension(_) => "BadDimension",
            Error::BadConfig(_) => "BadConfig",
            Error::DegenerateRow(_) => "DegenerateRow",
            Error::NotNormalized => "NotNormalized",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
