use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("outcome cell is missing for unit {unit}")]
    MissingOutcome { unit: usize },

    #[error("column `{column}` holds non-binary value `{value}` at unit {unit}")]
    NonBinary { column: String, unit: usize, value: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` holds non-numeric value `{value}` at unit {unit}")]
    NonNumeric { column: String, unit: usize, value: String },

    #[error("variable `{variable}` is only partially observed at unit {unit}; its indicator columns share one observation flag")]
    InconsistentMissingness { variable: String, unit: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid covariate ordering: {0}")]
    InvalidOrdering(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design matrix is singular even after ridge stabilisation")]
    SingularDesign,

    #[error("no observation carries positive weight")]
    NoPositiveWeight,

    #[error("empty stratum: {0}")]
    EmptyStratum(String),

    #[error("weights sum to zero")]
    DegenerateWeights,

    #[error("estimate carries no influence values")]
    NoInfluenceValues,

    #[error("{failed} of {requested} bootstrap resamples failed")]
    TooManyFailedResamples { failed: usize, requested: usize },

    #[error("variable `{0}` has no observed values to impute from")]
    AllMissingVariable(String),

    #[error("contrast components were computed on different datasets")]
    MismatchedData,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by the input data rather than by estimation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingOutcome { .. }
                | Error::NonBinary { .. }
                | Error::UnknownColumn(_)
                | Error::NonNumeric { .. }
                | Error::InconsistentMissingness { .. }
                | Error::InvalidDataset(_)
                | Error::Csv { .. }
                | Error::Io(_)
        )
    }
}
