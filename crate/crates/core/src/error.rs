use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column '{column}': missing value outside the target column (only the target may be incomplete)")]
    MissingOutsideTarget { row: usize, column: String },

    #[error("column '{0}' not found in header")]
    UnknownColumn(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("column '{0}' is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("too few complete cases: have {have}, need at least {need}")]
    TooFewCompleteCases { have: usize, need: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance not positive definite")]
    NotPositiveDefinite,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("sparse loading is all zero at component {component}; use a larger sparsity value (less thresholding)")]
    ZeroLoading { component: usize },

    #[error("input matrix is not column-standardized (column {column} has mean {mean:e})")]
    NotStandardized { column: usize, mean: f64 },

    #[error("perfect or quasi-complete separation detected in logistic regression")]
    Separation,

    #[error("pooling requires M >= 2 (got {0})")]
    TooFewImputations(usize),

    #[error("{failed} of {total} replicates failed for method {method} (more than 5%)")]
    TooManyFailures {
        method: String,
        failed: usize,
        total: usize,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
