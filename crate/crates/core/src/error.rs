use thiserror::Error;

/// Errors raised by the numerical routines and their file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("no spectral value exceeds the truncation threshold {threshold:e}")]
    AllTruncated { threshold: f64 },

    #[error("factorization failed: {0}")]
    FactorizationFailed(String),

    #[error("eigendecomposition failed: {0}")]
    EigenFailed(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid domain box: {0}")]
    InvalidBox(String),

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("principal decomposition is empty")]
    EmptyDecomposition,

    #[error("cannot prune a subspace with {0} principal vector(s)")]
    SubspaceExhausted(usize),

    #[error("cosine {cosine} exceeds 1 by more than {tolerance:e}")]
    NumericalInconsistency { cosine: f64, tolerance: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn mismatch(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    /// True for failures of the numerics rather than of the inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::AllTruncated { .. }
                | Error::FactorizationFailed(_)
                | Error::EigenFailed(_)
                | Error::EmptyDecomposition
                | Error::SubspaceExhausted(_)
                | Error::NumericalInconsistency { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
