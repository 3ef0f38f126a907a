use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error(
        "posterior precision matrix is not positive definite at subcarrier {subcarrier} \
         (diagonal ratio {condition:.3e})"
    )]
    Factorization { subcarrier: usize, condition: f64 },

    #[error("noise precision update has a non-positive denominator ({0:.3e})")]
    DegenerateNoise(f64),

    #[error("marginal covariance is not positive definite at subcarrier {0}")]
    NotPositiveDefinite(usize),

    #[error("EM iteration {iteration}: {source}")]
    Em {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time step {step}: {source}")]
    Track {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn mismatch(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
