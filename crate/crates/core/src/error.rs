use thiserror::Error;

/// Failures raised by the estimators and their numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error(
        "rank condition violated: rank(C·E) = {rank_ce}, rank(E) = {rank_e}, \
         {required} unknown inputs required"
    )]
    RankCondition {
        rank_ce: usize,
        rank_e: usize,
        required: usize,
    },

    #[error("innovation covariance is numerically singular (rcond = {rcond:e})")]
    SingularInnovation { rcond: f64 },

    #[error("{what} is singular or too ill-conditioned to invert")]
    Singular { what: &'static str },

    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: &'static str, step: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("scenario '{scenario}', seed {seed}, {estimator}: {source}")]
    Scenario {
        scenario: String,
        seed: u64,
        estimator: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(
    context: &'static str,
    expected: (usize, usize),
    actual: (usize, usize),
) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
