use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight matrix is singular or not positive definite (condition estimate {condition:e})")]
    SingularWeight { condition: f64 },

    #[error("score evaluation produced a non-finite value")]
    NonFiniteScore,

    #[error("loss evaluation produced a non-finite value")]
    NonFiniteLoss,

    #[error("need at least 2 score contributions, got {0}")]
    InsufficientScores(usize),

    #[error("mean-to-natural inversion did not converge after {iterations} iterations (residual {residual:e})")]
    InversionFailure { iterations: usize, residual: f64 },

    #[error("initial point has non-finite log-density ({0})")]
    BadInit(f64),

    #[error("statistic requires an odd sample size, got n = {0}")]
    OddSampleRequired(usize),

    #[error("model fit failed: {0}")]
    FitFailure(String),

    #[error("normalizing constant did not converge within {terms} terms")]
    NormalizerDivergence { terms: usize },

    #[error("optimizer did not converge: {0}")]
    OptimFailure(String),

    #[error("{failed} of {total} replications failed (more than 5%)")]
    ExperimentDegraded { failed: usize, total: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
