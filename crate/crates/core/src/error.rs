use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid percentile grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("xi = {0} is outside the admissible range [1e-4, 1 - 1e-4]")]
    XiOutOfRange(f64),

    #[error("invalid top shares: {0}")]
    InvalidShares(String),

    /// A matrix that must be positive definite failed to factor.
    #[error("{0} is not numerically positive definite")]
    Degenerate(String),

    #[error("shares imply a non-positive tail exponent: {0}")]
    TailViolation(String),

    #[error("sample size n is required to compute {0}")]
    MissingSampleSize(&'static str),

    #[error("the specification test needs K >= 3 groups, got K = {0}")]
    TooFewGroups(usize),

    #[error("need at least {needed} estimates, got {got}")]
    TooFewEstimates { needed: usize, got: usize },

    #[error("significance level {0} exceeds 0.08, where the t-interval is no longer guaranteed conservative")]
    GuaranteeViolation(f64),

    #[error("empty input")]
    EmptyInput,

    #[error("input has zero variance")]
    ZeroVariance,

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("config field `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("{failed} of {total} replications failed (first error: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
