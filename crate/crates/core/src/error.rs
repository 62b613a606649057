use thiserror::Error;

/// Errors raised by the model, simulators and estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StouError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid field sample: {0}")]
    InvalidField(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("lattice has {points} points, exceeding the configured budget of {budget}")]
    BudgetExceeded { points: usize, budget: usize },
    #[error("matrix is not positive definite (pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample variance is zero")]
    DegenerateSample,
    #[error("no usable autocorrelation lags on the {axis} axis")]
    InsufficientUsableLags { axis: &'static str },
    #[error("pair correlation {rho} is too close to one")]
    CorrelationAtUnity { rho: f64 },
    #[error("no subsampling window contains an admissible pair")]
    NoValidWindows,
    #[error("restricted Hessian is singular (condition number {condition:e})")]
    SingularH { condition: f64 },
    #[error("too few estimates: need at least {needed}, got {found}")]
    TooFewEstimates { needed: usize, found: usize },
    #[error("{failed} of {total} bootstrap refits failed (limit is 10%)")]
    FailureRateExceeded { failed: usize, total: usize },
}

pub type Result<T, E = StouError> = std::result::Result<T, E>;
