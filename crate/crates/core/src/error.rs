//! Crate-wide error type.

/// Errors produced by operator calculus, iteration drivers, and integrators.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A domain type invariant or argument contract was violated at construction.
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// `I + eta*A` could not be solved to the resolvent residual contract.
    #[error("resolvent system I + {eta}*A is numerically singular (residual {residual:.3e})")]
    SingularSystem { eta: f64, residual: f64 },

    /// The operator matrix is not invertible, so the comonotonicity modulus is undefined.
    #[error("operator matrix is not invertible")]
    SingularOperator,

    /// Energy shift parameter outside `[0, alpha - 1]`.
    #[error("energy parameter b = {b} outside [0, {hi}]")]
    BOutOfRange { b: f64, hi: f64 },

    #[error("vector field requires positive time, got t = {t}")]
    NonpositiveTime { t: f64 },

    #[error("step size underflow: h = {h:.3e} at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integration exceeded the step budget of {max_steps} steps at t = {t}")]
    StepBudgetExhausted { max_steps: u64, t: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A generator cannot be scaled to the requested comonotonicity modulus.
    #[error("infeasible comonotonicity target {target}: {why}")]
    InfeasibleTarget { target: f64, why: String },

    #[error("problem file: {0}")]
    ProblemFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
