use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid state space: {0}")]
    InvalidSpace(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid model parameters: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("(alpha I - L) is singular at alpha = {alpha}")]
    Singular { alpha: f64 },

    #[error("negative cemetery defect {defect:e} in row {row} at alpha = {alpha}")]
    NegativeDefect { row: usize, alpha: f64, defect: f64 },

    #[error("kernel row {row} sums to {sum}, not 1")]
    KernelCorruption { row: usize, sum: f64 },

    #[error("function is not {alpha}-excessive (residual {residual:e})")]
    NotExcessive { alpha: f64, residual: f64 },

    #[error("value iteration did not converge after {iterations} sweeps (last change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("increasing limit violated at step {step} by {amount:e}")]
    IncreasingLimitViolated { step: usize, amount: f64 },

    #[error("two constructions of the same object disagree by {residual:e}")]
    Disagreement { residual: f64 },

    #[error("sets are not decreasing at position {index}")]
    SetsNotDecreasing { index: usize },

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("Poisson series needs more than {cap} terms (beta*t = {mean})")]
    SeriesCap { cap: usize, mean: f64 },

    #[error("horizon {horizon} cannot meet bias budget {budget:e}")]
    BiasBudget { horizon: f64, budget: f64 },

    #[error("set is not invariant: state {from} reaches {to} outside it")]
    InvariancePremise { from: usize, to: usize },

    #[error("separating family of {count} functions fails to separate points {x} and {y}")]
    SeparationFailure { count: usize, x: usize, y: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
