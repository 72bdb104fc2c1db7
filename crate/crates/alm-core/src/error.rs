//! Error types shared across the crate.

/// Errors raised by model construction, evaluation and simulation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlmError {
    /// A time argument fell outside the domain it must live in.
    #[error("time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    /// An integration range with `a > b`.
    #[error("integration bounds out of order: a = {a} > b = {b}")]
    BadInterval { a: f64, b: f64 },

    /// A coefficient curve that violates its structural constraints.
    #[error("invalid coefficient curve: {0}")]
    InvalidCurve(String),

    /// A state with non-positive liability.
    #[error("liability must be positive, got {0}")]
    NonPositiveLiability(f64),

    /// A finite-difference stencil that crosses a coefficient breakpoint.
    #[error("stencil ({lo}, {hi}) straddles a coefficient breakpoint at {breakpoint}")]
    StencilStraddle { lo: f64, hi: f64, breakpoint: f64 },

    /// A configuration value that makes the requested run meaningless.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A violated operation precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, AlmError>;
