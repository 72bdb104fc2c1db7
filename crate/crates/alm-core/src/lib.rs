//! Closed-form equilibrium strategies and value functions for mean-variance
//! asset-liability management with liability-dependent risk aversion, plus
//! the quadrature and Monte Carlo machinery that verifies them.
//!
//! The model: a surplus process driven by a stock position and an
//! uncontrollable geometric-Brownian liability, optimized under the
//! time-inconsistent mean-variance objective
//! `J = Var_t[S(T)]/2 - (omega1 L^{-lambda}(t) + omega2) E_t[S(T)]`.
//! The open-loop equilibrium control is a feedback of the liability alone,
//!
//! ```text
//! u*(t) = f1(t) L^{-lambda}(t) + f3(t) L(t) + f4(t),
//! ```
//!
//! with gains built from deterministic kernel functions that solve a system
//! of backward ODEs in closed form.
//!
//! Module map:
//! - [`market`]: coefficient curves, preferences, state points, validation
//! - [`numerics`]: exact piecewise integrals, Simpson oracle, differences
//! - [`kernels`]: the kernel functions `M1..M10` and gains `f1..f4`
//! - [`strategy`]: pointwise equilibrium control and the comparison model
//! - [`valuation`]: conditional moments and the equilibrium value function
//! - [`simulation`]: Monte Carlo engine and the spike-perturbation check
//!
//! The simulation engine parallelizes across paths with rayon when the
//! default `parallel` feature is enabled; results are bit-identical either
//! way because every path draws from its own counter-derived substream and
//! reductions run in path order.

// Guards are written as `!(x > 0.0)` so NaN inputs fail validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernels;
pub mod market;
pub mod numerics;
pub mod simulation;
pub mod strategy;
pub mod util;
pub mod valuation;

pub use error::{AlmError, Result};
pub use market::{
    validate, CoefficientCurve, ConstraintViolation, MarketModel, RiskPreferences, StatePoint,
};
