//! Pointwise evaluation of the equilibrium strategy
//! `u*(t, l) = f1(t) L^{-lambda} + f3(t) L + f4(t)`, plus the one-regime
//! comparison strategy it must coincide with when `omega1 = 0`.
//!
//! The control never reads the surplus: the surplus gain `f2` vanishes
//! identically, so `u*` is a feedback of the liability alone.

use crate::error::{AlmError, Result};
use crate::kernels::KernelEngine;
use crate::market::{neg_lambda_power, MarketModel, RiskPreferences, StatePoint};
use crate::numerics::{exp_integral, weighted_tail_integral};

/// The equilibrium control at one state, with its three addends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyEvaluation {
    pub state: StatePoint,
    /// Dollar amount invested in the stock.
    pub u_star: f64,
    /// `f1(t) * l^{-lambda}`.
    pub addend_f1: f64,
    /// `f3(t) * l`.
    pub addend_f3: f64,
    /// `f4(t)`.
    pub addend_f4: f64,
}

/// The comparison-model gain at one time: the kernel `b(t)` and the affine
/// coefficients of `u_hat(t, l) = slope * l + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonGain {
    pub t: f64,
    pub b: f64,
    pub u_hat_slope: f64,
    pub u_hat_intercept: f64,
}

/// Evaluates the equilibrium control at `state`.
pub fn equilibrium_control(
    model: &MarketModel,
    prefs: &RiskPreferences,
    state: &StatePoint,
) -> Result<StrategyEvaluation> {
    state.check_against(model)?;
    if !(state.l > 0.0) {
        return Err(AlmError::NonPositiveLiability(state.l));
    }
    let g = KernelEngine::new(model, prefs).gains(state.t)?;
    let addend_f1 = g.f1 * neg_lambda_power(state.l, prefs.lambda);
    let addend_f3 = g.f3 * state.l;
    let addend_f4 = g.f4;
    Ok(StrategyEvaluation {
        state: *state,
        u_star: addend_f1 + addend_f3 + addend_f4,
        addend_f1,
        addend_f3,
        addend_f4,
    })
}

/// The comparison-model kernel
/// `b(t) = exp(int_t^T r) int_t^T g(z) exp(int_z^t g) dz`
/// with `g = eta + theta rho beta / sigma`; `b(T) = 0`.
pub fn appendix_b(model: &MarketModel, t: f64) -> Result<f64> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(AlmError::TimeOutOfRange {
            t,
            lo: 0.0,
            hi: horizon,
        });
    }
    let g = model.derive_curve(|c| c.eta + c.theta * c.rho * c.beta / c.sigma);
    Ok(exp_integral(model.r(), t, horizon)? * weighted_tail_integral(&g, &g, t, horizon)?)
}

/// Affine coefficients of the comparison strategy at `t`.
///
/// Requires `omega1 = 0`; the comparison model's constant risk aversion is
/// `gamma = 1 / omega2`.
pub fn comparison_gain(
    model: &MarketModel,
    prefs: &RiskPreferences,
    t: f64,
) -> Result<ComparisonGain> {
    if prefs.omega1 != 0.0 {
        return Err(AlmError::Precondition(format!(
            "comparison strategy requires omega1 = 0, got {}",
            prefs.omega1
        )));
    }
    let b = appendix_b(model, t)?;
    let c = model.coefficients_at(t)?;
    let discount = 1.0 / exp_integral(model.r(), t, model.horizon())?;
    Ok(ComparisonGain {
        t,
        b,
        u_hat_slope: c.beta * c.rho / c.sigma * (1.0 - discount * b),
        u_hat_intercept: c.theta * prefs.omega2 / (c.sigma * c.sigma) * discount,
    })
}

/// The comparison strategy `u_hat(t, s, l)`; must agree with
/// [`equilibrium_control`] at every state when `omega1 = 0`.
pub fn appendix_control(
    model: &MarketModel,
    prefs: &RiskPreferences,
    state: &StatePoint,
) -> Result<f64> {
    state.check_against(model)?;
    let gain = comparison_gain(model, prefs, state.t)?;
    Ok(gain.u_hat_slope * state.l + gain.u_hat_intercept)
}
