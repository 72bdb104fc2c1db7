//! Market and liability coefficient model.
//!
//! The market carries a risk-free rate `r`, a stock with drift `mu` and
//! volatility `sigma`, and an uncontrollable liability following a geometric
//! Brownian motion with drift `alpha`, volatility `beta` and stock
//! correlation `rho`. All coefficients are deterministic piecewise-constant
//! curves on `[0, T]`, which keeps every kernel integral analytically
//! reducible per interval.

use crate::error::{AlmError, Result};

/// A right-continuous piecewise-constant function of time on `[0, T]`.
///
/// `breakpoints` holds the `n + 1` interval edges (starting at 0, ending at
/// the horizon) and `values` the `n` per-interval values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl CoefficientCurve {
    /// A curve holding a single value on `[0, horizon]`.
    pub fn constant(value: f64, horizon: f64) -> Self {
        Self {
            breakpoints: vec![0.0, horizon],
            values: vec![value],
        }
    }

    /// Builds a piecewise-constant curve from interval edges and values.
    ///
    /// `breakpoints` must start at 0, be strictly increasing and have exactly
    /// one more entry than `values`.
    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 {
            return Err(AlmError::InvalidCurve(format!(
                "need one more breakpoint than values, got {} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(AlmError::InvalidCurve("curve has no intervals".into()));
        }
        if breakpoints[0] != 0.0 {
            return Err(AlmError::InvalidCurve(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AlmError::InvalidCurve(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return Err(AlmError::InvalidCurve(
                "breakpoints and values must be finite".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Last breakpoint, i.e. the end of the curve's domain.
    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Interval edges.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Per-interval values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the interval containing `t` (right-continuous; `t = T` maps
    /// to the last interval). `t` must lie in `[0, T]`.
    fn interval_index(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(AlmError::TimeOutOfRange {
                t,
                lo: 0.0,
                hi: horizon,
            });
        }
        // partition_point returns the number of edges <= t; the containing
        // interval starts at the previous edge.
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        Ok(idx.saturating_sub(1).min(self.values.len() - 1))
    }

    /// Value of the interval containing `t`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.interval_index(t)?])
    }
}

/// Coefficient values at a single time, including the derived spreads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    /// Excess stock return `theta = mu - r`.
    pub theta: f64,
    /// Surplus/liability drift spread `eta = r - alpha`.
    pub eta: f64,
}

/// The market/liability model: horizon plus the six coefficient curves.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    horizon: f64,
    r: CoefficientCurve,
    mu: CoefficientCurve,
    sigma: CoefficientCurve,
    alpha: CoefficientCurve,
    beta: CoefficientCurve,
    rho: CoefficientCurve,
}

impl MarketModel {
    /// Assembles a model, checking that every curve spans exactly `[0, horizon]`.
    pub fn new(
        horizon: f64,
        r: CoefficientCurve,
        mu: CoefficientCurve,
        sigma: CoefficientCurve,
        alpha: CoefficientCurve,
        beta: CoefficientCurve,
        rho: CoefficientCurve,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(AlmError::InvalidCurve(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        for (name, curve) in [
            ("r", &r),
            ("mu", &mu),
            ("sigma", &sigma),
            ("alpha", &alpha),
            ("beta", &beta),
            ("rho", &rho),
        ] {
            if curve.horizon() != horizon {
                return Err(AlmError::InvalidCurve(format!(
                    "curve {name} ends at {} but the horizon is {horizon}",
                    curve.horizon()
                )));
            }
        }
        Ok(Self {
            horizon,
            r,
            mu,
            sigma,
            alpha,
            beta,
            rho,
        })
    }

    /// Constant-coefficient model, the setting of the numerical studies.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(
        horizon: f64,
        r: f64,
        mu: f64,
        sigma: f64,
        alpha: f64,
        beta: f64,
        rho: f64,
    ) -> Result<Self> {
        Self::new(
            horizon,
            CoefficientCurve::constant(r, horizon),
            CoefficientCurve::constant(mu, horizon),
            CoefficientCurve::constant(sigma, horizon),
            CoefficientCurve::constant(alpha, horizon),
            CoefficientCurve::constant(beta, horizon),
            CoefficientCurve::constant(rho, horizon),
        )
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn r(&self) -> &CoefficientCurve {
        &self.r
    }

    pub fn mu(&self) -> &CoefficientCurve {
        &self.mu
    }

    pub fn sigma(&self) -> &CoefficientCurve {
        &self.sigma
    }

    pub fn alpha(&self) -> &CoefficientCurve {
        &self.alpha
    }

    pub fn beta(&self) -> &CoefficientCurve {
        &self.beta
    }

    pub fn rho(&self) -> &CoefficientCurve {
        &self.rho
    }

    /// Excess stock return `theta(t) = mu(t) - r(t)`.
    pub fn theta(&self, t: f64) -> Result<f64> {
        Ok(self.mu.value_at(t)? - self.r.value_at(t)?)
    }

    /// Drift spread `eta(t) = r(t) - alpha(t)`.
    pub fn eta(&self, t: f64) -> Result<f64> {
        Ok(self.r.value_at(t)? - self.alpha.value_at(t)?)
    }

    /// All coefficient values at `t`, including the derived spreads.
    pub fn coefficients_at(&self, t: f64) -> Result<CoefficientSet> {
        let r = self.r.value_at(t)?;
        let mu = self.mu.value_at(t)?;
        Ok(CoefficientSet {
            r,
            mu,
            sigma: self.sigma.value_at(t)?,
            alpha: self.alpha.value_at(t)?,
            beta: self.beta.value_at(t)?,
            rho: self.rho.value_at(t)?,
            theta: mu - r,
            eta: r - self.alpha.value_at(t)?,
        })
    }

    /// Sorted union of the breakpoints of all six curves.
    pub fn merged_breakpoints(&self) -> Vec<f64> {
        let mut edges: Vec<f64> = Vec::new();
        for curve in [
            &self.r, &self.mu, &self.sigma, &self.alpha, &self.beta, &self.rho,
        ] {
            edges.extend_from_slice(curve.breakpoints());
        }
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup();
        edges
    }

    /// Builds a piecewise-constant curve by evaluating `f` on each interval
    /// of the merged breakpoint grid. The sample point is the interval
    /// midpoint, where every input curve is constant.
    pub fn derive_curve<F>(&self, f: F) -> CoefficientCurve
    where
        F: Fn(&CoefficientSet) -> f64,
    {
        let edges = self.merged_breakpoints();
        let values = edges
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                f(&self.coefficients_at(mid).expect("midpoint inside domain"))
            })
            .collect();
        CoefficientCurve {
            breakpoints: edges,
            values,
        }
    }
}

/// Preference parameters of the state-dependent risk aversion
/// `1 / (omega1 * L^{-lambda} + omega2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskPreferences {
    pub omega1: f64,
    pub omega2: f64,
    pub lambda: f64,
}

impl RiskPreferences {
    pub fn new(omega1: f64, omega2: f64, lambda: f64) -> Self {
        Self {
            omega1,
            omega2,
            lambda,
        }
    }

    /// Weight of the mean term in the objective, `omega1 * l^{-lambda} + omega2`.
    ///
    /// The power is taken in log space to keep precision for extreme `l`.
    pub fn mean_weight(&self, l: f64) -> f64 {
        self.omega1 * neg_lambda_power(l, self.lambda) + self.omega2
    }
}

/// `l^{-lambda}` evaluated as `exp(-lambda * ln l)`.
pub(crate) fn neg_lambda_power(l: f64, lambda: f64) -> f64 {
    (-lambda * l.ln()).exp()
}

/// A point of the bivariate state: time, surplus and liability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    pub t: f64,
    /// Surplus; may be negative, the model places no sign constraint on it.
    pub s: f64,
    /// Liability; strictly positive (a geometric process started above zero).
    pub l: f64,
}

impl StatePoint {
    pub fn new(t: f64, s: f64, l: f64) -> Result<Self> {
        if !(l > 0.0) {
            return Err(AlmError::NonPositiveLiability(l));
        }
        Ok(Self { t, s, l })
    }

    /// Checks `t` against the model horizon.
    pub fn check_against(&self, model: &MarketModel) -> Result<()> {
        if !(0.0..=model.horizon()).contains(&self.t) {
            return Err(AlmError::TimeOutOfRange {
                t: self.t,
                lo: 0.0,
                hi: model.horizon(),
            });
        }
        Ok(())
    }
}

/// One violated model constraint, with the offending field and the time
/// interval on which it fails.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintViolation {
    pub field: String,
    pub interval: (f64, f64),
    pub message: String,
}

impl std::fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} on [{}, {}): {}",
            self.field, self.interval.0, self.interval.1, self.message
        )
    }
}

/// Checks every value constraint of the model and preferences.
///
/// Returns the full list of violations instead of stopping at the first;
/// an empty list means the inputs are usable.
pub fn validate(model: &MarketModel, prefs: &RiskPreferences) -> Vec<ConstraintViolation> {
    let mut violations = Vec::new();
    let edges = model.merged_breakpoints();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let c = model
            .coefficients_at(0.5 * (lo + hi))
            .expect("midpoint inside domain");
        if !(c.sigma > 0.0) {
            violations.push(ConstraintViolation {
                field: "sigma".into(),
                interval: (lo, hi),
                message: format!("sigma(t) > 0 required, got {}", c.sigma),
            });
        }
        if !(c.beta >= 0.0) {
            violations.push(ConstraintViolation {
                field: "beta".into(),
                interval: (lo, hi),
                message: format!("beta(t) >= 0 required, got {}", c.beta),
            });
        }
        if !(0.0..=1.0).contains(&c.rho) {
            violations.push(ConstraintViolation {
                field: "rho".into(),
                interval: (lo, hi),
                message: format!("rho(t) in [0, 1] required, got {}", c.rho),
            });
        }
    }
    let span = (0.0, model.horizon());
    if !(prefs.omega1 >= 0.0) {
        violations.push(ConstraintViolation {
            field: "omega1".into(),
            interval: span,
            message: format!("omega1 >= 0 required, got {}", prefs.omega1),
        });
    }
    if !(prefs.omega2 >= 0.0) {
        violations.push(ConstraintViolation {
            field: "omega2".into(),
            interval: span,
            message: format!("omega2 >= 0 required, got {}", prefs.omega2),
        });
    }
    if !(prefs.lambda >= 0.0) {
        violations.push(ConstraintViolation {
            field: "lambda".into(),
            interval: span,
            message: format!("lambda >= 0 required, got {}", prefs.lambda),
        });
    }
    // omega1 = omega2 = 0 drops the mean term entirely; the risk-aversion
    // reading breaks down, so it is rejected rather than run silently.
    if prefs.omega1 == 0.0 && prefs.omega2 == 0.0 {
        violations.push(ConstraintViolation {
            field: "omega1/omega2".into(),
            interval: span,
            message: "omega1 + omega2 > 0 required; both are zero".into(),
        });
    }
    violations
}
