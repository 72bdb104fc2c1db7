//! Deterministic kernel functions `M1..M10` and the feedback gains
//! `f1..f4` of the equilibrium strategy.
//!
//! The kernels solve the ten backward ODEs that reduce the adjoint equation
//! to deterministic functions of time. For piecewise-constant coefficients
//! the solutions have exact per-interval closed forms:
//!
//! ```text
//! M2(t) =  exp(int_t^T 2r),            M5 = -M2
//! M7(t) = -omega1 * exp(int_t^T r),    M8 = M9 = 0
//! M10(t) = -omega2 * exp(int_t^T r)
//! M1(t) =  omega1 * exp(int_t^T r) * int_t^T exp(int_z^t c1) (theta/sigma)^2(z) dz,  M4 = -M1
//! M3(t) =  exp(int_t^T 2r) * int_t^T exp(int_z^t g) g(z) dz,                         M6 = -M3
//! ```
//!
//! with `c1 = lambda [alpha - (lambda+1) beta^2 / 2] - lambda theta rho beta / sigma`
//! and `g = eta + theta rho beta / sigma`. The defining ODEs are kept as
//! residual tests; a composite-Simpson route provides an independent
//! quadrature oracle for `M1` and `M3`.

use crate::error::{AlmError, Result};
use crate::market::{MarketModel, RiskPreferences};
use crate::numerics::{
    self, central_difference, exp_integral, weighted_tail_integral, TimeGrid,
    ORACLE_PANELS_PER_INTERVAL,
};
use crate::util::csv_float;

/// Values of the ten kernels at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub m5: f64,
    pub m6: f64,
    pub m7: f64,
    pub m8: f64,
    pub m9: f64,
    pub m10: f64,
}

/// Feedback gains of the equilibrium control `u* = f1 L^{-lambda} + f3 L + f4`.
///
/// `f2`, the surplus gain, vanishes identically because `M2 + M5 + M8 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainValues {
    pub t: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

/// Kernels and gains tabulated on a time grid.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    grid: TimeGrid,
    rows: Vec<(KernelValues, GainValues)>,
}

/// Pre-derived coefficient curves shared by the kernel evaluations.
pub(crate) struct KernelEngine<'a> {
    model: &'a MarketModel,
    prefs: RiskPreferences,
    two_r: crate::market::CoefficientCurve,
    /// `c1`, the decay rate inside the `M1` tail integral.
    m1_decay: crate::market::CoefficientCurve,
    /// `(theta / sigma)^2`, the load of the `M1` tail integral.
    m1_load: crate::market::CoefficientCurve,
    /// `g = eta + theta rho beta / sigma`, rate and load of the `M3` integral.
    m3_rate: crate::market::CoefficientCurve,
}

impl<'a> KernelEngine<'a> {
    pub(crate) fn new(model: &'a MarketModel, prefs: &RiskPreferences) -> Self {
        let lambda = prefs.lambda;
        Self {
            model,
            prefs: *prefs,
            two_r: model.derive_curve(|c| 2.0 * c.r),
            m1_decay: model.derive_curve(|c| {
                lambda * (c.alpha - 0.5 * (lambda + 1.0) * c.beta * c.beta)
                    - lambda * c.theta * c.rho * c.beta / c.sigma
            }),
            m1_load: model.derive_curve(|c| (c.theta / c.sigma) * (c.theta / c.sigma)),
            m3_rate: model.derive_curve(|c| c.eta + c.theta * c.rho * c.beta / c.sigma),
        }
    }

    fn horizon(&self) -> f64 {
        self.model.horizon()
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(AlmError::TimeOutOfRange {
                t,
                lo: 0.0,
                hi: self.horizon(),
            });
        }
        Ok(())
    }

    pub(crate) fn m2(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        exp_integral(&self.two_r, t, self.horizon())
    }

    pub(crate) fn m7(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(-self.prefs.omega1 * exp_integral(self.model.r(), t, self.horizon())?)
    }

    pub(crate) fn m10(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(-self.prefs.omega2 * exp_integral(self.model.r(), t, self.horizon())?)
    }

    pub(crate) fn m1(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let tail = weighted_tail_integral(&self.m1_decay, &self.m1_load, t, self.horizon())?;
        Ok(self.prefs.omega1 * exp_integral(self.model.r(), t, self.horizon())? * tail)
    }

    pub(crate) fn m3(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let tail = weighted_tail_integral(&self.m3_rate, &self.m3_rate, t, self.horizon())?;
        Ok(self.m2(t)? * tail)
    }

    pub(crate) fn kernel_values(&self, t: f64) -> Result<KernelValues> {
        let m1 = self.m1(t)?;
        let m2 = self.m2(t)?;
        let m3 = self.m3(t)?;
        Ok(KernelValues {
            t,
            m1,
            m2,
            m3,
            m4: -m1,
            m5: -m2,
            m6: -m3,
            m7: self.m7(t)?,
            m8: 0.0,
            m9: 0.0,
            m10: self.m10(t)?,
        })
    }

    pub(crate) fn gains(&self, t: f64) -> Result<GainValues> {
        let c = self.model.coefficients_at(t)?;
        let m1 = self.m1(t)?;
        let m2 = self.m2(t)?;
        let m3 = self.m3(t)?;
        let m7 = self.m7(t)?;
        let m10 = self.m10(t)?;
        let sig2_m2 = c.sigma * c.sigma * m2;
        Ok(GainValues {
            t,
            f1: -(c.theta * m7 - self.prefs.lambda * c.sigma * c.rho * c.beta * m1) / sig2_m2,
            f2: 0.0,
            f3: c.rho * c.beta / c.sigma * (1.0 - m3 / m2),
            f4: -c.theta * m10 / sig2_m2,
        })
    }

    /// Quadrature oracle for `M1`: brute-force composite Simpson over the
    /// tail variable, independent of the per-interval closed form.
    pub(crate) fn m1_simpson(&self, t: f64, panels_per_interval: usize) -> Result<f64> {
        self.check(t)?;
        let tail = self.simpson_tail(&self.m1_decay, &self.m1_load, t, panels_per_interval)?;
        Ok(self.prefs.omega1 * exp_integral(self.model.r(), t, self.horizon())? * tail)
    }

    /// Quadrature oracle for `M3`.
    pub(crate) fn m3_simpson(&self, t: f64, panels_per_interval: usize) -> Result<f64> {
        self.check(t)?;
        let tail = self.simpson_tail(&self.m3_rate, &self.m3_rate, t, panels_per_interval)?;
        Ok(self.m2(t)? * tail)
    }

    fn simpson_tail(
        &self,
        c: &crate::market::CoefficientCurve,
        g: &crate::market::CoefficientCurve,
        t: f64,
        panels: usize,
    ) -> Result<f64> {
        let horizon = self.horizon();
        let f = |z: f64| {
            let inner = -numerics::integrate_curve(c, t, z).expect("z within [t, T]");
            inner.exp() * g.value_at(z).expect("z within domain")
        };
        // split at breakpoints so the panels only see smooth pieces
        let mut edges: Vec<f64> = self
            .model
            .merged_breakpoints()
            .into_iter()
            .filter(|&x| x > t && x < horizon)
            .collect();
        edges.insert(0, t);
        edges.push(horizon);
        Ok(edges
            .windows(2)
            .map(|w| numerics::integrate_simpson(f, w[0], w[1], panels))
            .sum())
    }
}

/// `M2(t) = exp(int_t^T 2 r dy)`.
pub fn m2(model: &MarketModel, t: f64) -> Result<f64> {
    KernelEngine::new(model, &RiskPreferences::new(0.0, 0.0, 0.0)).m2(t)
}

/// `M5(t) = -M2(t)`.
pub fn m5(model: &MarketModel, t: f64) -> Result<f64> {
    Ok(-m2(model, t)?)
}

/// `M7(t) = -omega1 * exp(int_t^T r dy)`.
pub fn m7(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<f64> {
    KernelEngine::new(model, prefs).m7(t)
}

/// `M10(t) = -omega2 * exp(int_t^T r dy)`.
pub fn m10(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<f64> {
    KernelEngine::new(model, prefs).m10(t)
}

/// `M1(t)`, the liability-power kernel, from its closed form.
pub fn m1(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<f64> {
    KernelEngine::new(model, prefs).m1(t)
}

/// `M4(t) = -M1(t)`.
pub fn m4(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<f64> {
    Ok(-m1(model, prefs, t)?)
}

/// `M3(t)`, the liability-level kernel, from its closed form.
pub fn m3(model: &MarketModel, t: f64) -> Result<f64> {
    KernelEngine::new(model, &RiskPreferences::new(0.0, 0.0, 0.0)).m3(t)
}

/// `M6(t) = -M3(t)`.
pub fn m6(model: &MarketModel, t: f64) -> Result<f64> {
    Ok(-m3(model, t)?)
}

/// All ten kernel values at `t`.
pub fn kernel_values(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<KernelValues> {
    KernelEngine::new(model, prefs).kernel_values(t)
}

/// Feedback gains at `t`.
pub fn gains(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<GainValues> {
    KernelEngine::new(model, prefs).gains(t)
}

/// Quadrature-oracle evaluation of `M1(t)` (composite Simpson,
/// [`ORACLE_PANELS_PER_INTERVAL`] panels per coefficient interval).
pub fn m1_oracle(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<f64> {
    KernelEngine::new(model, prefs).m1_simpson(t, ORACLE_PANELS_PER_INTERVAL)
}

/// Quadrature-oracle evaluation of `M3(t)`.
pub fn m3_oracle(model: &MarketModel, t: f64) -> Result<f64> {
    KernelEngine::new(model, &RiskPreferences::new(0.0, 0.0, 0.0))
        .m3_simpson(t, ORACLE_PANELS_PER_INTERVAL)
}

/// Left-hand sides of the ten defining ODEs evaluated with the closed-form
/// kernels and a central-difference time derivative of step `h`; every entry
/// should vanish up to `O(h^2)`.
///
/// The stencil `(t - h, t + h)` must stay inside `[0, T]` and may not cross
/// a coefficient breakpoint.
pub fn ode_residuals(
    model: &MarketModel,
    prefs: &RiskPreferences,
    t: f64,
    h: f64,
) -> Result<[f64; 10]> {
    let engine = KernelEngine::new(model, prefs);
    let horizon = model.horizon();
    if t - h < 0.0 || t + h > horizon {
        return Err(AlmError::TimeOutOfRange {
            t,
            lo: h,
            hi: horizon - h,
        });
    }
    let breakpoints = model.merged_breakpoints();
    // interior breakpoints only; the stencil may touch 0 or T
    let interior: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > 0.0 && b < horizon)
        .collect();

    let d = |f: &dyn Fn(f64) -> f64| central_difference(f, t, h, &interior);
    let dm1 = d(&|x| engine.m1(x).expect("stencil inside domain"))?;
    let dm2 = d(&|x| engine.m2(x).expect("stencil inside domain"))?;
    let dm3 = d(&|x| engine.m3(x).expect("stencil inside domain"))?;
    let dm7 = d(&|x| engine.m7(x).expect("stencil inside domain"))?;
    let dm10 = d(&|x| engine.m10(x).expect("stencil inside domain"))?;
    let k = engine.kernel_values(t)?;
    let c = model.coefficients_at(t)?;
    let lambda = prefs.lambda;

    let q = c.theta * c.theta / (c.sigma * c.sigma);
    let w = c.theta * c.rho * c.beta / c.sigma;
    let decay = c.r - lambda * (c.alpha - 0.5 * (lambda + 1.0) * c.beta * c.beta);
    let sum147 = k.m1 + k.m4 + k.m7;
    let sum258 = k.m2 + k.m5 + k.m8;
    let sum369 = k.m3 + k.m6 + k.m9;
    let ratio5 = k.m5 / k.m2;

    Ok([
        dm1 + decay * k.m1 - (q * sum147 - lambda * w * k.m1),
        dm2 + 2.0 * c.r * k.m2 - q * sum258,
        dm3 + (c.r + c.alpha) * k.m3 + c.eta * k.m2 - (q * sum369 - w * (k.m2 - k.m3)),
        -dm1 + decay * k.m4 - ratio5 * (q * sum147 - lambda * w * k.m1),
        -dm2 + 2.0 * c.r * k.m5 - ratio5 * q * sum258,
        -dm3 + (c.r + c.alpha) * k.m6 + c.eta * k.m5 - ratio5 * (q * sum369 - w * (k.m2 - k.m3)),
        dm7 + c.r * k.m7,
        c.r * k.m8,
        c.r * k.m9,
        dm10 + c.r * k.m10 - q * k.m10 - ratio5 * q * k.m10,
    ])
}

/// Tabulates kernels and gains on `grid`.
///
/// The grid must span `[0, T]` and contain every coefficient breakpoint.
pub fn build_schedule(
    model: &MarketModel,
    prefs: &RiskPreferences,
    grid: &TimeGrid,
) -> Result<GainSchedule> {
    let (lo, hi) = grid.span();
    let horizon = model.horizon();
    if lo != 0.0 || (hi - horizon).abs() > 1e-12 * horizon {
        return Err(AlmError::InvalidConfig(format!(
            "schedule grid spans [{lo}, {hi}] but the model horizon is [0, {horizon}]"
        )));
    }
    if !grid.covers(&model.merged_breakpoints()) {
        return Err(AlmError::InvalidConfig(
            "schedule grid is missing coefficient breakpoints".into(),
        ));
    }
    let engine = KernelEngine::new(model, prefs);
    let rows = grid
        .nodes()
        .iter()
        .map(|&t| Ok((engine.kernel_values(t)?, engine.gains(t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GainSchedule {
        grid: grid.clone(),
        rows,
    })
}

impl GainSchedule {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rows(&self) -> &[(KernelValues, GainValues)] {
        &self.rows
    }

    /// Writes the schedule as CSV with columns `t,m1..m10,f1,f2,f3,f4`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10,f1,f2,f3,f4")?;
        for (k, g) in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_float(k.t),
                csv_float(k.m1),
                csv_float(k.m2),
                csv_float(k.m3),
                csv_float(k.m4),
                csv_float(k.m5),
                csv_float(k.m6),
                csv_float(k.m7),
                csv_float(k.m8),
                csv_float(k.m9),
                csv_float(k.m10),
                csv_float(g.f1),
                csv_float(g.f2),
                csv_float(g.f3),
                csv_float(g.f4),
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn baseline() -> MarketModel {
        MarketModel::constant(10.0, 0.1, 0.6, 0.3, 0.1, 0.2, 0.6).unwrap()
    }

    fn prefs() -> RiskPreferences {
        RiskPreferences::new(1.0, 1.0, 0.5)
    }

    #[test]
    fn m2_values() {
        let m = baseline();
        assert_relative_eq!(m2(&m, 0.0).unwrap(), (2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(m2(&m, 5.0).unwrap(), (1.0f64).exp(), max_relative = 1e-14);
        assert_eq!(m2(&m, 10.0).unwrap(), 1.0);
        assert_eq!(m5(&m, 10.0).unwrap(), -1.0);
    }

    #[test]
    fn m7_and_m10_values() {
        let m = baseline();
        assert_relative_eq!(
            m7(&m, &prefs(), 0.0).unwrap(),
            -(1.0f64).exp(),
            max_relative = 1e-14
        );
        let no_omega1 = RiskPreferences::new(0.0, 1.0, 0.5);
        for t in [0.0, 3.7, 10.0] {
            assert_eq!(m7(&m, &no_omega1, t).unwrap(), 0.0);
        }
        let half = RiskPreferences::new(1.0, 0.5, 0.5);
        assert_eq!(m10(&m, &half, 10.0).unwrap(), -0.5);
    }

    #[test]
    fn m1_reference_values() {
        let m = baseline();
        // e * (25/9) * (e^{0.65} - 1) / 0.065
        assert_relative_eq!(
            m1(&m, &prefs(), 0.0).unwrap(),
            106.35461532994887,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            m1(&m, &prefs(), 5.0).unwrap(),
            27.058098061075878,
            max_relative = 1e-12
        );
        assert_eq!(m1(&m, &prefs(), 10.0).unwrap(), 0.0);
        let no_omega1 = RiskPreferences::new(0.0, 1.0, 0.5);
        for t in [0.0, 4.0, 10.0] {
            assert_eq!(m1(&m, &no_omega1, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn m3_reference_values() {
        let m = baseline();
        // e^2 - 1
        assert_relative_eq!(m3(&m, 0.0).unwrap(), 6.389_056_098_930_65, max_relative = 1e-12);
        assert_eq!(m3(&m, 10.0).unwrap(), 0.0);
        // rho = 0 and eta = 0 kill the integrand
        let dead = MarketModel::constant(10.0, 0.1, 0.6, 0.3, 0.1, 0.2, 0.0).unwrap();
        assert_eq!(m3(&dead, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn gains_reference_values() {
        let m = baseline();
        let g = gains(&m, &prefs(), 0.0).unwrap();
        assert_relative_eq!(g.f1, 4.922_481_071_014_603, max_relative = 1e-12);
        assert_eq!(g.f2, 0.0);
        assert_relative_eq!(g.f3, 0.054134113294645084, max_relative = 1e-12);
        assert_relative_eq!(g.f4, 2.0437746731746795, max_relative = 1e-12);
    }

    #[test]
    fn gains_terminal_values() {
        let m = baseline();
        let g = gains(&m, &prefs(), 10.0).unwrap();
        assert_relative_eq!(g.f3, 0.4, max_relative = 1e-14);
        assert_relative_eq!(g.f4, 0.5 / 0.09, max_relative = 1e-14);
    }

    #[test]
    fn f1_vanishes_without_omega1() {
        let m = baseline();
        let p = RiskPreferences::new(0.0, 1.0, 0.5);
        for t in [0.0, 2.5, 7.0, 10.0] {
            assert_eq!(gains(&m, &p, t).unwrap().f1, 0.0);
        }
    }

    #[test]
    fn kernel_identities() {
        let m = baseline();
        for t in [0.0, 1.5, 6.0, 10.0] {
            let k = kernel_values(&m, &prefs(), t).unwrap();
            assert_eq!(k.m4, -k.m1);
            assert_eq!(k.m5, -k.m2);
            assert_eq!(k.m6, -k.m3);
            assert_eq!(k.m8, 0.0);
            assert_eq!(k.m9, 0.0);
        }
    }

    #[test]
    fn terminal_conditions() {
        let m = baseline();
        let p = RiskPreferences::new(0.7, 0.3, 0.5);
        let k = kernel_values(&m, &p, 10.0).unwrap();
        assert_eq!(
            (k.m1, k.m2, k.m3, k.m4, k.m5, k.m6, k.m7, k.m8, k.m9, k.m10),
            (0.0, 1.0, 0.0, 0.0, -1.0, 0.0, -0.7, 0.0, 0.0, -0.3)
        );
    }

    #[test]
    fn homogeneity_in_preferences() {
        let m = baseline();
        for t in [0.0, 4.0, 9.0] {
            let base = m1(&m, &RiskPreferences::new(1.0, 1.0, 0.5), t).unwrap();
            let tripled = m1(&m, &RiskPreferences::new(3.0, 1.0, 0.5), t).unwrap();
            assert_relative_eq!(tripled, 3.0 * base, max_relative = 1e-14);

            let f4_base = gains(&m, &RiskPreferences::new(1.0, 1.0, 0.5), t).unwrap().f4;
            let f4_double = gains(&m, &RiskPreferences::new(1.0, 2.0, 0.5), t)
                .unwrap()
                .f4;
            assert_relative_eq!(f4_double, 2.0 * f4_base, max_relative = 1e-14);
        }
    }

    #[test]
    fn oracle_equivalence_constant_model() {
        let m = baseline();
        for t in [0.0, 2.0, 5.0, 9.0] {
            let closed = m1(&m, &prefs(), t).unwrap();
            let oracle = m1_oracle(&m, &prefs(), t).unwrap();
            assert_relative_eq!(closed, oracle, max_relative = 1e-9);
            let closed3 = m3(&m, t).unwrap();
            let oracle3 = m3_oracle(&m, t).unwrap();
            assert_relative_eq!(closed3, oracle3, max_relative = 1e-9);
        }
    }

    #[test]
    fn oracle_equivalence_piecewise_model() {
        use crate::market::CoefficientCurve;
        let m = MarketModel::new(
            10.0,
            CoefficientCurve::piecewise(vec![0.0, 4.0, 10.0], vec![0.1, 0.05]).unwrap(),
            CoefficientCurve::piecewise(vec![0.0, 6.0, 10.0], vec![0.6, 0.3]).unwrap(),
            CoefficientCurve::constant(0.3, 10.0),
            CoefficientCurve::constant(0.1, 10.0),
            CoefficientCurve::piecewise(vec![0.0, 2.0, 10.0], vec![0.2, 0.3]).unwrap(),
            CoefficientCurve::constant(0.6, 10.0),
        )
        .unwrap();
        for t in [0.0, 1.0, 4.0, 5.0, 8.5] {
            assert_relative_eq!(
                m1(&m, &prefs(), t).unwrap(),
                m1_oracle(&m, &prefs(), t).unwrap(),
                max_relative = 1e-8
            );
            assert_relative_eq!(
                m3(&m, t).unwrap(),
                m3_oracle(&m, t).unwrap(),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn residuals_vanish_on_baseline() {
        let m = baseline();
        let res = ode_residuals(&m, &prefs(), 5.0, 1e-4).unwrap();
        for (i, r) in res.iter().enumerate() {
            assert!(r.abs() < 1e-4, "residual {i} = {r}");
        }
        // the M8 equation holds exactly
        assert_eq!(res[7], 0.0);
        let near_terminal = ode_residuals(&m, &prefs(), 10.0 - 1e-4, 1e-4).unwrap();
        assert!(near_terminal.iter().all(|r| r.abs() < 1e-4));
    }

    #[test]
    fn residuals_reject_breakpoint_straddle() {
        use crate::market::CoefficientCurve;
        let m = MarketModel::new(
            10.0,
            CoefficientCurve::constant(0.1, 10.0),
            CoefficientCurve::piecewise(vec![0.0, 5.0, 10.0], vec![0.6, 0.4]).unwrap(),
            CoefficientCurve::constant(0.3, 10.0),
            CoefficientCurve::constant(0.1, 10.0),
            CoefficientCurve::constant(0.2, 10.0),
            CoefficientCurve::constant(0.6, 10.0),
        )
        .unwrap();
        assert!(matches!(
            ode_residuals(&m, &prefs(), 5.00005, 1e-4),
            Err(AlmError::StencilStraddle { .. })
        ));
    }

    #[test]
    fn schedule_rows_align_with_grid() {
        let m = baseline();
        let grid = TimeGrid::uniform(0.0, 10.0, 101).unwrap();
        let schedule = build_schedule(&m, &prefs(), &grid).unwrap();
        assert_eq!(schedule.rows().len(), 101);
        let (k, g) = schedule.rows().last().unwrap();
        assert_eq!(k.m2, 1.0);
        assert_relative_eq!(g.f3, 0.4, max_relative = 1e-14);
        let (k0, g0) = &schedule.rows()[0];
        assert_relative_eq!(k0.m1, 106.35461532994887, max_relative = 1e-12);
        assert_relative_eq!(g0.f1, 4.922_481_071_014_603, max_relative = 1e-12);
    }

    #[test]
    fn schedule_rejects_misaligned_grid() {
        use crate::market::CoefficientCurve;
        let m = MarketModel::new(
            10.0,
            CoefficientCurve::constant(0.1, 10.0),
            CoefficientCurve::piecewise(vec![0.0, 3.3, 10.0], vec![0.6, 0.4]).unwrap(),
            CoefficientCurve::constant(0.3, 10.0),
            CoefficientCurve::constant(0.1, 10.0),
            CoefficientCurve::constant(0.2, 10.0),
            CoefficientCurve::constant(0.6, 10.0),
        )
        .unwrap();
        let grid = TimeGrid::uniform(0.0, 10.0, 11).unwrap();
        assert!(matches!(
            build_schedule(&m, &prefs(), &grid),
            Err(AlmError::InvalidConfig(_))
        ));
    }
}
