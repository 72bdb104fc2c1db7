//! The equilibrium value function and the conditional-moment machinery
//! behind it: closed-form moments of `L^q`, `S`, `S L^q` and `S^2` under the
//! equilibrium strategy.
//!
//! Every moment is an exponential-weighted integral of the feedback gains.
//! The exponential weights are exact for piecewise-constant coefficients;
//! the remaining one-dimensional integrals are evaluated by cumulative
//! composite Simpson on a fine per-interval grid, so the layered
//! second-moment coefficients (whose integrands contain the first-moment
//! families evaluated at the inner time) come out of a single pass.

use crate::error::{AlmError, Result};
use crate::kernels::KernelEngine;
use crate::market::{neg_lambda_power, MarketModel, RiskPreferences, StatePoint};

/// Outer Simpson panels per coefficient interval for the moment integrals.
pub const PANELS_PER_INTERVAL: usize = 512;

/// One integral family `(I, II, III)` entering a first-moment closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyCoefficients {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
}

/// All integral coefficients entering the moments from `t` to the horizon.
///
/// The `q`-parameterized cross-moment family is exposed through
/// [`sl_coefficients`] instead of being tabulated over `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCoefficients {
    pub t: f64,
    pub horizon: f64,
    /// Mean-surplus family.
    pub s: FamilyCoefficients,
    /// Second-moment coefficients `I..VI`; these depend on the conditioning
    /// state through the inhomogeneous term.
    pub s2: [f64; 6],
}

/// The equilibrium value at one state with its moment breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueBreakdown {
    pub state: StatePoint,
    pub mean_st: f64,
    pub second_moment_st: f64,
    pub variance_st: f64,
    pub value: f64,
}

/// `E_t[L^q(s)] = l^q exp(int_t^s q [alpha - (1-q) beta^2 / 2] dy)`.
pub fn moment_lq(model: &MarketModel, state: &StatePoint, q: f64, s: f64) -> Result<f64> {
    state.check_against(model)?;
    if !(state.t..=model.horizon()).contains(&s) {
        return Err(AlmError::TimeOutOfRange {
            t: s,
            lo: state.t,
            hi: model.horizon(),
        });
    }
    if !(state.l > 0.0) {
        return Err(AlmError::NonPositiveLiability(state.l));
    }
    let i_alpha = crate::numerics::integrate_curve(model.alpha(), state.t, s)?;
    let beta2 = model.derive_curve(|c| c.beta * c.beta);
    let i_beta2 = crate::numerics::integrate_curve(&beta2, state.t, s)?;
    let exponent = q * (i_alpha - 0.5 * (1.0 - q) * i_beta2);
    Ok((q * state.l.ln() + exponent).exp())
}

/// `E_t[S(T)]` under the equilibrium strategy.
pub fn mean_s(model: &MarketModel, prefs: &RiskPreferences, state: &StatePoint) -> Result<f64> {
    state.check_against(model)?;
    if state.t == model.horizon() {
        return Ok(state.s);
    }
    let table = MomentTable::new(model, prefs, state.t)?;
    Ok(table.mean(state))
}

/// `E_t[S(T) L^q(T)]` under the equilibrium strategy.
pub fn cross_moment_slq(
    model: &MarketModel,
    prefs: &RiskPreferences,
    state: &StatePoint,
    q: f64,
) -> Result<f64> {
    state.check_against(model)?;
    if !(state.l > 0.0) {
        return Err(AlmError::NonPositiveLiability(state.l));
    }
    if state.t == model.horizon() {
        return Ok(state.s * (q * state.l.ln()).exp());
    }
    let table = MomentTable::new(model, prefs, state.t)?;
    Ok(table.cross(state, q))
}

/// `E_t[S^2(T)]` under the equilibrium strategy.
pub fn second_moment_s(
    model: &MarketModel,
    prefs: &RiskPreferences,
    state: &StatePoint,
) -> Result<f64> {
    state.check_against(model)?;
    if state.t == model.horizon() {
        return Ok(state.s * state.s);
    }
    let table = MomentTable::new(model, prefs, state.t)?;
    Ok(table.second_moment(state))
}

/// The equilibrium value
/// `V = E_t[S^2(T)]/2 - (E_t[S(T)])^2/2 - (omega1 l^{-lambda} + omega2) E_t[S(T)]`
/// with its moment breakdown.
pub fn value(
    model: &MarketModel,
    prefs: &RiskPreferences,
    state: &StatePoint,
) -> Result<ValueBreakdown> {
    state.check_against(model)?;
    if !(state.l > 0.0) {
        return Err(AlmError::NonPositiveLiability(state.l));
    }
    let (mean, second) = if state.t == model.horizon() {
        (state.s, state.s * state.s)
    } else {
        let table = MomentTable::new(model, prefs, state.t)?;
        (table.mean(state), table.second_moment(state))
    };
    let variance = second - mean * mean;
    let weight = prefs.mean_weight(state.l);
    Ok(ValueBreakdown {
        state: *state,
        mean_st: mean,
        second_moment_st: second,
        variance_st: variance,
        value: 0.5 * second - 0.5 * mean * mean - weight * mean,
    })
}

/// The mean-surplus family `(S_I, S_II, S_III)(t, T)`.
pub fn s_coefficients(
    model: &MarketModel,
    prefs: &RiskPreferences,
    t: f64,
) -> Result<FamilyCoefficients> {
    if t == model.horizon() {
        return Ok(FamilyCoefficients {
            i: 0.0,
            ii: 0.0,
            iii: 0.0,
        });
    }
    let table = MomentTable::new(model, prefs, t)?;
    let [i, ii, iii] = table.s_families();
    Ok(FamilyCoefficients {
        i: *i.last().unwrap(),
        ii: *ii.last().unwrap(),
        iii: *iii.last().unwrap(),
    })
}

/// The cross-moment family `(SL_I, SL_II, SL_III)(t, T, q)`.
pub fn sl_coefficients(
    model: &MarketModel,
    prefs: &RiskPreferences,
    t: f64,
    q: f64,
) -> Result<FamilyCoefficients> {
    if t == model.horizon() {
        return Ok(FamilyCoefficients {
            i: 0.0,
            ii: 0.0,
            iii: 0.0,
        });
    }
    let table = MomentTable::new(model, prefs, t)?;
    let [i, ii, iii] = table.sl_families(q);
    Ok(FamilyCoefficients {
        i: *i.last().unwrap(),
        ii: *ii.last().unwrap(),
        iii: *iii.last().unwrap(),
    })
}

/// All moment coefficients at `state` (the second-moment entries depend on
/// the state through the inhomogeneous term). Every entry vanishes at
/// `t = T`.
pub fn moment_coefficients(
    model: &MarketModel,
    prefs: &RiskPreferences,
    state: &StatePoint,
) -> Result<MomentCoefficients> {
    state.check_against(model)?;
    let horizon = model.horizon();
    if state.t == horizon {
        return Ok(MomentCoefficients {
            t: state.t,
            horizon,
            s: FamilyCoefficients {
                i: 0.0,
                ii: 0.0,
                iii: 0.0,
            },
            s2: [0.0; 6],
        });
    }
    let table = MomentTable::new(model, prefs, state.t)?;
    let [i, ii, iii] = table.s_families();
    Ok(MomentCoefficients {
        t: state.t,
        horizon,
        s: FamilyCoefficients {
            i: *i.last().unwrap(),
            ii: *ii.last().unwrap(),
            iii: *iii.last().unwrap(),
        },
        s2: table.s2_coefficients(state),
    })
}

/// Fine-grid tabulation over `[t, T]`: exact prefix integrals of the
/// primitive rates, gains at every node, and cumulative-Simpson machinery.
struct MomentTable {
    nodes: Vec<f64>,
    /// Exact prefix integrals from `t` of r, eta, alpha and beta^2.
    p_r: Vec<f64>,
    p_eta: Vec<f64>,
    p_alpha: Vec<f64>,
    p_beta2: Vec<f64>,
    theta: Vec<f64>,
    sigma: Vec<f64>,
    eta: Vec<f64>,
    rho_beta: Vec<f64>,
    beta2: Vec<f64>,
    f1: Vec<f64>,
    f3: Vec<f64>,
    f4: Vec<f64>,
    lambda: f64,
}

impl MomentTable {
    fn new(model: &MarketModel, prefs: &RiskPreferences, t: f64) -> Result<Self> {
        let horizon = model.horizon();
        if !(0.0..horizon).contains(&t) {
            return Err(AlmError::TimeOutOfRange {
                t,
                lo: 0.0,
                hi: horizon,
            });
        }
        // per-interval uniform nodes; an even segment count per interval so
        // Simpson node triples never cross a breakpoint
        let mut edges: Vec<f64> = model
            .merged_breakpoints()
            .into_iter()
            .filter(|&x| x > t && x < horizon)
            .collect();
        edges.insert(0, t);
        edges.push(horizon);
        let segments_per_interval = 2 * PANELS_PER_INTERVAL;
        let mut nodes = Vec::with_capacity(edges.len() * segments_per_interval + 1);
        nodes.push(t);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            for k in 1..=segments_per_interval {
                nodes.push(a + (b - a) * k as f64 / segments_per_interval as f64);
            }
            *nodes.last_mut().unwrap() = b;
        }

        let n = nodes.len();
        let engine = KernelEngine::new(model, prefs);
        let mut table = Self {
            nodes,
            p_r: vec![0.0; n],
            p_eta: vec![0.0; n],
            p_alpha: vec![0.0; n],
            p_beta2: vec![0.0; n],
            theta: vec![0.0; n],
            sigma: vec![0.0; n],
            eta: vec![0.0; n],
            rho_beta: vec![0.0; n],
            beta2: vec![0.0; n],
            f1: vec![0.0; n],
            f3: vec![0.0; n],
            f4: vec![0.0; n],
            lambda: prefs.lambda,
        };
        for i in 0..n {
            let x = table.nodes[i];
            let c = model.coefficients_at(x)?;
            table.theta[i] = c.theta;
            table.sigma[i] = c.sigma;
            table.eta[i] = c.eta;
            table.rho_beta[i] = c.rho * c.beta;
            table.beta2[i] = c.beta * c.beta;
            let g = engine.gains(x)?;
            table.f1[i] = g.f1;
            table.f3[i] = g.f3;
            table.f4[i] = g.f4;
            if i > 0 {
                // coefficients are constant on each segment; sample its midpoint
                let dt = x - table.nodes[i - 1];
                let m = model.coefficients_at(0.5 * (x + table.nodes[i - 1]))?;
                table.p_r[i] = table.p_r[i - 1] + m.r * dt;
                table.p_eta[i] = table.p_eta[i - 1] + m.eta * dt;
                table.p_alpha[i] = table.p_alpha[i - 1] + m.alpha * dt;
                table.p_beta2[i] = table.p_beta2[i - 1] + m.beta * m.beta * dt;
            }
        }
        Ok(table)
    }

    fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Cumulative Simpson prefix of `y` at every node; each node triple is
    /// uniformly spaced, so quadratic-fit partial integrals apply.
    fn cumulative(&self, y: &[f64]) -> Vec<f64> {
        let mut cum = vec![0.0; y.len()];
        let mut i = 0;
        while i + 2 < y.len() {
            let h = self.nodes[i + 1] - self.nodes[i];
            cum[i + 1] = cum[i] + h / 12.0 * (5.0 * y[i] + 8.0 * y[i + 1] - y[i + 2]);
            cum[i + 2] = cum[i] + h / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
            i += 2;
        }
        cum
    }

    /// Total Simpson integral of `y` over the whole grid.
    fn total(&self, y: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut i = 0;
        while i + 2 < y.len() {
            let h = self.nodes[i + 1] - self.nodes[i];
            sum += h / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
            i += 2;
        }
        sum
    }

    /// Tabulates `X(v) = int_t^v load(w) exp(int_w^v rate) dw` at every node,
    /// written as `exp(P(v)) * int_t^v load(w) exp(-P(w)) dw` with `P` the
    /// exact prefix of the rate.
    fn weighted_family(&self, load: impl Fn(usize) -> f64, rate_prefix: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = (0..self.n())
            .map(|i| load(i) * (-rate_prefix[i]).exp())
            .collect();
        let mut cum = self.cumulative(&y);
        for i in 0..self.n() {
            cum[i] *= rate_prefix[i].exp();
        }
        cum
    }

    fn s_rate_prefixes(&self) -> [Vec<f64>; 3] {
        let lam = self.lambda;
        let ii: Vec<f64> = (0..self.n())
            .map(|i| {
                self.p_r[i] + lam * self.p_alpha[i] - 0.5 * lam * (lam + 1.0) * self.p_beta2[i]
            })
            .collect();
        [self.p_eta.clone(), ii, self.p_r.clone()]
    }

    /// `S_I, S_II, S_III` at every node.
    fn s_families(&self) -> [Vec<f64>; 3] {
        let [r1, r2, r3] = self.s_rate_prefixes();
        [
            self.weighted_family(|i| self.eta[i] + self.theta[i] * self.f3[i], &r1),
            self.weighted_family(|i| self.theta[i] * self.f1[i], &r2),
            self.weighted_family(|i| self.theta[i] * self.f4[i], &r3),
        ]
    }

    /// `SL_I, SL_II, SL_III` at every node for one `q`.
    fn sl_families(&self, q: f64) -> [Vec<f64>; 3] {
        let lam = self.lambda;
        let n = self.n();
        let xi: Vec<f64> = (0..n)
            .map(|i| self.theta[i] + q * self.sigma[i] * self.rho_beta[i])
            .collect();
        let r1: Vec<f64> = (0..n).map(|i| self.p_eta[i] - q * self.p_beta2[i]).collect();
        let r2: Vec<f64> = (0..n)
            .map(|i| {
                self.p_r[i] + lam * self.p_alpha[i]
                    - 0.5 * lam * (lam - 2.0 * q + 1.0) * self.p_beta2[i]
            })
            .collect();
        [
            self.weighted_family(
                |i| self.eta[i] + xi[i] * self.f3[i] - q * self.beta2[i],
                &r1,
            ),
            self.weighted_family(|i| xi[i] * self.f1[i], &r2),
            self.weighted_family(|i| xi[i] * self.f4[i], &self.p_r),
        ]
    }

    fn mean(&self, state: &StatePoint) -> f64 {
        let last = self.n() - 1;
        let [s_i, s_ii, s_iii] = self.s_families();
        let lam = self.lambda;
        let e_l = state.l * self.p_alpha[last].exp();
        let e_l_neg_lam = neg_lambda_power(state.l, lam)
            * (-lam * (self.p_alpha[last] - 0.5 * (1.0 + lam) * self.p_beta2[last])).exp();
        state.s * self.p_r[last].exp()
            + s_i[last] * e_l
            + s_ii[last] * e_l_neg_lam
            + s_iii[last]
    }

    fn terminal_lq(&self, l: f64, q: f64) -> f64 {
        let last = self.n() - 1;
        (q * l.ln() + q * (self.p_alpha[last] - 0.5 * (1.0 - q) * self.p_beta2[last])).exp()
    }

    fn cross(&self, state: &StatePoint, q: f64) -> f64 {
        let last = self.n() - 1;
        let [sl_i, sl_ii, sl_iii] = self.sl_families(q);
        let growth =
            self.p_r[last] + q * (self.p_alpha[last] - 0.5 * (1.0 - q) * self.p_beta2[last]);
        state.s * (q * state.l.ln() + growth).exp()
            + sl_i[last] * self.terminal_lq(state.l, q + 1.0)
            + sl_ii[last] * self.terminal_lq(state.l, q - self.lambda)
            + sl_iii[last] * self.terminal_lq(state.l, q)
    }

    /// The six layered coefficients of the second moment at `state`.
    fn s2_coefficients(&self, state: &StatePoint) -> [f64; 6] {
        let n = self.n();
        let lam = self.lambda;
        let [s_i, s_ii, s_iii] = self.s_families();
        let [sl1_i, sl1_ii, sl1_iii] = self.sl_families(1.0);
        let [sll_i, sll_ii, sll_iii] = self.sl_families(-lam);

        // exponent prefixes of the six outer weights
        let d: [Vec<f64>; 6] = [
            (0..n).map(|i| 2.0 * self.p_r[i] - self.p_alpha[i]).collect(),
            (0..n).map(|i| 2.0 * self.p_eta[i] - self.p_beta2[i]).collect(),
            (0..n)
                .map(|i| {
                    2.0 * self.p_r[i] + lam * self.p_alpha[i]
                        - 0.5 * lam * (lam + 1.0) * self.p_beta2[i]
                })
                .collect(),
            (0..n)
                .map(|i| {
                    2.0 * self.p_r[i]
                        + (lam - 1.0) * (self.p_alpha[i] - 0.5 * lam * self.p_beta2[i])
                })
                .collect(),
            (0..n)
                .map(|i| {
                    2.0 * self.p_r[i]
                        + 2.0 * lam * (self.p_alpha[i] - 0.5 * (2.0 * lam + 1.0) * self.p_beta2[i])
                })
                .collect(),
            (0..n).map(|i| 2.0 * self.p_r[i]).collect(),
        ];

        let l_neg_lam = neg_lambda_power(state.l, lam);
        let mut out = [0.0; 6];
        let mut integrand = vec![0.0; n];
        for (slot, d_x) in d.iter().enumerate() {
            let d_last = d_x[n - 1];
            for i in 0..n {
                let drift = self.eta[i] + self.theta[i] * self.f3[i];
                let cross_vol = self.sigma[i] * (self.sigma[i] * self.f3[i] - self.rho_beta[i]);
                let x = match slot {
                    0 => {
                        2.0 * self.theta[i] * self.f4[i] * s_i[i]
                            + 2.0 * drift * sl1_iii[i]
                            + 2.0 * cross_vol * self.f4[i]
                    }
                    1 => {
                        2.0 * drift * sl1_i[i]
                            + self.sigma[i] * self.sigma[i] * self.f3[i] * self.f3[i]
                            - 2.0 * self.rho_beta[i] * self.sigma[i] * self.f3[i]
                            + self.beta2[i]
                    }
                    2 => {
                        2.0 * self.theta[i] * self.f4[i] * s_ii[i]
                            + 2.0 * self.theta[i] * self.f1[i] * sll_iii[i]
                            + 2.0 * self.sigma[i] * self.sigma[i] * self.f1[i] * self.f4[i]
                    }
                    3 => {
                        2.0 * drift * sl1_ii[i]
                            + 2.0 * self.theta[i] * self.f1[i] * sll_i[i]
                            + 2.0 * cross_vol * self.f1[i]
                    }
                    4 => {
                        2.0 * self.theta[i] * self.f1[i] * sll_ii[i]
                            + self.sigma[i] * self.sigma[i] * self.f1[i] * self.f1[i]
                    }
                    _ => {
                        let grown_s = state.s * self.p_r[i].exp() + s_iii[i];
                        2.0 * self.theta[i] * self.f4[i] * grown_s
                            + 2.0 * state.s
                                * state.l
                                * (self.p_r[i] + self.p_alpha[i]).exp()
                                * drift
                            + 2.0 * state.s
                                * l_neg_lam
                                * (self.p_r[i]
                                    - lam
                                        * (self.p_alpha[i]
                                            - 0.5 * (1.0 + lam) * self.p_beta2[i]))
                                    .exp()
                                * self.theta[i]
                                * self.f1[i]
                            + self.sigma[i] * self.sigma[i] * self.f4[i] * self.f4[i]
                    }
                };
                integrand[i] = (d_last - d_x[i]).exp() * x;
            }
            out[slot] = self.total(&integrand);
        }
        out
    }

    fn second_moment(&self, state: &StatePoint) -> f64 {
        let last = self.n() - 1;
        let s2 = self.s2_coefficients(state);
        state.s * state.s * (2.0 * self.p_r[last]).exp()
            + s2[0] * self.terminal_lq(state.l, 1.0)
            + s2[1] * self.terminal_lq(state.l, 2.0)
            + s2[2] * self.terminal_lq(state.l, -self.lambda)
            + s2[3] * self.terminal_lq(state.l, 1.0 - self.lambda)
            + s2[4] * self.terminal_lq(state.l, -2.0 * self.lambda)
            + s2[5]
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

    fn state(t: f64) -> StatePoint {
        StatePoint::new(t, 5.0, 3.0).unwrap()
    }

    #[test]
    fn moment_lq_reference_values() {
        let m = baseline();
        assert_eq!(moment_lq(&m, &state(0.0), 0.0, 10.0).unwrap(), 1.0);
        assert_relative_eq!(
            moment_lq(&m, &state(0.0), 1.0, 10.0).unwrap(),
            8.154_845_485_377_136,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            moment_lq(&m, &state(0.0), -0.5, 10.0).unwrap(),
            0.406_851_858_293_822_3,
            max_relative = 1e-13
        );
    }

    #[test]
    fn moment_lq_semigroup() {
        let m = baseline();
        let full = moment_lq(&m, &state(0.0), 2.0, 10.0).unwrap();
        let first = moment_lq(&m, &state(0.0), 2.0, 6.0).unwrap();
        let unit_l = StatePoint::new(6.0, 0.0, 1.0).unwrap();
        let second = moment_lq(&m, &unit_l, 2.0, 10.0).unwrap();
        assert_relative_eq!(full, first * second, max_relative = 1e-13);
    }

    #[test]
    fn terminal_degeneracies() {
        let m = baseline();
        let p = prefs();
        let st = state(10.0);
        assert_eq!(mean_s(&m, &p, &st).unwrap(), 5.0);
        assert_eq!(second_moment_s(&m, &p, &st).unwrap(), 25.0);
        assert_relative_eq!(
            cross_moment_slq(&m, &p, &st, 1.0).unwrap(),
            15.0,
            max_relative = 1e-14
        );
        let v = value(&m, &p, &st).unwrap();
        assert_eq!(v.variance_st, 0.0);
        let weight = 3.0f64.powf(-0.5) + 1.0;
        assert_relative_eq!(v.value, -weight * 5.0, max_relative = 1e-14);
        let coeffs = moment_coefficients(&m, &p, &st).unwrap();
        assert_eq!(coeffs.s2, [0.0; 6]);
        assert_eq!((coeffs.s.i, coeffs.s.ii, coeffs.s.iii), (0.0, 0.0, 0.0));
    }

    #[test]
    fn cross_moment_at_q_zero_is_mean() {
        let m = baseline();
        let p = prefs();
        for t in [0.0, 5.0, 8.0] {
            let mean = mean_s(&m, &p, &state(t)).unwrap();
            let cross = cross_moment_slq(&m, &p, &state(t), 0.0).unwrap();
            assert_relative_eq!(mean, cross, max_relative = 1e-12);
        }
    }

    // Reference values below were computed with an independent adaptive
    // quadrature implementation of the same moment formulas.
    #[test]
    fn mean_reference_values() {
        let m = baseline();
        let p = prefs();
        assert_relative_eq!(
            mean_s(&m, &p, &state(0.0)).unwrap(),
            71.0096139146,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            mean_s(&m, &p, &state(5.0)).unwrap(),
            34.7342891623,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            mean_s(&m, &p, &state(8.0)).unwrap(),
            16.2959103395,
            max_relative = 1e-8
        );
    }

    #[test]
    fn cross_moment_reference_values() {
        let m = baseline();
        let p = prefs();
        assert_relative_eq!(
            cross_moment_slq(&m, &p, &state(0.0), 1.0).unwrap(),
            584.083831601,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            cross_moment_slq(&m, &p, &state(5.0), 1.0).unwrap(),
            175.716719602,
            max_relative = 1e-8
        );
    }

    #[test]
    fn second_moment_reference_values() {
        let m = baseline();
        let p = prefs();
        assert_relative_eq!(
            second_moment_s(&m, &p, &state(0.0)).unwrap(),
            5122.7260019,
            max_relative = 1e-7
        );
        assert_relative_eq!(
            second_moment_s(&m, &p, &state(5.0)).unwrap(),
            1242.78007951,
            max_relative = 1e-7
        );
        assert_relative_eq!(
            second_moment_s(&m, &p, &state(8.0)).unwrap(),
            279.827617595,
            max_relative = 1e-7
        );
    }

    #[test]
    fn value_reference_values() {
        let m = baseline();
        let p = prefs();
        for (t, expected) in [
            (0.0, -71.8266668263),
            (5.0, -36.6335224117),
            (8.0, -18.5688966603),
        ] {
            let v = value(&m, &p, &state(t)).unwrap();
            assert_relative_eq!(v.value, expected, max_relative = 1e-5);
            assert!(v.variance_st >= 0.0);
            assert_relative_eq!(
                v.value,
                0.5 * v.second_moment_st - 0.5 * v.mean_st * v.mean_st
                    - (3.0f64.powf(-0.5) + 1.0) * v.mean_st,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn value_decreases_in_omega1() {
        let m = baseline();
        for t in [0.0, 5.0, 8.0] {
            let mut last = f64::INFINITY;
            for omega1 in [0.5, 1.0, 2.0] {
                let p = RiskPreferences::new(omega1, 1.0, 0.5);
                let v = value(&m, &p, &state(t)).unwrap().value;
                assert!(v < last, "t={t} omega1={omega1}: {v} !< {last}");
                last = v;
            }
        }
    }

    #[test]
    fn mean_with_zero_theta_matches_hand_solution() {
        // mu = r kills every control term:
        // E_t[S(T)] = s e^{r tau} + l (e^{r tau} - e^{alpha tau}), tau = T - t
        let m = MarketModel::constant(10.0, 0.1, 0.1, 0.3, 0.04, 0.2, 0.6).unwrap();
        let p = prefs();
        let st = StatePoint::new(2.0, 5.0, 3.0).unwrap();
        let tau: f64 = 8.0;
        let expected =
            5.0 * (0.1 * tau).exp() + 3.0 * ((0.1 * tau).exp() - (0.04 * tau).exp());
        assert_relative_eq!(mean_s(&m, &p, &st).unwrap(), expected, max_relative = 1e-9);
    }

    #[test]
    fn variance_nonnegative_across_states() {
        let m = baseline();
        let p = prefs();
        for t in [0.0, 2.5, 5.0, 7.5, 9.9] {
            for l in [0.5, 3.0, 10.0] {
                for s in [-10.0, 0.0, 5.0] {
                    let st = StatePoint::new(t, s, l).unwrap();
                    let v = value(&m, &p, &st).unwrap();
                    assert!(
                        v.variance_st >= -1e-9 * v.second_moment_st.abs(),
                        "variance {} at t={t} s={s} l={l}",
                        v.variance_st
                    );
                }
            }
        }
    }
}
