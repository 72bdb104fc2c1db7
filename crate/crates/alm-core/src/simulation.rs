//! Monte Carlo engine: simulates the controlled surplus/liability pair under
//! an arbitrary strategy, estimates the mean-variance cost, and checks the
//! equilibrium property by spike perturbations on common random numbers.
//!
//! The liability is advanced exactly in log space (its per-step increments
//! are log-normal), while the surplus uses Euler-Maruyama on the same
//! Brownian increments with the strategy evaluated at each step's left
//! endpoint. Each path draws from its own counter-derived substream, so
//! results are bit-identical for a given seed regardless of worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{AlmError, Result};
use crate::kernels::KernelEngine;
use crate::market::{neg_lambda_power, MarketModel, RiskPreferences, StatePoint};
use crate::numerics::TimeGrid;
use crate::valuation;

/// Monte Carlo run configuration. The seed is required explicitly; there is
/// no ambient randomness anywhere in the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub paths: usize,
    /// Step count for the uniform partition of `[t, T]` (refined with any
    /// coefficient breakpoints so the exact liability step applies within
    /// each step).
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(paths: usize, steps: usize, seed: u64) -> Self {
        Self {
            paths,
            steps,
            seed,
            antithetic: false,
        }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.paths < 2 || self.steps < 1 {
            return Err(AlmError::InvalidConfig(format!(
                "need paths >= 2 and steps >= 1, got paths = {}, steps = {}",
                self.paths, self.steps
            )));
        }
        if self.antithetic && !self.paths.is_multiple_of(2) {
            return Err(AlmError::InvalidConfig(format!(
                "antithetic sampling needs an even path count, got {}",
                self.paths
            )));
        }
        Ok(())
    }
}

/// A control rule evaluated along simulated paths.
///
/// `k` is the index of the current step on the simulation grid, provided so
/// tabulated strategies can avoid a time lookup.
pub trait Strategy: Sync {
    fn control(&self, k: usize, t: f64, s: f64, l: f64) -> f64;
}

impl<F> Strategy for F
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    fn control(&self, _k: usize, t: f64, s: f64, l: f64) -> f64 {
        self(t, s, l)
    }
}

/// The equilibrium feedback `u* = f1 L^{-lambda} + f3 L + f4` tabulated on a
/// simulation grid.
#[derive(Debug, Clone)]
pub struct EquilibriumStrategy {
    times: Vec<f64>,
    f1: Vec<f64>,
    f3: Vec<f64>,
    f4: Vec<f64>,
    lambda: f64,
}

impl EquilibriumStrategy {
    /// Evaluates the gains at every node of `times`.
    pub fn tabulate(model: &MarketModel, prefs: &RiskPreferences, times: &[f64]) -> Result<Self> {
        let engine = KernelEngine::new(model, prefs);
        let mut f1 = Vec::with_capacity(times.len());
        let mut f3 = Vec::with_capacity(times.len());
        let mut f4 = Vec::with_capacity(times.len());
        for &t in times {
            let g = engine.gains(t)?;
            f1.push(g.f1);
            f3.push(g.f3);
            f4.push(g.f4);
        }
        Ok(Self {
            times: times.to_vec(),
            f1,
            f3,
            f4,
            lambda: prefs.lambda,
        })
    }

    /// Returns a copy with the constant gain scaled; a deliberately wrong
    /// control used as the negative control of the equilibrium check.
    pub fn with_scaled_f4(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.f4 {
            *v *= scale;
        }
        out
    }
}

impl Strategy for EquilibriumStrategy {
    fn control(&self, k: usize, t: f64, _s: f64, l: f64) -> f64 {
        debug_assert!((self.times[k] - t).abs() <= 1e-9 * self.times.last().unwrap().max(1.0));
        self.f1[k] * neg_lambda_power(l, self.lambda) + self.f3[k] * l + self.f4[k]
    }
}

/// `base` plus a constant spike `v` on the window `[from, until)`.
#[derive(Debug, Clone, Copy)]
pub struct SpikePerturbation<'a, S: Strategy> {
    pub base: &'a S,
    pub v: f64,
    pub from: f64,
    pub until: f64,
}

impl<S: Strategy> Strategy for SpikePerturbation<'_, S> {
    fn control(&self, k: usize, t: f64, s: f64, l: f64) -> f64 {
        let spike = if t >= self.from && t < self.until {
            self.v
        } else {
            0.0
        };
        self.base.control(k, t, s, l) + spike
    }
}

/// Simulation grid on `[t0, T]`: `steps` uniform steps refined with every
/// coefficient breakpoint, so per-step coefficients are exact.
pub fn step_times(model: &MarketModel, t0: f64, steps: usize) -> Result<Vec<f64>> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t0) {
        return Err(AlmError::TimeOutOfRange {
            t: t0,
            lo: 0.0,
            hi: horizon,
        });
    }
    if t0 == horizon {
        return Ok(vec![horizon]);
    }
    let grid = TimeGrid::refined(t0, horizon, steps + 1, &model.merged_breakpoints())?;
    Ok(grid.nodes().to_vec())
}

/// Per-step coefficient table; everything the inner loop needs, evaluated at
/// left endpoints (exact within each step after breakpoint refinement).
struct StepTable {
    times: Vec<f64>,
    dt: Vec<f64>,
    sqrt_dt: Vec<f64>,
    r: Vec<f64>,
    eta: Vec<f64>,
    theta: Vec<f64>,
    sigma: Vec<f64>,
    rho_beta: Vec<f64>,
    beta_perp: Vec<f64>,
    /// Exact log-drift of the liability over the step, `(alpha - beta^2/2) dt`.
    l_log_drift: Vec<f64>,
}

impl StepTable {
    fn new(model: &MarketModel, times: Vec<f64>) -> Result<Self> {
        let n = times.len().saturating_sub(1);
        let mut tbl = Self {
            dt: Vec::with_capacity(n),
            sqrt_dt: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
            rho_beta: Vec::with_capacity(n),
            beta_perp: Vec::with_capacity(n),
            l_log_drift: Vec::with_capacity(n),
            times,
        };
        for k in 0..n {
            let dt = tbl.times[k + 1] - tbl.times[k];
            let c = model.coefficients_at(tbl.times[k])?;
            tbl.dt.push(dt);
            tbl.sqrt_dt.push(dt.sqrt());
            tbl.r.push(c.r);
            tbl.eta.push(c.eta);
            tbl.theta.push(c.theta);
            tbl.sigma.push(c.sigma);
            tbl.rho_beta.push(c.rho * c.beta);
            tbl.beta_perp.push((1.0 - c.rho * c.rho).max(0.0).sqrt() * c.beta);
            tbl.l_log_drift.push((c.alpha - 0.5 * c.beta * c.beta) * dt);
        }
        Ok(tbl)
    }

    fn steps(&self) -> usize {
        self.dt.len()
    }
}

/// One path's substream: stream index is the path (or antithetic pair) index.
fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Advances one path, invoking `record` after each step with
/// `(k, dw1, dw2, s, l)`. Returns the terminal `(s, l)`.
fn run_path<S: Strategy, R: FnMut(usize, f64, f64, f64, f64)>(
    tbl: &StepTable,
    strategy: &S,
    state: &StatePoint,
    cfg: &SimConfig,
    path_index: usize,
    mut record: R,
) -> (f64, f64) {
    let (stream, sign) = if cfg.antithetic {
        let sign = if path_index.is_multiple_of(2) { 1.0 } else { -1.0 };
        ((path_index / 2) as u64, sign)
    } else {
        (path_index as u64, 1.0)
    };
    let (s0, l0) = (state.s, state.l);
    let mut rng = path_rng(cfg.seed, stream);
    let mut s = s0;
    let mut l = l0;
    for k in 0..tbl.steps() {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let dw1 = sign * z1 * tbl.sqrt_dt[k];
        let dw2 = sign * z2 * tbl.sqrt_dt[k];
        let u = strategy.control(k, tbl.times[k], s, l);
        s += (tbl.r[k] * s + tbl.eta[k] * l + tbl.theta[k] * u) * tbl.dt[k]
            + (tbl.sigma[k] * u - tbl.rho_beta[k] * l) * dw1
            - tbl.beta_perp[k] * l * dw2;
        l *= (tbl.l_log_drift[k] + tbl.rho_beta[k] * dw1 + tbl.beta_perp[k] * dw2).exp();
        record(k, dw1, dw2, s, l);
    }
    (s, l)
}

/// Simulated Brownian increments and state trajectories for a batch of
/// paths, stored row-major per path.
#[derive(Debug, Clone)]
pub struct PathBatch {
    times: Vec<f64>,
    dw1: Vec<f64>,
    dw2: Vec<f64>,
    surplus: Vec<f64>,
    liability: Vec<f64>,
    paths: usize,
}

impl PathBatch {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn surplus_path(&self, i: usize) -> &[f64] {
        let w = self.times.len();
        &self.surplus[i * w..(i + 1) * w]
    }

    pub fn liability_path(&self, i: usize) -> &[f64] {
        let w = self.times.len();
        &self.liability[i * w..(i + 1) * w]
    }

    pub fn increments_path(&self, i: usize) -> (&[f64], &[f64]) {
        let w = self.steps();
        (&self.dw1[i * w..(i + 1) * w], &self.dw2[i * w..(i + 1) * w])
    }

    pub fn terminal_surplus(&self) -> Vec<f64> {
        (0..self.paths)
            .map(|i| *self.surplus_path(i).last().unwrap())
            .collect()
    }

    pub fn terminal_liability(&self) -> Vec<f64> {
        (0..self.paths)
            .map(|i| *self.liability_path(i).last().unwrap())
            .collect()
    }
}

/// Terminal `(S(T), L(T))` values per path, in path order.
#[derive(Debug, Clone)]
pub struct TerminalBatch {
    pub surplus: Vec<f64>,
    pub liability: Vec<f64>,
}

fn check_inputs(model: &MarketModel, state: &StatePoint, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    state.check_against(model)?;
    if !(state.l > 0.0) {
        return Err(AlmError::NonPositiveLiability(state.l));
    }
    Ok(())
}

/// Simulates full trajectories under `strategy` from `state`.
pub fn simulate<S: Strategy>(
    model: &MarketModel,
    strategy: &S,
    state: &StatePoint,
    cfg: &SimConfig,
) -> Result<PathBatch> {
    check_inputs(model, state, cfg)?;
    let tbl = StepTable::new(model, step_times(model, state.t, cfg.steps)?)?;
    let n = tbl.steps();
    let width = n + 1;
    let paths = cfg.paths;
    let mut dw1 = vec![0.0; paths * n];
    let mut dw2 = vec![0.0; paths * n];
    let mut surplus = vec![0.0; paths * width];
    let mut liability = vec![0.0; paths * width];

    let fill = |i: usize, d1: &mut [f64], d2: &mut [f64], srow: &mut [f64], lrow: &mut [f64]| {
        srow[0] = state.s;
        lrow[0] = state.l;
        run_path(&tbl, strategy, state, cfg, i, |k, w1, w2, s, l| {
            d1[k] = w1;
            d2[k] = w2;
            srow[k + 1] = s;
            lrow[k + 1] = l;
        });
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        dw1.par_chunks_mut(n.max(1))
            .zip(dw2.par_chunks_mut(n.max(1)))
            .zip(surplus.par_chunks_mut(width))
            .zip(liability.par_chunks_mut(width))
            .enumerate()
            .for_each(|(i, (((d1, d2), srow), lrow))| fill(i, d1, d2, srow, lrow));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, (((d1, d2), srow), lrow)) in dw1
            .chunks_mut(n.max(1))
            .zip(dw2.chunks_mut(n.max(1)))
            .zip(surplus.chunks_mut(width))
            .zip(liability.chunks_mut(width))
            .enumerate()
        {
            fill(i, d1, d2, srow, lrow);
        }
    }

    Ok(PathBatch {
        times: tbl.times,
        dw1,
        dw2,
        surplus,
        liability,
        paths,
    })
}

/// Simulates terminal values only; the workhorse of the cost estimators.
pub fn simulate_terminals<S: Strategy>(
    model: &MarketModel,
    strategy: &S,
    state: &StatePoint,
    cfg: &SimConfig,
) -> Result<TerminalBatch> {
    check_inputs(model, state, cfg)?;
    let tbl = StepTable::new(model, step_times(model, state.t, cfg.steps)?)?;
    let one = |i: usize| run_path(&tbl, strategy, state, cfg, i, |_, _, _, _, _| {});

    #[cfg(feature = "parallel")]
    let pairs: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        (0..cfg.paths).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<(f64, f64)> = (0..cfg.paths).map(one).collect();

    let (surplus, liability) = pairs.into_iter().unzip();
    Ok(TerminalBatch { surplus, liability })
}

/// Single-threaded reference run; bit-identical to [`simulate_terminals`]
/// for any worker count.
pub fn simulate_terminals_seq<S: Strategy>(
    model: &MarketModel,
    strategy: &S,
    state: &StatePoint,
    cfg: &SimConfig,
) -> Result<TerminalBatch> {
    check_inputs(model, state, cfg)?;
    let tbl = StepTable::new(model, step_times(model, state.t, cfg.steps)?)?;
    let mut surplus = Vec::with_capacity(cfg.paths);
    let mut liability = Vec::with_capacity(cfg.paths);
    for i in 0..cfg.paths {
        let (s, l) = run_path(&tbl, strategy, state, cfg, i, |_, _, _, _, _| {});
        surplus.push(s);
        liability.push(l);
    }
    Ok(TerminalBatch { surplus, liability })
}

/// Sample central moments accumulated in fixed path order.
struct SampleMoments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl SampleMoments {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { n, mean, m2 }
    }

    fn variance(&self) -> f64 {
        if self.n > 1.0 {
            self.m2 * self.n / (self.n - 1.0)
        } else {
            0.0
        }
    }
}

/// A Monte Carlo estimate of the mean-variance cost
/// `J = Var[S(T)]/2 - (omega1 l^{-lambda} + omega2) E[S(T)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub j_hat: f64,
    /// Delta-method standard error of `j_hat` over the joint moments.
    pub std_error: f64,
    pub mean_st: f64,
    pub mean_std_error: f64,
    pub var_st: f64,
    pub var_std_error: f64,
}

/// Per-path influence value of the cost functional; the spread of these is
/// the delta-method standard error.
fn cost_influence(x: f64, moments: &SampleMoments, weight: f64) -> f64 {
    let d = x - moments.mean;
    0.5 * (d * d - moments.m2) - weight * d
}

/// Reduces antithetic pairs to their averages so standard errors treat each
/// pair as one independent sample.
fn pair_average(xs: &[f64]) -> Vec<f64> {
    xs.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

fn std_error_of(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Estimates the cost functional under `strategy` from `state`.
pub fn estimate_cost<S: Strategy>(
    model: &MarketModel,
    prefs: &RiskPreferences,
    strategy: &S,
    state: &StatePoint,
    cfg: &SimConfig,
) -> Result<CostEstimate> {
    let terminals = simulate_terminals(model, strategy, state, cfg)?;
    Ok(cost_from_terminals(
        &terminals.surplus,
        prefs.mean_weight(state.l),
        cfg.antithetic,
    ))
}

fn cost_from_terminals(surplus: &[f64], weight: f64, antithetic: bool) -> CostEstimate {
    let m = SampleMoments::of(surplus);
    let j_hat = 0.5 * m.variance() - weight * m.mean;
    let influences: Vec<f64> = surplus
        .iter()
        .map(|&x| cost_influence(x, &m, weight))
        .collect();
    let centered_sq: Vec<f64> = surplus
        .iter()
        .map(|&x| (x - m.mean) * (x - m.mean))
        .collect();
    let (mean_samples, infl_samples, sq_samples) = if antithetic {
        (
            pair_average(surplus),
            pair_average(&influences),
            pair_average(&centered_sq),
        )
    } else {
        (surplus.to_vec(), influences, centered_sq)
    };
    CostEstimate {
        j_hat,
        std_error: std_error_of(&infl_samples),
        mean_st: m.mean,
        mean_std_error: std_error_of(&mean_samples),
        var_st: m.variance(),
        var_std_error: std_error_of(&sq_samples),
    }
}

/// One rung of the spike-perturbation ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationRatio {
    pub epsilon: f64,
    /// `(J_perturbed - J_star) / epsilon`.
    pub ratio: f64,
    /// Paired (common-random-numbers) standard error of the ratio.
    pub std_error: f64,
    pub pass: bool,
}

/// Result of the open-loop equilibrium check at one `(t, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub t: f64,
    pub v: f64,
    pub ratios: Vec<PerturbationRatio>,
    /// True iff every ratio clears `-3` standard errors.
    pub verdict: bool,
}

impl PerturbationReport {
    pub fn epsilons(&self) -> Vec<f64> {
        self.ratios.iter().map(|r| r.epsilon).collect()
    }
}

/// Checks the defining inequality of an open-loop equilibrium: perturbs the
/// equilibrium control by the constant `v` on `[t, t + epsilon)`, re-simulates
/// on identical Brownian increments, and requires each difference quotient
/// `(J_perturbed - J_star) / epsilon` to stay above `-3` paired standard
/// errors.
pub fn perturbation_test(
    model: &MarketModel,
    prefs: &RiskPreferences,
    state: &StatePoint,
    v: f64,
    epsilons: &[f64],
    cfg: &SimConfig,
) -> Result<PerturbationReport> {
    let strategy = EquilibriumStrategy::tabulate(model, prefs, &step_times(model, state.t, cfg.steps)?)?;
    perturbation_test_with(model, prefs, &strategy, state, v, epsilons, cfg)
}

/// [`perturbation_test`] against an explicit base strategy (used for
/// negative controls with a corrupted control law).
pub fn perturbation_test_with<S: Strategy>(
    model: &MarketModel,
    prefs: &RiskPreferences,
    base_strategy: &S,
    state: &StatePoint,
    v: f64,
    epsilons: &[f64],
    cfg: &SimConfig,
) -> Result<PerturbationReport> {
    if epsilons.is_empty()
        || epsilons.iter().any(|&e| !(e > 0.0))
        || epsilons.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(AlmError::InvalidConfig(
            "epsilons must be non-empty, positive and strictly decreasing".into(),
        ));
    }
    let max_eps = epsilons[0];
    if state.t + max_eps > model.horizon() {
        return Err(AlmError::Precondition(format!(
            "t + max(epsilon) = {} exceeds the horizon {}",
            state.t + max_eps,
            model.horizon()
        )));
    }

    let weight = prefs.mean_weight(state.l);
    let base = simulate_terminals(model, base_strategy, state, cfg)?;
    let base_m = SampleMoments::of(&base.surplus);
    let base_j = 0.5 * base_m.variance() - weight * base_m.mean;

    let mut ratios = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let perturbed_strategy = SpikePerturbation {
            base: base_strategy,
            v,
            from: state.t,
            until: state.t + eps,
        };
        let pert = simulate_terminals(model, &perturbed_strategy, state, cfg)?;
        let pert_m = SampleMoments::of(&pert.surplus);
        let pert_j = 0.5 * pert_m.variance() - weight * pert_m.mean;

        // paired influence differences; identical increments make this exact
        // for v = 0 and tight for小 eps
        let diffs: Vec<f64> = base
            .surplus
            .iter()
            .zip(&pert.surplus)
            .map(|(&b, &p)| {
                cost_influence(p, &pert_m, weight) - cost_influence(b, &base_m, weight)
            })
            .collect();
        let diffs = if cfg.antithetic {
            pair_average(&diffs)
        } else {
            diffs
        };
        let ratio = (pert_j - base_j) / eps;
        let std_error = std_error_of(&diffs) / eps;
        ratios.push(PerturbationRatio {
            epsilon: eps,
            ratio,
            std_error,
            pass: ratio >= -3.0 * std_error,
        });
    }
    let verdict = ratios.iter().all(|r| r.pass);
    Ok(PerturbationReport {
        t: state.t,
        v,
        ratios,
        verdict,
    })
}

/// Conditional mean of the stationarity process,
/// `E_t[Lambda(s; t)] = theta(s) M7(s) (l_t^{-lambda} - E_t[L^{-lambda}(s)])`;
/// the three centered brackets of `Lambda` have zero conditional mean. Must
/// tend to zero as `s` falls to `t`.
pub fn lambda_mean(
    model: &MarketModel,
    prefs: &RiskPreferences,
    t: f64,
    s_eval: f64,
    l_t: f64,
) -> Result<f64> {
    if !(t..=model.horizon()).contains(&s_eval) {
        return Err(AlmError::TimeOutOfRange {
            t: s_eval,
            lo: t,
            hi: model.horizon(),
        });
    }
    let state = StatePoint::new(t, 0.0, l_t)?;
    let e_neg_lambda = valuation::moment_lq(model, &state, -prefs.lambda, s_eval)?;
    let theta = model.theta(s_eval)?;
    let m7 = crate::kernels::m7(model, prefs, s_eval)?;
    Ok(theta * m7 * (neg_lambda_power(l_t, prefs.lambda) - e_neg_lambda))
}
