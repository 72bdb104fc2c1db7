//! Scenario files: a flat TOML format holding the market model, risk
//! preferences, initial state, evaluation times and simulation settings.
//!
//! Unknown keys are rejected so a typo cannot silently change an
//! experiment. Coefficients accept either a bare number (constant on
//! `[0, T]`) or a `{ breakpoints = [...], values = [...] }` table.

use serde::Deserialize;

use alm_core::market::{CoefficientCurve, MarketModel, RiskPreferences, StatePoint};
use alm_core::simulation::SimConfig;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum CurveSpec {
    Constant(f64),
    Piecewise(PiecewiseSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PiecewiseSpec {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl CurveSpec {
    fn build(&self, horizon: f64) -> Result<CoefficientCurve, CliError> {
        match self {
            CurveSpec::Constant(v) => Ok(CoefficientCurve::constant(*v, horizon)),
            CurveSpec::Piecewise(spec) => {
                CoefficientCurve::piecewise(spec.breakpoints.clone(), spec.values.clone())
                    .map_err(CliError::from)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketSpec {
    r: CurveSpec,
    mu: CurveSpec,
    sigma: CurveSpec,
    alpha: CurveSpec,
    beta: CurveSpec,
    rho: CurveSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferencesSpec {
    omega1: f64,
    omega2: f64,
    lambda: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSpec {
    surplus: f64,
    liability: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSpec {
    paths: usize,
    steps: usize,
    seed: u64,
    #[serde(default)]
    antithetic: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `omega1` or `omega2`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    horizon: f64,
    eval_times: Vec<f64>,
    market: MarketSpec,
    preferences: PreferencesSpec,
    initial: InitialSpec,
    simulation: SimulationSpec,
    #[serde(default)]
    sweep: Option<SweepSpec>,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: MarketModel,
    pub prefs: RiskPreferences,
    pub s0: f64,
    pub l0: f64,
    pub eval_times: Vec<f64>,
    pub sim: SimConfig,
    pub sweep: Option<SweepSpec>,
}

impl Scenario {
    /// Parses and validates scenario TOML.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        let horizon = file.horizon;
        let model = MarketModel::new(
            horizon,
            file.market.r.build(horizon)?,
            file.market.mu.build(horizon)?,
            file.market.sigma.build(horizon)?,
            file.market.alpha.build(horizon)?,
            file.market.beta.build(horizon)?,
            file.market.rho.build(horizon)?,
        )?;
        let prefs = RiskPreferences::new(
            file.preferences.omega1,
            file.preferences.omega2,
            file.preferences.lambda,
        );

        let violations = alm_core::validate(&model, &prefs);
        if !violations.is_empty() {
            let list = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(CliError::Config(format!("scenario validation: {list}")));
        }
        if !(file.initial.liability > 0.0) {
            return Err(CliError::Config(format!(
                "initial liability must be positive, got {}",
                file.initial.liability
            )));
        }
        if file.eval_times.is_empty() {
            return Err(CliError::Config("eval_times must not be empty".into()));
        }
        if file
            .eval_times
            .iter()
            .any(|&t| !(0.0..=horizon).contains(&t))
        {
            return Err(CliError::Config(format!(
                "eval_times must lie in [0, {horizon}]"
            )));
        }
        if let Some(sweep) = &file.sweep {
            if sweep.parameter != "omega1" && sweep.parameter != "omega2" {
                return Err(CliError::Config(format!(
                    "sweep parameter must be omega1 or omega2, got {}",
                    sweep.parameter
                )));
            }
            if sweep.values.is_empty() {
                return Err(CliError::Config("sweep values must not be empty".into()));
            }
        }

        Ok(Self {
            model,
            prefs,
            s0: file.initial.surplus,
            l0: file.initial.liability,
            eval_times: file.eval_times,
            sim: SimConfig::new(
                file.simulation.paths,
                file.simulation.steps,
                file.simulation.seed,
            )
            .with_antithetic(file.simulation.antithetic),
            sweep: file.sweep,
        })
    }

    /// Loads a scenario from a file path.
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn state_at(&self, t: f64) -> Result<StatePoint, CliError> {
        StatePoint::new(t, self.s0, self.l0).map_err(CliError::from)
    }
}
