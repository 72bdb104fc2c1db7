//! The CSV-producing commands.
//!
//! Every command loads a scenario, computes its table and writes one CSV
//! with a header row; floats are printed with 17 significant digits, so
//! identical scenarios and seeds give byte-identical files.

use std::io::Write;
use std::path::Path;

use alm_core::kernels;
use alm_core::market::RiskPreferences;
use alm_core::numerics::TimeGrid;
use alm_core::simulation::{estimate_cost, step_times, EquilibriumStrategy};
use alm_core::strategy::equilibrium_control;
use alm_core::util::csv_float;
use alm_core::valuation;

use crate::scenario::Scenario;
use crate::CliError;

pub fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// The 101-node uniform grid on `[0, T]` augmented with coefficient
/// breakpoints; the tabulation grid of `gains` and `strategy`.
fn output_grid(scenario: &Scenario) -> Result<TimeGrid, CliError> {
    TimeGrid::refined(
        0.0,
        scenario.model.horizon(),
        101,
        &scenario.model.merged_breakpoints(),
    )
    .map_err(CliError::from)
}

/// `gains`: kernels and feedback gains per grid node.
pub fn cmd_gains(scenario: &Scenario, out: &Path) -> Result<(), CliError> {
    let grid = output_grid(scenario)?;
    let schedule = kernels::build_schedule(&scenario.model, &scenario.prefs, &grid)?;
    let mut buf = Vec::new();
    schedule.write_csv(&mut buf).expect("in-memory write");
    write_output(out, std::str::from_utf8(&buf).expect("ascii csv"))
}

/// `strategy`: equilibrium control curves per grid node and liability level.
pub fn cmd_strategy(
    scenario: &Scenario,
    liabilities: &[f64],
    out: &Path,
) -> Result<(), CliError> {
    let levels: Vec<f64> = if liabilities.is_empty() {
        vec![scenario.l0]
    } else {
        liabilities.to_vec()
    };
    if levels.iter().any(|&l| !(l > 0.0)) {
        return Err(CliError::Config(
            "liability levels must be positive".into(),
        ));
    }
    let grid = output_grid(scenario)?;
    let mut csv = String::from("t,l,u_star,addend_f1,addend_f3,addend_f4\n");
    for &t in grid.nodes() {
        for &l in &levels {
            let state = alm_core::StatePoint::new(t, scenario.s0, l)?;
            let eval = equilibrium_control(&scenario.model, &scenario.prefs, &state)?;
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_float(t),
                csv_float(l),
                csv_float(eval.u_star),
                csv_float(eval.addend_f1),
                csv_float(eval.addend_f3),
                csv_float(eval.addend_f4),
            ));
        }
    }
    write_output(out, &csv)
}

/// `value`: the closed-form value breakdown at each evaluation time.
pub fn cmd_value(scenario: &Scenario, out: &Path) -> Result<(), CliError> {
    let mut csv = String::from("t,s,l,mean_ST,second_moment_ST,variance_ST,value\n");
    for &t in &scenario.eval_times {
        let state = scenario.state_at(t)?;
        let v = valuation::value(&scenario.model, &scenario.prefs, &state)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_float(t),
            csv_float(scenario.s0),
            csv_float(scenario.l0),
            csv_float(v.mean_st),
            csv_float(v.second_moment_st),
            csv_float(v.variance_st),
            csv_float(v.value),
        ));
    }
    write_output(out, &csv)
}

/// `simulate`: Monte Carlo cost estimates under the equilibrium strategy.
pub fn cmd_simulate(scenario: &Scenario, out: &Path) -> Result<(), CliError> {
    let mut csv = String::from(
        "t,s,l,paths,steps,seed,antithetic,j_hat,j_se,mean_ST,mean_se,var_ST,var_se\n",
    );
    for &t in &scenario.eval_times {
        let state = scenario.state_at(t)?;
        let times = step_times(&scenario.model, t, scenario.sim.steps)?;
        let strat = EquilibriumStrategy::tabulate(&scenario.model, &scenario.prefs, &times)?;
        let est = estimate_cost(
            &scenario.model,
            &scenario.prefs,
            &strat,
            &state,
            &scenario.sim,
        )?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            csv_float(t),
            csv_float(scenario.s0),
            csv_float(scenario.l0),
            scenario.sim.paths,
            scenario.sim.steps,
            scenario.sim.seed,
            scenario.sim.antithetic,
            csv_float(est.j_hat),
            csv_float(est.std_error),
            csv_float(est.mean_st),
            csv_float(est.mean_std_error),
            csv_float(est.var_st),
            csv_float(est.var_std_error),
        ));
    }
    write_output(out, &csv)
}

/// `sweep`: strategy and value against a preference-weight grid, one row
/// per evaluation time and grid value.
pub fn cmd_sweep(scenario: &Scenario, out: &Path) -> Result<(), CliError> {
    let sweep = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("scenario has no [sweep] section".into()))?;
    let mut csv = String::from("t,sweep_value,u_star,value\n");
    for &t in &scenario.eval_times {
        let state = scenario.state_at(t)?;
        for &w in &sweep.values {
            let prefs = match sweep.parameter.as_str() {
                "omega1" => RiskPreferences::new(w, scenario.prefs.omega2, scenario.prefs.lambda),
                _ => RiskPreferences::new(scenario.prefs.omega1, w, scenario.prefs.lambda),
            };
            let u = equilibrium_control(&scenario.model, &prefs, &state)?.u_star;
            let v = valuation::value(&scenario.model, &prefs, &state)?.value;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                csv_float(t),
                csv_float(w),
                csv_float(u),
                csv_float(v),
            ));
        }
    }
    write_output(out, &csv)
}

/// Writes the verification report rows produced by [`crate::verify`].
pub fn write_report(rows: &[crate::verify::CheckRow], out: &Path) -> Result<(), CliError> {
    let mut csv = String::from("check,param,observed,threshold,pass\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.check,
            row.param,
            csv_float(row.observed),
            csv_float(row.threshold),
            row.pass,
        ));
    }
    write_output(out, &csv)
}

/// One-line human summary of a report, written to stdout.
pub fn print_report_summary(rows: &[crate::verify::CheckRow]) {
    let failed = rows.iter().filter(|r| !r.pass).count();
    let mut out = std::io::stdout().lock();
    if failed == 0 {
        let _ = writeln!(out, "verify: all {} checks passed", rows.len());
    } else {
        let _ = writeln!(out, "verify: {failed} of {} checks FAILED", rows.len());
        for row in rows.iter().filter(|r| !r.pass) {
            let _ = writeln!(
                out,
                "  FAIL {} {} (observed {}, threshold {})",
                row.check, row.param, row.observed, row.threshold
            );
        }
    }
}
