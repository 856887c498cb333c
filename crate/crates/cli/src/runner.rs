//! Experiment families behind the CLI subcommands.

use std::path::Path;

use mollify_markets_core::distinguish::power_curve;
use mollify_markets_core::forecast::prediction_sweep;
use mollify_markets_core::hedge::{
    expected_vol, incompleteness_study, replication_study, ClaimSpec, HedgeMode, VolAssumption,
};
use mollify_markets_core::metrics::convergence_study;
use mollify_markets_core::scenario::PathDraw;
use mollify_markets_core::streams::child_seed;
use mollify_markets_core::Error as CoreError;

use crate::config::ExperimentConfig;
use crate::report::{num, write_csv};

const DOMAIN_SIMULATE: u64 = u64::from_le_bytes(*b"simulate");

#[derive(Debug)]
pub enum RunError {
    Core(CoreError),
    Io(std::io::Error),
    /// A family that cannot run on this model kind; reported, not fatal to
    /// `all`.
    Skipped(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
            RunError::Skipped(why) => write!(f, "skipped: {why}"),
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// `simulate`: exports raw coupled paths of the original model,
/// one block per path (columns `path_id,t,R,S`).
pub fn run_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    let mut rows = Vec::new();
    for i in 0..cfg.simulate_n_paths {
        let draw = PathDraw::sample(
            &cfg.model,
            &cfg.grid,
            child_seed(cfg.seed, DOMAIN_SIMULATE, i as u64),
        )?;
        let world = draw.original(&cfg.model)?;
        for (k, &r) in world.price.log_prices.iter().enumerate() {
            let t = cfg.grid.model_time(k);
            rows.push(format!("{i},{},{},{}", num(t), num(r), num(r.exp())));
        }
    }
    write_csv(&out_dir.join("paths.csv"), "path_id,t,R,S", &rows)?;
    Ok(())
}

/// `closeness`: the coefficient- and price-distance study over the
/// bandwidth schedule.
pub fn run_closeness(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    let reports = convergence_study(
        &cfg.model,
        &cfg.grid,
        cfg.filter_kind,
        &cfg.metrics_epsilons,
        cfg.metrics_q,
        cfg.metrics_n_paths,
        cfg.seed,
    )?;
    let rows: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                num(r.eps),
                num(r.q),
                r.n_paths,
                num(r.coeff_term.mean),
                num(r.coeff_term.se),
                num(r.sup_term.mean),
                num(r.sup_term.se),
                num(r.log_sup_term.mean),
                num(r.log_sup_term.se),
            )
        })
        .collect();
    write_csv(
        &out_dir.join("closeness.csv"),
        "eps,q,n_paths,coeff_term,coeff_se,sup_term,sup_se,log_sup_term,log_sup_se",
        &rows,
    )?;
    Ok(())
}

/// `forecast`: extrapolation error of the smoothed volatility over the
/// trading window, per bandwidth and seed.
pub fn run_forecast(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    if cfg.model.is_closed_loop() {
        return Err(RunError::Skipped(
            "the forecast family needs an exogenous model kind".into(),
        ));
    }
    let rows_data = prediction_sweep(
        &cfg.model,
        &cfg.grid,
        cfg.filter_kind,
        &cfg.forecast_epsilons,
        cfg.forecast_degree,
        cfg.forecast_lambda,
        cfg.forecast_n_seeds,
        cfg.forecast_steps,
        cfg.seed,
    )?;
    let rows: Vec<String> = rows_data
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                num(r.eps),
                r.degree,
                num(r.lambda),
                r.seed_index,
                num(r.rel_error_q2)
            )
        })
        .collect();
    write_csv(
        &out_dir.join("forecast.csv"),
        "eps,degree,lambda,seed,rel_error_q2",
        &rows,
    )?;
    Ok(())
}

/// `hedge`: replication in the smoothed model (oracle and forecast modes)
/// plus the incomplete-market baseline with the expected-vol assumption.
pub fn run_hedge(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    if cfg.model.is_closed_loop() {
        return Err(RunError::Skipped(
            "the hedge family needs an exogenous model kind".into(),
        ));
    }
    let claim = ClaimSpec::call(cfg.hedge_strike)?;
    let filter = cfg.filter_at(cfg.hedge_epsilon);
    let mut rows = Vec::new();
    for &n_reb in &cfg.hedge_rebalances {
        for &mode_label in &cfg.hedge_modes {
            let mode = match mode_label {
                "oracle" => HedgeMode::Oracle,
                _ => HedgeMode::Forecast,
            };
            let reports = replication_study(
                &cfg.model,
                &cfg.grid,
                &filter,
                &claim,
                n_reb,
                cfg.hedge_n_paths,
                mode,
                cfg.forecast_degree,
                cfg.forecast_lambda,
                cfg.seed,
            )?;
            for (i, r) in reports.iter().enumerate() {
                rows.push(format!(
                    "{i},{},{},{},{n_reb},{mode_label}",
                    num(r.x0),
                    num(r.payoff),
                    num(r.terminal_error)
                ));
            }
        }
        let assumption = VolAssumption::Constant(expected_vol(&cfg.model)?);
        let reports = incompleteness_study(
            &cfg.model,
            &cfg.grid,
            &claim,
            n_reb,
            cfg.hedge_n_paths,
            &assumption,
            cfg.seed,
        )?;
        for (i, r) in reports.iter().enumerate() {
            rows.push(format!(
                "{i},{},{},{},{n_reb},incomplete",
                num(r.x0),
                num(r.payoff),
                num(r.terminal_error)
            ));
        }
    }
    write_csv(
        &out_dir.join("hedge.csv"),
        "path_id,x0,payoff,terminal_error,n_rebalance,mode",
        &rows,
    )?;
    Ok(())
}

/// `distinguish`: rejection-rate curve of the two-sample test across the
/// bandwidth list (`eps = 0` rows are null calibrations).
pub fn run_distinguish(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    let rows_data = power_curve(
        &cfg.model,
        &cfg.grid,
        cfg.filter_kind,
        &cfg.distinguish_epsilons,
        cfg.distinguish_sample_step,
        cfg.distinguish_tick,
        cfg.distinguish_n_trials,
        cfg.distinguish_n_paths_per_trial,
        cfg.distinguish_alpha,
        cfg.seed,
    )?;
    let rows: Vec<String> = rows_data
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                num(r.eps),
                num(r.dt),
                num(r.tick),
                r.summary.n_trials,
                num(r.summary.rate),
                num(r.summary.ci_low),
                num(r.summary.ci_high)
            )
        })
        .collect();
    write_csv(
        &out_dir.join("power_curve.csv"),
        "eps,dt,tick,n_trials,rejection_rate,ci_low,ci_high",
        &rows,
    )?;
    Ok(())
}
