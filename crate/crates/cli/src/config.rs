//! Flat key-value experiment configuration.
//!
//! The file format is one `key = value` pair per line with dotted section
//! keys (`grid.step = 0.001953125`), `#` comments, and blank lines. Lists
//! are comma-separated. Command-line `--set key=value` overrides are applied
//! after parsing. The resolved entries are echoed into the run manifest,
//! which is itself a valid configuration file.

use std::collections::BTreeMap;
use std::fmt;

use mollify_markets_core::mollify::{FilterKind, FilterSpec};
use mollify_markets_core::params::{CatalogMap, GridSpec, ModelKind, ModelSpec};

/// A named precondition violation, reported before any computation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Raw parsed entries, defaults not yet materialized.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, String> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(RawConfig { entries })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries
            .insert(key.trim().to_string(), value.trim().to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Entries in sorted order, for the manifest.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub model: ModelSpec,
    pub filter_kind: FilterKind,
    pub truncation_radius: f64,
    pub metrics_q: f64,
    pub metrics_epsilons: Vec<f64>,
    pub metrics_n_paths: usize,
    pub forecast_degree: usize,
    pub forecast_lambda: f64,
    pub forecast_epsilons: Vec<f64>,
    pub forecast_n_seeds: u64,
    /// Prediction window length in trading-window steps.
    pub forecast_steps: usize,
    pub hedge_strike: f64,
    pub hedge_rebalances: Vec<usize>,
    pub hedge_epsilon: f64,
    pub hedge_n_paths: usize,
    pub hedge_modes: Vec<&'static str>,
    pub distinguish_sample_step: f64,
    pub distinguish_tick: f64,
    pub distinguish_alpha: f64,
    pub distinguish_n_trials: usize,
    pub distinguish_n_paths_per_trial: usize,
    pub distinguish_epsilons: Vec<f64>,
    pub simulate_n_paths: usize,
}

impl ExperimentConfig {
    pub fn filter_at(&self, eps: f64) -> FilterSpec {
        match self.filter_kind {
            FilterKind::Gaussian => FilterSpec::Gaussian {
                eps,
                truncation_radius: self.truncation_radius,
            },
            other => FilterSpec::from_bandwidth(other, eps),
        }
    }
}

struct Reader<'a> {
    raw: &'a mut RawConfig,
    violations: Vec<Violation>,
}

impl<'a> Reader<'a> {
    fn fail(&mut self, key: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn default(&mut self, key: &str, value: &str) {
        if self.raw.get(key).is_none() {
            self.raw.set(key, value);
        }
    }

    fn string(&mut self, key: &str) -> String {
        match self.raw.get(key) {
            Some(v) => v.to_string(),
            None => {
                self.fail(key, "missing key");
                String::new()
            }
        }
    }

    fn f64(&mut self, key: &str) -> f64 {
        let v = self.string(key);
        v.parse().unwrap_or_else(|_| {
            if !v.is_empty() {
                self.fail(key, format!("`{v}` is not a number"));
            }
            f64::NAN
        })
    }

    fn usize(&mut self, key: &str) -> usize {
        let v = self.string(key);
        v.parse().unwrap_or_else(|_| {
            if !v.is_empty() {
                self.fail(key, format!("`{v}` is not a nonnegative integer"));
            }
            0
        })
    }

    fn u64(&mut self, key: &str) -> u64 {
        let v = self.string(key);
        v.parse().unwrap_or_else(|_| {
            if !v.is_empty() {
                self.fail(key, format!("`{v}` is not a nonnegative integer"));
            }
            0
        })
    }

    fn f64_list(&mut self, key: &str) -> Vec<f64> {
        let v = self.string(key);
        let mut out = Vec::new();
        for part in v.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match part.parse() {
                Ok(x) => out.push(x),
                Err(_) => self.fail(key, format!("`{part}` is not a number")),
            }
        }
        out
    }

    fn usize_list(&mut self, key: &str) -> Vec<usize> {
        let v = self.string(key);
        let mut out = Vec::new();
        for part in v.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match part.parse() {
                Ok(x) => out.push(x),
                Err(_) => self.fail(key, format!("`{part}` is not a positive integer")),
            }
        }
        out
    }
}

fn read_model(
    r: &mut Reader,
    prefix: &str,
    rate: f64,
    s0: f64,
    bounds: (f64, f64, f64),
) -> Option<ModelSpec> {
    let (sigma_min, sigma_max, a_max) = bounds;
    let kind_key = format!("{prefix}.kind");
    let kind = r.string(&kind_key);
    let built = match kind.as_str() {
        "constant" => {
            let a = r.f64(&format!("{prefix}.a"));
            let sigma = r.f64(&format!("{prefix}.sigma"));
            ModelKind::ConstantParams { a, sigma }
        }
        "regime-switch" => {
            let a = r.f64(&format!("{prefix}.a"));
            let sigma_levels = r.f64_list(&format!("{prefix}.sigma_levels"));
            let switch_rates = r.f64_list(&format!("{prefix}.switch_rates"));
            let init_key = format!("{prefix}.initial_regime");
            r.default(&init_key, "stationary");
            let init = r.string(&init_key);
            let initial_state = if init == "stationary" {
                None
            } else {
                match init.parse::<usize>() {
                    Ok(i) => Some(i),
                    Err(_) => {
                        r.fail(&init_key, "expected `stationary` or a state index");
                        None
                    }
                }
            };
            ModelKind::MarkovRegimeSwitch {
                a,
                sigma_levels,
                switch_rates,
                initial_state,
            }
        }
        "factor-vol" => ModelKind::FactorVol {
            a: r.f64(&format!("{prefix}.a")),
            kappa: r.f64(&format!("{prefix}.kappa")),
            mean: r.f64(&format!("{prefix}.mean")),
            vol: r.f64(&format!("{prefix}.vol")),
            y0: r.f64(&format!("{prefix}.y0")),
        },
        "closed-loop" => {
            if prefix != "model" {
                r.fail(&kind_key, "the closed-loop driver must be exogenous");
                return None;
            }
            let driver = read_model(r, "driver", rate, s0, bounds)?;
            let map_key = "model.map".to_string();
            let map_id = r.string(&map_key);
            r.default("model.map_base", "0.2");
            r.default("model.map_amp", "0.0");
            r.default("model.map_rho_ref", "0.0");
            let a = r.f64("model.a");
            let base = r.f64("model.map_base");
            let amp = r.f64("model.map_amp");
            let rho_ref = r.f64("model.map_rho_ref");
            match CatalogMap::parse(&map_id, a, base, amp, rho_ref) {
                Ok(map) => ModelKind::ClosedLoop {
                    driver: Box::new(driver),
                    map,
                },
                Err(e) => {
                    r.fail(&map_key, e.to_string());
                    return None;
                }
            }
        }
        "" => return None,
        other => {
            r.fail(&kind_key, format!("unknown model kind `{other}`"));
            return None;
        }
    };
    match ModelSpec::new(built, rate, s0, sigma_min, sigma_max, a_max) {
        Ok(spec) => Some(spec),
        Err(e) => {
            r.fail(&format!("{prefix}.sigma_min"), e.to_string());
            None
        }
    }
}

/// Materializes defaults, checks every precondition derivable from the
/// configuration, and builds the typed config.
///
/// On failure the full violation list is returned; nothing has been
/// computed.
pub fn build(raw: &mut RawConfig) -> Result<ExperimentConfig, Vec<Violation>> {
    let mut r = Reader {
        raw,
        violations: Vec::new(),
    };

    r.default("seed", "0");
    r.default("filter.kind", "gaussian");
    r.default("filter.truncation_radius", "8");
    r.default("hedge.mode", "both");
    r.default("simulate.n_paths", "4");

    let seed = r.u64("seed");

    let delta = r.f64("grid.delta");
    let horizon = r.f64("grid.horizon");
    let flank = r.f64("grid.flank");
    let h = r.f64("grid.step");
    let grid = match GridSpec::new(delta, horizon, flank, h) {
        Ok(g) => Some(g),
        Err(e) => {
            r.fail("grid.step", e.to_string());
            None
        }
    };

    let rate = r.f64("model.r");
    let s0 = r.f64("model.s0");
    let sigma_min = r.f64("model.sigma_min");
    let sigma_max = r.f64("model.sigma_max");
    let a_max = r.f64("model.a_max");
    let model = read_model(&mut r, "model", rate, s0, (sigma_min, sigma_max, a_max));

    let filter_kind = match r.string("filter.kind").as_str() {
        "gaussian" => FilterKind::Gaussian,
        "lowpass" => FilterKind::IdealLowPass,
        "expdecay" => FilterKind::ExpDecay,
        other => {
            r.fail("filter.kind", format!("unknown filter kind `{other}`"));
            FilterKind::Gaussian
        }
    };
    let truncation_radius = r.f64("filter.truncation_radius");

    let metrics_q = r.f64("metrics.q");
    let metrics_epsilons = r.f64_list("metrics.epsilons");
    let metrics_n_paths = r.usize("metrics.n_paths");

    let forecast_degree = r.usize("forecast.degree");
    let forecast_lambda = r.f64("forecast.lambda");
    let forecast_epsilons = r.f64_list("forecast.epsilons");
    let forecast_n_seeds = r.u64("forecast.n_seeds");
    if r.raw.get("forecast.horizon").is_none() {
        let fallback = r.string("grid.horizon");
        r.raw.set("forecast.horizon", &fallback);
    }
    let forecast_horizon = r.f64("forecast.horizon");
    let mut forecast_steps = 0usize;

    let hedge_strike = r.f64("hedge.strike");
    let hedge_rebalances = r.usize_list("hedge.rebalances");
    let hedge_epsilon = r.f64("hedge.epsilon");
    let hedge_n_paths = r.usize("hedge.n_paths");
    let hedge_modes: Vec<&'static str> = match r.string("hedge.mode").as_str() {
        "oracle" => vec!["oracle"],
        "forecast" => vec!["forecast"],
        "both" => vec!["oracle", "forecast"],
        other => {
            r.fail(
                "hedge.mode",
                format!("expected oracle|forecast|both, got `{other}`"),
            );
            vec![]
        }
    };

    let distinguish_sample_step = r.f64("distinguish.sample_step");
    let distinguish_tick = r.f64("distinguish.tick");
    let distinguish_alpha = r.f64("distinguish.alpha");
    let distinguish_n_trials = r.usize("distinguish.n_trials");
    let distinguish_n_paths_per_trial = r.usize("distinguish.n_paths_per_trial");
    let distinguish_epsilons = r.f64_list("distinguish.epsilons");

    let simulate_n_paths = r.usize("simulate.n_paths");

    // Cross-field preconditions, checked only when the pieces parsed.
    if let Some(g) = &grid {
        let h = g.h();
        let floor_check = |r: &mut Reader, key: &str, eps: f64| {
            if filter_kind != FilterKind::IdealLowPass {
                if eps > 0.0 && eps < 2.0 * h {
                    r.fail(
                        key,
                        format!(
                            "bandwidth {eps} is below the resolvability floor 2h = {}",
                            2.0 * h
                        ),
                    );
                }
                if eps * truncation_radius > g.flank() + 1e-12 {
                    r.fail(
                        key,
                        format!(
                            "bandwidth {eps} needs a flank of at least {}, grid has {}",
                            eps * truncation_radius,
                            g.flank()
                        ),
                    );
                }
            }
        };
        for &eps in &metrics_epsilons {
            floor_check(&mut r, "metrics.epsilons", eps);
        }
        if metrics_epsilons.windows(2).any(|w| w[1] >= w[0]) {
            r.fail(
                "metrics.epsilons",
                "bandwidth list must be strictly decreasing",
            );
        }
        for &eps in &forecast_epsilons {
            floor_check(&mut r, "forecast.epsilons", eps);
        }
        floor_check(&mut r, "hedge.epsilon", hedge_epsilon);
        for &eps in &distinguish_epsilons {
            if eps > 0.0 {
                floor_check(&mut r, "distinguish.epsilons", eps);
            }
        }
        for &n_reb in &hedge_rebalances {
            if n_reb == 0 || g.horizon_steps() % n_reb != 0 {
                r.fail(
                    "hedge.rebalances",
                    format!(
                        "{n_reb} does not divide the {} trading-window steps",
                        g.horizon_steps()
                    ),
                );
            }
        }
        let ratio = distinguish_sample_step / h;
        if !ratio.is_finite()
            || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0)
            || ratio < 1.0
        {
            r.fail(
                "distinguish.sample_step",
                format!("{distinguish_sample_step} is not a whole multiple of the grid step {h}"),
            );
        } else if g.lookback_steps() % (ratio.round() as usize) != 0 {
            r.fail(
                "distinguish.sample_step",
                "sampling interval does not divide the observation window",
            );
        }
        if g.lookback_steps() < forecast_degree + 1 {
            r.fail(
                "forecast.degree",
                "observation window has too few nodes for this degree",
            );
        }
        let steps = forecast_horizon / h;
        if !steps.is_finite()
            || (steps - steps.round()).abs() > 1e-9 * steps.max(1.0)
            || steps < 1.0
            || steps.round() as usize > g.horizon_steps()
        {
            r.fail(
                "forecast.horizon",
                format!(
                    "{forecast_horizon} must be a whole number of steps within the trading window"
                ),
            );
        } else {
            forecast_steps = steps.round() as usize;
        }
    }
    let q_ok = metrics_q >= 1.0;
    if !q_ok {
        r.fail("metrics.q", format!("exponent {metrics_q} must be >= 1"));
    }
    if metrics_n_paths == 0 {
        r.fail("metrics.n_paths", "need at least one path");
    }
    let lambda_ok = forecast_lambda >= 0.0;
    if !lambda_ok {
        r.fail("forecast.lambda", "regularization weight must be >= 0");
    }
    let strike_ok = hedge_strike >= 0.0;
    if !strike_ok {
        r.fail("hedge.strike", "strike must be >= 0");
    }
    if hedge_n_paths == 0 {
        r.fail("hedge.n_paths", "need at least one path");
    }
    let tick_ok = distinguish_tick > 0.0;
    if !tick_ok {
        r.fail("distinguish.tick", "tick must be positive");
    }
    let alpha_ok = distinguish_alpha > 0.0 && distinguish_alpha < 1.0;
    if !alpha_ok {
        r.fail("distinguish.alpha", "significance level must be in (0, 1)");
    }
    if distinguish_n_trials < 100 {
        r.fail("distinguish.n_trials", "need at least 100 trials");
    }
    if distinguish_n_paths_per_trial == 0 {
        r.fail(
            "distinguish.n_paths_per_trial",
            "need at least one path per trial",
        );
    }
    if simulate_n_paths == 0 {
        r.fail("simulate.n_paths", "need at least one path");
    }

    let violations = r.violations;
    match (grid, model, violations.is_empty()) {
        (Some(grid), Some(model), true) => Ok(ExperimentConfig {
            seed,
            grid,
            model,
            filter_kind,
            truncation_radius,
            metrics_q,
            metrics_epsilons,
            metrics_n_paths,
            forecast_degree,
            forecast_lambda,
            forecast_epsilons,
            forecast_n_seeds,
            forecast_steps,
            hedge_strike,
            hedge_rebalances,
            hedge_epsilon,
            hedge_n_paths,
            hedge_modes,
            distinguish_sample_step,
            distinguish_tick,
            distinguish_alpha,
            distinguish_n_trials,
            distinguish_n_paths_per_trial,
            distinguish_epsilons,
            simulate_n_paths,
        }),
        (_, _, _) => Err(violations),
    }
}
