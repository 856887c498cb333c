//! Market-model coefficient processes and the simulation grid.
//!
//! A model describes the appreciation rate `a(t)` and volatility `sigma(t)`
//! of a single risky asset on the window `[-delta, T]`: constants, a Markov
//! regime chain, a bounded function of an Ornstein-Uhlenbeck factor, or a
//! closed-loop map fed by an exogenous factor and the running log price.
//!
//! The grid carries flanks of length `delta0` on both sides of the model
//! window. Coefficient paths are extended onto the flanks before smoothing:
//! `a` vanishes outside the model window while `sigma` takes the flank value
//! 1 there and is treated as 0 beyond the flanks. The flank values only
//! matter for convolution tails.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::streams::{stream, StreamKind};

/// Relative slack used when checking that durations are whole numbers of
/// grid steps.
const ALIGN_TOL: f64 = 1e-9;

/// Uniform simulation grid over `[-delta - delta0, T + delta0]`.
///
/// Node `k` sits at `t_min + k*h`. The lookback window `[-delta, 0]` is where
/// history is observed, the trading window `[0, T]` is where strategies run,
/// and the flanks of length `delta0` exist so that smoothing kernels never
/// run off the data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    h: f64,
    flank_steps: usize,
    lookback_steps: usize,
    horizon_steps: usize,
}

impl GridSpec {
    pub fn new(delta: f64, horizon: f64, flank: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("step h = {h} must be positive")));
        }
        for (name, v) in [("delta", delta), ("horizon", horizon), ("flank", flank)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGrid(format!("{name} = {v} must be positive")));
            }
        }
        let steps_of = |name: &str, v: f64| -> Result<usize> {
            let k = (v / h).round();
            if (v - k * h).abs() > ALIGN_TOL * v.max(h) || k < 1.0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {v} is not a whole number of steps h = {h}"
                )));
            }
            Ok(k as usize)
        };
        Ok(GridSpec {
            h,
            flank_steps: steps_of("flank", flank)?,
            lookback_steps: steps_of("delta", delta)?,
            horizon_steps: steps_of("horizon", horizon)?,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn delta(&self) -> f64 {
        self.lookback_steps as f64 * self.h
    }
    pub fn horizon(&self) -> f64 {
        self.horizon_steps as f64 * self.h
    }
    pub fn flank(&self) -> f64 {
        self.flank_steps as f64 * self.h
    }
    pub fn t_min(&self) -> f64 {
        -(self.delta() + self.flank())
    }
    pub fn t_max(&self) -> f64 {
        self.horizon() + self.flank()
    }

    /// Number of nodes on the full grid, flanks included.
    pub fn node_count(&self) -> usize {
        2 * self.flank_steps + self.lookback_steps + self.horizon_steps + 1
    }

    /// Index of the node at `t = -delta`.
    pub fn model_first(&self) -> usize {
        self.flank_steps
    }
    /// Index of the node at `t = 0`.
    pub fn model_zero(&self) -> usize {
        self.flank_steps + self.lookback_steps
    }
    /// Index of the node at `t = T`.
    pub fn model_last(&self) -> usize {
        self.flank_steps + self.lookback_steps + self.horizon_steps
    }
    /// Nodes in the model window `[-delta, T]`.
    pub fn model_node_count(&self) -> usize {
        self.lookback_steps + self.horizon_steps + 1
    }
    pub fn lookback_steps(&self) -> usize {
        self.lookback_steps
    }
    pub fn horizon_steps(&self) -> usize {
        self.horizon_steps
    }
    pub fn flank_steps(&self) -> usize {
        self.flank_steps
    }

    /// Time of full-grid node `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t_min() + k as f64 * self.h
    }

    /// Time of the `k`-th node of the model window (node 0 is `-delta`).
    pub fn model_time(&self, k: usize) -> f64 {
        -self.delta() + k as f64 * self.h
    }

    /// The same span with every step split in `factor` pieces.
    pub fn refine(&self, factor: usize) -> GridSpec {
        assert!(factor >= 1);
        GridSpec {
            h: self.h / factor as f64,
            flank_steps: self.flank_steps * factor,
            lookback_steps: self.lookback_steps * factor,
            horizon_steps: self.horizon_steps * factor,
        }
    }
}

/// Closed-loop coefficient maps `(y, rho, t) -> (a, sigma)`.
///
/// The catalog is fixed so that boundedness and the Lipschitz constant in the
/// log price are known by construction rather than asserted by the caller.
#[derive(Debug, Clone, PartialEq)]
pub enum CatalogMap {
    /// `sigma = clamp(base + amp * tanh(rho - rho_ref))`, `a` constant.
    /// Ignores the factor.
    ClampedLinear {
        a: f64,
        base: f64,
        amp: f64,
        rho_ref: f64,
    },
    /// `sigma = clamp(y + amp * tanh(rho - rho_ref))`, `a` constant.
    /// With `amp = 0` this is the factor passthrough embedding an exogenous
    /// volatility model into the closed-loop class.
    FactorFeedback { a: f64, amp: f64, rho_ref: f64 },
}

impl CatalogMap {
    pub fn parse(id: &str, a: f64, base: f64, amp: f64, rho_ref: f64) -> Result<Self> {
        match id {
            "clamped-linear" => Ok(CatalogMap::ClampedLinear {
                a,
                base,
                amp,
                rho_ref,
            }),
            "factor-feedback" => Ok(CatalogMap::FactorFeedback { a, amp, rho_ref }),
            other => Err(Error::UnknownMap(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            CatalogMap::ClampedLinear { .. } => "clamped-linear",
            CatalogMap::FactorFeedback { .. } => "factor-feedback",
        }
    }

    /// Lipschitz constant of `sigma` in the log price, valid on all of `R`.
    pub fn lipschitz_rho(&self) -> f64 {
        match self {
            CatalogMap::ClampedLinear { amp, .. } => amp.abs(),
            CatalogMap::FactorFeedback { amp, .. } => amp.abs(),
        }
    }

    fn eval(&self, y: f64, rho: f64, sigma_min: f64, sigma_max: f64) -> (f64, f64) {
        let clamp = |s: f64| s.clamp(sigma_min, sigma_max);
        match *self {
            CatalogMap::ClampedLinear {
                a,
                base,
                amp,
                rho_ref,
            } => (a, clamp(base + amp * (rho - rho_ref).tanh())),
            CatalogMap::FactorFeedback { a, amp, rho_ref } => {
                (a, clamp(y + amp * (rho - rho_ref).tanh()))
            }
        }
    }
}

/// The coefficient law of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `a` and `sigma` constant in time.
    ConstantParams { a: f64, sigma: f64 },
    /// Continuous-time Markov chain over volatility levels; `a` constant.
    /// `switch_rates[i]` is the rate of leaving state `i`; on leaving, the
    /// chain jumps uniformly to one of the other states. `initial_state:
    /// None` draws the start from the stationary law.
    MarkovRegimeSwitch {
        a: f64,
        sigma_levels: Vec<f64>,
        switch_rates: Vec<f64>,
        initial_state: Option<usize>,
    },
    /// Ornstein-Uhlenbeck factor `dy = kappa (mean - y) dt + vol dW'`,
    /// discretized by its exact Gaussian transition; volatility is the
    /// logistic link of the factor onto `(sigma_min, sigma_max)`.
    FactorVol {
        a: f64,
        kappa: f64,
        mean: f64,
        vol: f64,
        y0: f64,
    },
    /// Coefficients produced by a catalog map from an exogenous factor path
    /// (the volatility path of `driver`) and the running log price.
    ClosedLoop {
        driver: Box<ModelSpec>,
        map: CatalogMap,
    },
}

/// A market model: coefficient law plus the bounds making it a member of the
/// admissible class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Constant short rate of the bond account.
    pub r: f64,
    /// Non-random price at `t = -delta`.
    pub s0: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub a_max: f64,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        r: f64,
        s0: f64,
        sigma_min: f64,
        sigma_max: f64,
        a_max: f64,
    ) -> Result<Self> {
        let spec = ModelSpec {
            kind,
            r,
            s0,
            sigma_min,
            sigma_max,
            a_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite())
        {
            return Err(Error::InvalidSpec(format!(
                "need 0 < sigma_min <= sigma_max < inf, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "s0 = {} must be positive",
                self.s0
            )));
        }
        if !(self.a_max >= 0.0 && self.a_max.is_finite()) || !self.r.is_finite() {
            return Err(Error::InvalidSpec(
                "a_max must be finite and nonnegative".into(),
            ));
        }
        let check_a = |a: f64| -> Result<()> {
            if a.abs() > self.a_max {
                return Err(Error::InvalidSpec(format!(
                    "appreciation {a} exceeds the bound a_max = {}",
                    self.a_max
                )));
            }
            Ok(())
        };
        let check_sigma = |s: f64| -> Result<()> {
            if !(s >= self.sigma_min && s <= self.sigma_max) {
                return Err(Error::InvalidSpec(format!(
                    "volatility level {s} outside [{}, {}]",
                    self.sigma_min, self.sigma_max
                )));
            }
            Ok(())
        };
        match &self.kind {
            ModelKind::ConstantParams { a, sigma } => {
                check_a(*a)?;
                check_sigma(*sigma)?;
            }
            ModelKind::MarkovRegimeSwitch {
                a,
                sigma_levels,
                switch_rates,
                initial_state,
            } => {
                check_a(*a)?;
                if sigma_levels.is_empty() || sigma_levels.len() != switch_rates.len() {
                    return Err(Error::InvalidSpec(
                        "regime levels and switch rates must be non-empty and equal in length"
                            .into(),
                    ));
                }
                for &s in sigma_levels {
                    check_sigma(s)?;
                }
                for &q in switch_rates {
                    if !(q >= 0.0 && q.is_finite()) {
                        return Err(Error::InvalidSpec(format!("switch rate {q} must be >= 0")));
                    }
                }
                match initial_state {
                    Some(i) if *i >= sigma_levels.len() => {
                        return Err(Error::InvalidSpec(format!(
                            "initial state {i} out of range for {} levels",
                            sigma_levels.len()
                        )))
                    }
                    None if switch_rates.contains(&0.0) => {
                        return Err(Error::InvalidSpec(
                            "stationary start requires all switch rates positive".into(),
                        ))
                    }
                    _ => {}
                }
            }
            ModelKind::FactorVol { a, kappa, vol, .. } => {
                check_a(*a)?;
                if !(*kappa > 0.0 && *vol >= 0.0) {
                    return Err(Error::InvalidSpec(
                        "factor model needs kappa > 0 and vol >= 0".into(),
                    ));
                }
            }
            ModelKind::ClosedLoop { driver, map } => {
                if matches!(driver.kind, ModelKind::ClosedLoop { .. }) {
                    return Err(Error::InvalidSpec(
                        "closed-loop driver must be exogenous".into(),
                    ));
                }
                driver.validate()?;
                check_a(match map {
                    CatalogMap::ClampedLinear { a, .. } => *a,
                    CatalogMap::FactorFeedback { a, .. } => *a,
                })?;
            }
        }
        Ok(())
    }

    pub fn is_closed_loop(&self) -> bool {
        matches!(self.kind, ModelKind::ClosedLoop { .. })
    }

    /// Evaluates the closed-loop catalog map at `(y, rho, t)`.
    pub fn closed_loop_sigma(&self, y: f64, rho: f64, _t: f64) -> Result<(f64, f64)> {
        let ModelKind::ClosedLoop { map, .. } = &self.kind else {
            return Err(Error::WrongModelKind(
                "closed_loop_sigma needs a ClosedLoop spec",
            ));
        };
        if !y.is_finite() || !rho.is_finite() {
            return Err(Error::NonFinite("closed_loop_sigma input"));
        }
        Ok(map.eval(y, rho, self.sigma_min, self.sigma_max))
    }
}

/// Which part of the grid a coefficient path is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathDomain {
    /// Values are meaningful on `[-delta, T]` only.
    ModelWindow,
    /// Flanks carry the boundary-extension convention; the path may be fed
    /// to the smoothing filters.
    Extended,
}

/// A sampled coefficient trajectory on the grid.
///
/// Arrays hold one value per full-grid node. For `ModelWindow` paths the
/// flank entries are zero placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPath {
    pub grid: GridSpec,
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Exogenous factor values, when the model has one.
    pub factor: Option<Vec<f64>>,
    pub domain: PathDomain,
}

impl ParamPath {
    /// Appreciation values on the model window `[-delta, T]`.
    pub fn model_a(&self) -> &[f64] {
        &self.a[self.grid.model_first()..=self.grid.model_last()]
    }
    /// Volatility values on the model window `[-delta, T]`.
    pub fn model_sigma(&self) -> &[f64] {
        &self.sigma[self.grid.model_first()..=self.grid.model_last()]
    }
}

fn stationary_state(rates: &[f64], u: f64) -> usize {
    // Uniform jumps make the chain reversible with pi_i proportional to 1/rate_i.
    let weights: Vec<f64> = rates.iter().map(|&q| 1.0 / q).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return i;
        }
    }
    rates.len() - 1
}

/// Samples the regime state at every grid node via exact exponential holding
/// times; the state is piecewise constant and read at node times.
fn sample_regime_states<R: Rng>(
    rng: &mut R,
    grid: &GridSpec,
    rates: &[f64],
    initial: Option<usize>,
) -> Vec<usize> {
    let n = grid.node_count();
    let mut states = Vec::with_capacity(n);
    let mut state = match initial {
        Some(i) => i,
        None => stationary_state(rates, rng.gen::<f64>()),
    };
    // Next jump time, in absolute grid time. The chain starts at t_min so the
    // flank nodes see a well-defined state too (their sigma is overridden by
    // the extension convention later).
    let mut t = grid.t_min();
    let mut next_jump = t + holding_time(rng, rates[state]);
    for k in 0..n {
        let node_t = grid.time(k);
        while next_jump <= node_t {
            t = next_jump;
            state = jump_to(rng, rates.len(), state);
            next_jump = t + holding_time(rng, rates[state]);
        }
        states.push(state);
    }
    states
}

fn holding_time<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    if rate == 0.0 {
        f64::INFINITY
    } else {
        Exp::new(rate).expect("positive rate").sample(rng)
    }
}

fn jump_to<R: Rng>(rng: &mut R, n_states: usize, from: usize) -> usize {
    if n_states == 1 {
        return from;
    }
    let mut to = rng.gen_range(0..n_states - 1);
    if to >= from {
        to += 1;
    }
    to
}

/// Samples the exogenous coefficient path of a non-closed-loop model.
///
/// Deterministic in `(spec, grid, seed)`; consumes only the coefficient
/// stream, never the Brownian one. The result lives on the model window.
pub fn sample_exogenous(spec: &ModelSpec, grid: &GridSpec, seed: u64) -> Result<ParamPath> {
    spec.validate()?;
    if spec.is_closed_loop() {
        return Err(Error::WrongModelKind(
            "closed-loop coefficients are resolved inside the SDE step",
        ));
    }
    let mut rng = stream(seed, StreamKind::Coefficient);
    let n = grid.node_count();
    let (lo, hi) = (grid.model_first(), grid.model_last());
    let mut a = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    let mut factor = None;

    match &spec.kind {
        ModelKind::ConstantParams { a: a0, sigma: s0 } => {
            for k in lo..=hi {
                a[k] = *a0;
                sigma[k] = *s0;
            }
        }
        ModelKind::MarkovRegimeSwitch {
            a: a0,
            sigma_levels,
            switch_rates,
            initial_state,
        } => {
            let states = sample_regime_states(&mut rng, grid, switch_rates, *initial_state);
            let mut y = vec![0.0; n];
            for k in 0..n {
                y[k] = sigma_levels[states[k]];
            }
            for k in lo..=hi {
                a[k] = *a0;
                sigma[k] = y[k];
            }
            factor = Some(y);
        }
        ModelKind::FactorVol {
            a: a0,
            kappa,
            mean,
            vol,
            y0,
        } => {
            let h = grid.h();
            let decay = (-kappa * h).exp();
            let sd = vol * ((1.0 - decay * decay) / (2.0 * kappa)).sqrt();
            let mut y = Vec::with_capacity(n);
            let mut cur = *y0;
            y.push(cur);
            for _ in 1..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                cur = mean + (cur - mean) * decay + sd * z;
                y.push(cur);
            }
            let link =
                |v: f64| spec.sigma_min + (spec.sigma_max - spec.sigma_min) / (1.0 + (-v).exp());
            for k in lo..=hi {
                a[k] = *a0;
                sigma[k] = link(y[k]);
            }
            factor = Some(y);
        }
        ModelKind::ClosedLoop { .. } => unreachable!(),
    }

    Ok(ParamPath {
        grid: grid.clone(),
        a,
        sigma,
        factor,
        domain: PathDomain::ModelWindow,
    })
}

/// Samples the exogenous factor path feeding a closed-loop model.
///
/// The factor is the driver's volatility path, held constant at its edge
/// values on the flanks so the smoothed factor has no artificial boundary
/// layer inside the model window.
pub fn sample_closed_loop_factor(spec: &ModelSpec, grid: &GridSpec, seed: u64) -> Result<Vec<f64>> {
    let ModelKind::ClosedLoop { driver, .. } = &spec.kind else {
        return Err(Error::WrongModelKind(
            "sample_closed_loop_factor needs a ClosedLoop spec",
        ));
    };
    let inner = sample_exogenous(driver, grid, seed)?;
    let (lo, hi) = (grid.model_first(), grid.model_last());
    let mut y = inner.sigma;
    for k in 0..lo {
        y[k] = y[lo];
    }
    for k in hi + 1..grid.node_count() {
        y[k] = y[hi];
    }
    Ok(y)
}

/// Extends a model-window path onto the flanks: `a = 0` outside
/// `[-delta, T]`, `sigma = 1` on the flanks. The nodes at `-delta` and `T`
/// keep their model values. Beyond the flanks both coefficients are treated
/// as zero by the smoothing filters.
pub fn extend_boundary(path: &ParamPath) -> Result<ParamPath> {
    if path.domain != PathDomain::ModelWindow {
        return Err(Error::InvalidSpec("path is already extended".into()));
    }
    let grid = &path.grid;
    let mut out = path.clone();
    let (lo, hi) = (grid.model_first(), grid.model_last());
    for k in 0..lo {
        out.a[k] = 0.0;
        out.sigma[k] = 1.0;
    }
    for k in hi + 1..grid.node_count() {
        out.a[k] = 0.0;
        out.sigma[k] = 1.0;
    }
    out.domain = PathDomain::Extended;
    Ok(out)
}
