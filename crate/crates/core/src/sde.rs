//! Log-Euler integration of the stock-price equation.
//!
//! Prices follow `dS = S (a dt + sigma dw)`. We integrate the log price
//! `dR = (a - sigma^2/2) dt + sigma dw` with coefficients frozen at the left
//! node of each step, which keeps the evaluation non-anticipative, preserves
//! positivity and is exact for constant coefficients. Paired integrations
//! consume the same Brownian increments so that pathwise distances between
//! the original and the smoothed model are meaningful.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::params::{GridSpec, ModelSpec, ParamPath, PathDomain};
use crate::streams::{stream, StreamKind};

/// Gaussian increments of the driving Brownian motion, one per grid
/// interval of the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    pub grid: GridSpec,
    pub dw: Vec<f64>,
    pub seed: u64,
}

/// A log-price trajectory on the model window `[-delta, T]`; node 0 is
/// `-delta` where the price is the non-random `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub grid: GridSpec,
    pub log_prices: Vec<f64>,
}

impl PricePath {
    pub fn s0(&self) -> f64 {
        self.log_prices[0].exp()
    }

    /// Prices `S(t) = exp(R(t))` at the model-window nodes.
    pub fn prices(&self) -> Vec<f64> {
        self.log_prices.iter().map(|r| r.exp()).collect()
    }

    /// Index of the node at `t = 0` within the model window.
    pub fn zero_index(&self) -> usize {
        self.grid.lookback_steps()
    }
}

/// Draws i.i.d. `N(0, h)` increments for every interval of the grid.
pub fn brownian(grid: &GridSpec, seed: u64) -> BrownianIncrements {
    let mut rng = stream(seed, StreamKind::Brownian);
    let sqrt_h = grid.h().sqrt();
    let dw = (0..grid.node_count() - 1)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sqrt_h
        })
        .collect();
    BrownianIncrements {
        grid: grid.clone(),
        dw,
        seed,
    }
}

/// Splits every increment into `2^levels` conditionally-consistent pieces via
/// midpoint Brownian bridging, so the refined path and the coarse path are
/// realizations of one underlying Brownian motion.
pub fn refine_brownian(bw: &BrownianIncrements, levels: u32, seed: u64) -> BrownianIncrements {
    let mut grid = bw.grid.clone();
    let mut dw = bw.dw.clone();
    let mut rng = stream(seed, StreamKind::BridgeRefine);
    for _ in 0..levels {
        let h = grid.h();
        let mut fine = Vec::with_capacity(dw.len() * 2);
        for &inc in &dw {
            // First half of an N(0, h) increment given the total: mean inc/2,
            // variance h/4.
            let z: f64 = StandardNormal.sample(&mut rng);
            let first = 0.5 * inc + 0.5 * h.sqrt() * z;
            fine.push(first);
            fine.push(inc - first);
        }
        grid = grid.refine(2);
        dw = fine;
    }
    BrownianIncrements {
        grid,
        dw,
        seed: bw.seed,
    }
}

fn check_coupled(params: &ParamPath, bw: &BrownianIncrements) -> Result<()> {
    if params.grid != bw.grid {
        return Err(Error::GridMismatch);
    }
    let (lo, hi) = (params.grid.model_first(), params.grid.model_last());
    for k in lo..=hi {
        if !params.a[k].is_finite() || !params.sigma[k].is_finite() {
            return Err(Error::NonFinite("coefficient path"));
        }
    }
    Ok(())
}

/// Integrates the log-price recursion over the model window.
///
/// `R_{k+1} = R_k + (a_k - sigma_k^2 / 2) h + sigma_k dw_k`, from `-delta`
/// to `T`, coefficients frozen at the left node.
pub fn integrate(params: &ParamPath, bw: &BrownianIncrements, s0: f64) -> Result<PricePath> {
    check_coupled(params, bw)?;
    let grid = &params.grid;
    let h = grid.h();
    let (lo, hi) = (grid.model_first(), grid.model_last());
    let mut log_prices = Vec::with_capacity(grid.model_node_count());
    let mut r = s0.ln();
    log_prices.push(r);
    for k in lo..hi {
        let (a, s) = (params.a[k], params.sigma[k]);
        r += (a - 0.5 * s * s) * h + s * bw.dw[k];
        log_prices.push(r);
    }
    Ok(PricePath {
        grid: grid.clone(),
        log_prices,
    })
}

/// Integrates a closed-loop model: at each step the coefficients come from
/// the catalog map evaluated at the current factor value and log price.
///
/// Returns the price path together with the realized coefficient path.
pub fn integrate_closed_loop(
    spec: &ModelSpec,
    factor: &[f64],
    bw: &BrownianIncrements,
    s0: f64,
) -> Result<(PricePath, ParamPath)> {
    let grid = &bw.grid;
    if factor.len() != grid.node_count() {
        return Err(Error::GridMismatch);
    }
    let h = grid.h();
    let (lo, hi) = (grid.model_first(), grid.model_last());
    let n = grid.node_count();
    let mut a_path = vec![0.0; n];
    let mut sigma_path = vec![0.0; n];
    let mut log_prices = Vec::with_capacity(grid.model_node_count());
    let mut r = s0.ln();
    log_prices.push(r);
    for k in lo..=hi {
        let (a, s) = spec.closed_loop_sigma(factor[k], r, grid.time(k))?;
        a_path[k] = a;
        sigma_path[k] = s;
        if k < hi {
            r += (a - 0.5 * s * s) * h + s * bw.dw[k];
            log_prices.push(r);
        }
    }
    let params = ParamPath {
        grid: grid.clone(),
        a: a_path,
        sigma: sigma_path,
        factor: Some(factor.to_vec()),
        domain: PathDomain::ModelWindow,
    };
    Ok((
        PricePath {
            grid: grid.clone(),
            log_prices,
        },
        params,
    ))
}

/// Integrates two coefficient paths against the same Brownian increments.
pub fn integrate_paired(
    params: &ParamPath,
    params_smoothed: &ParamPath,
    bw: &BrownianIncrements,
    s0: f64,
) -> Result<(PricePath, PricePath)> {
    if params.grid != params_smoothed.grid {
        return Err(Error::GridMismatch);
    }
    Ok((
        integrate(params, bw, s0)?,
        integrate(params_smoothed, bw, s0)?,
    ))
}
