//! Closeness functionals between a model and its smoothed twin.
//!
//! Per path we measure the `L^q` coefficient distance
//! `integral over [-delta, T] of |mu_eps - mu|^q dt` (Euclidean norm in the
//! `(a, sigma)` plane) and the sup distances `(sup |S_eps - S|)^q` and
//! `(sup |log S_eps - log S|)^q`, with the node maximum standing in for the
//! continuous sup. A convergence study repeats this over a decreasing
//! bandwidth schedule with all smoothing levels coupled to the same Brownian
//! draws, reporting Monte Carlo means with standard errors.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mollify::{FilterKind, FilterSpec};
use crate::params::{GridSpec, ModelSpec, ParamPath};
use crate::scenario::PathDraw;
use crate::sde::PricePath;
use crate::streams::child_seed;

const DOMAIN_PATH: u64 = u64::from_le_bytes(*b"closepth");

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Estimate { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Estimate {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

/// Closeness summary for one bandwidth.
#[derive(Debug, Clone)]
pub struct ClosenessReport {
    pub eps: f64,
    pub q: f64,
    pub n_paths: usize,
    pub coeff_term: Estimate,
    pub sup_term: Estimate,
    pub log_sup_term: Estimate,
    /// Per-path paired decreases from the previous (larger) bandwidth in
    /// the schedule; `None` on the first entry. Because every bandwidth
    /// re-smooths the same draws, the paired standard error is the right
    /// yardstick for trend significance.
    pub coeff_decrease: Option<Estimate>,
    pub sup_decrease: Option<Estimate>,
    pub log_sup_decrease: Option<Estimate>,
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidExponent(q));
    }
    Ok(())
}

/// Trapezoid integral of `|mu_eps - mu|^q` over the model window.
pub fn coeff_distance(mu: &ParamPath, mu_eps: &ParamPath, q: f64) -> Result<f64> {
    check_q(q)?;
    if mu.grid != mu_eps.grid {
        return Err(Error::GridMismatch);
    }
    let h = mu.grid.h();
    let (a, s) = (mu.model_a(), mu.model_sigma());
    let (ae, se) = (mu_eps.model_a(), mu_eps.model_sigma());
    let integrand = |k: usize| {
        let da = ae[k] - a[k];
        let ds = se[k] - s[k];
        (da * da + ds * ds).sqrt().powf(q)
    };
    let n = a.len();
    let mut acc = 0.5 * (integrand(0) + integrand(n - 1));
    for k in 1..n - 1 {
        acc += integrand(k);
    }
    Ok(acc * h)
}

fn sup_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// `(max over nodes of |S_eps - S|)^q`.
pub fn sup_distance(s: &PricePath, s_eps: &PricePath, q: f64) -> Result<f64> {
    check_q(q)?;
    if s.grid != s_eps.grid {
        return Err(Error::GridMismatch);
    }
    Ok(sup_abs_diff(&s.prices(), &s_eps.prices()).powf(q))
}

/// `(max over nodes of |log S_eps - log S|)^q`.
pub fn log_sup_distance(s: &PricePath, s_eps: &PricePath, q: f64) -> Result<f64> {
    check_q(q)?;
    if s.grid != s_eps.grid {
        return Err(Error::GridMismatch);
    }
    Ok(sup_abs_diff(&s.log_prices, &s_eps.log_prices).powf(q))
}

/// Runs the paired closeness experiment over a decreasing bandwidth list.
///
/// Path `i` draws its own coefficient and Brownian randomness from
/// `child_seed(seed, ., i)`; every bandwidth re-smooths the same draw, so
/// the reports are coupled across the schedule.
pub fn convergence_study(
    spec: &ModelSpec,
    grid: &GridSpec,
    filter_kind: FilterKind,
    eps_list: &[f64],
    q: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ClosenessReport>> {
    check_q(q)?;
    if n_paths == 0 {
        return Err(Error::EmptySample);
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSpec(
            "bandwidth list must be strictly decreasing".into(),
        ));
    }
    for &eps in eps_list {
        FilterSpec::from_bandwidth(filter_kind, eps).validate(grid.h())?;
    }

    let per_path: Vec<Vec<(f64, f64, f64)>> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64, f64)>> {
            let draw = PathDraw::sample(spec, grid, child_seed(seed, DOMAIN_PATH, i as u64))?;
            let original = draw.original(spec)?;
            let mut rows = Vec::with_capacity(eps_list.len());
            for &eps in eps_list {
                let filter = FilterSpec::from_bandwidth(filter_kind, eps);
                let smoothed = draw.smoothed(spec, &filter)?;
                rows.push((
                    coeff_distance(&original.params, &smoothed.params, q)?,
                    sup_distance(&original.price, &smoothed.price, q)?,
                    log_sup_distance(&original.price, &smoothed.price, q)?,
                ));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    Ok(eps_list
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let coeff: Vec<f64> = per_path.iter().map(|rows| rows[j].0).collect();
            let sup: Vec<f64> = per_path.iter().map(|rows| rows[j].1).collect();
            let log_sup: Vec<f64> = per_path.iter().map(|rows| rows[j].2).collect();
            let decrease = |pick: fn(&(f64, f64, f64)) -> f64| {
                (j > 0).then(|| {
                    let diffs: Vec<f64> = per_path
                        .iter()
                        .map(|rows| pick(&rows[j - 1]) - pick(&rows[j]))
                        .collect();
                    Estimate::from_samples(&diffs)
                })
            };
            ClosenessReport {
                eps,
                q,
                n_paths,
                coeff_term: Estimate::from_samples(&coeff),
                sup_term: Estimate::from_samples(&sup),
                log_sup_term: Estimate::from_samples(&log_sup),
                coeff_decrease: decrease(|r| r.0),
                sup_decrease: decrease(|r| r.1),
                log_sup_decrease: decrease(|r| r.2),
            }
        })
        .collect())
}
