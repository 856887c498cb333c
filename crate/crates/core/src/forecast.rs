//! Extrapolation of smoothed coefficient paths from the observation window.
//!
//! Smoothing makes the coefficient path analytic, so its restriction to
//! `[-delta, 0]` determines its future. Exact analytic continuation from
//! samples is hopelessly ill-conditioned, so the artifact demonstrates the
//! mechanism with a ridge-regularized polynomial fit in a Chebyshev basis
//! mapped onto the observation window, evaluated past the window's right
//! edge, and always reports the achieved error instead of claiming
//! exactness.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mollify::{FilterKind, FilterSpec};
use crate::params::{GridSpec, ModelSpec};
use crate::scenario::PathDraw;
use crate::streams::child_seed;

const DOMAIN_SWEEP: u64 = u64::from_le_bytes(*b"fcstswep");

/// A fitted polynomial extrapolator.
///
/// The fit window maps affinely onto `[-1, 1]`; prediction times map beyond
/// `1`, where the Chebyshev recurrence still applies.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolator {
    pub degree: usize,
    pub lambda: f64,
    pub coeffs: Vec<f64>,
    pub window: (f64, f64),
    /// Root-mean-square reconstruction residual on the fit window.
    pub residual_rms: f64,
}

fn chebyshev_row(x: f64, degree: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(degree + 1);
    row.push(1.0);
    if degree >= 1 {
        row.push(x);
    }
    for k in 2..=degree {
        let next = 2.0 * x * row[k - 1] - row[k - 2];
        row.push(next);
    }
    row
}

fn chebyshev_eval(coeffs: &[f64], x: f64) -> f64 {
    let (mut t_prev, mut t_cur) = (1.0, x);
    let mut acc = coeffs[0];
    if coeffs.len() >= 2 {
        acc += coeffs[1] * x;
    }
    for &c in &coeffs[2..] {
        let t_next = 2.0 * x * t_cur - t_prev;
        acc += c * t_next;
        t_prev = t_cur;
        t_cur = t_next;
    }
    acc
}

/// Ridge-regularized least-squares fit of `values` sampled at `times`.
///
/// `lambda = 0` requires at least `degree + 1` distinct sample times.
pub fn fit(times: &[f64], values: &[f64], degree: usize, lambda: f64) -> Result<Extrapolator> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::EmptySample);
    }
    if lambda < 0.0 {
        return Err(Error::InvalidSpec("lambda must be >= 0".into()));
    }
    if times.len() < degree + 1 {
        return Err(Error::RankDeficient(format!(
            "{} samples cannot determine degree {degree}",
            times.len()
        )));
    }
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
    let spread_ok = hi > lo;
    if !spread_ok {
        return Err(Error::RankDeficient("all sample times coincide".into()));
    }
    if lambda == 0.0 {
        let mut sorted: Vec<f64> = times.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        if sorted.len() < degree + 1 {
            return Err(Error::RankDeficient(format!(
                "{} distinct nodes cannot determine degree {degree} without regularization",
                sorted.len()
            )));
        }
    }

    let to_x = |t: f64| 2.0 * (t - lo) / (hi - lo) - 1.0;
    let n = times.len();
    let mut design = DMatrix::zeros(n, degree + 1);
    for (i, &t) in times.iter().enumerate() {
        for (j, v) in chebyshev_row(to_x(t), degree).into_iter().enumerate() {
            design[(i, j)] = v;
        }
    }
    let rhs = DVector::from_column_slice(values);
    let mut normal = design.transpose() * &design;
    for j in 0..=degree {
        normal[(j, j)] += lambda;
    }
    let moment = design.transpose() * &rhs;
    let coeffs = normal
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("normal equations are singular".into()))?
        .solve(&moment);

    let fitted = &design * &coeffs;
    let residual_rms = ((&rhs - fitted).norm_squared() / n as f64).sqrt();
    Ok(Extrapolator {
        degree,
        lambda,
        coeffs: coeffs.iter().copied().collect(),
        window: (lo, hi),
        residual_rms,
    })
}

/// Evaluates the fitted polynomial at arbitrary times, inside or beyond the
/// fit window.
pub fn predict(e: &Extrapolator, times: &[f64]) -> Vec<f64> {
    let (lo, hi) = e.window;
    times
        .iter()
        .map(|&t| chebyshev_eval(&e.coeffs, 2.0 * (t - lo) / (hi - lo) - 1.0))
        .collect()
}

/// Relative `L^q` grid-norm error of a prediction against the truth.
pub fn prediction_error(predicted: &[f64], truth: &[f64], q: f64) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::GridMismatch);
    }
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidExponent(q));
    }
    let norm = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        xs.map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    };
    let denom = norm(&mut truth.iter().copied());
    if denom == 0.0 {
        return Err(Error::ZeroNormTruth);
    }
    let num = norm(&mut predicted.iter().zip(truth).map(|(p, t)| p - t));
    Ok(num / denom)
}

/// One row of the prediction-error sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eps: f64,
    pub degree: usize,
    pub lambda: f64,
    pub seed_index: u64,
    pub rel_error_q2: f64,
}

/// Prediction error of the smoothed volatility for one sampled path.
///
/// The extrapolator sees `sigma_eps` on the observation window only; the
/// truth on the first `predict_steps` trading-window steps comes from the
/// full-domain convolution.
pub fn predict_sigma_for_draw(
    spec: &ModelSpec,
    grid: &GridSpec,
    filter: &FilterSpec,
    seed: u64,
    degree: usize,
    lambda: f64,
    predict_steps: usize,
) -> Result<f64> {
    if predict_steps == 0 || predict_steps > grid.horizon_steps() {
        return Err(Error::InvalidSpec(format!(
            "cannot predict {predict_steps} steps over a {}-step trading window",
            grid.horizon_steps()
        )));
    }
    let draw = PathDraw::sample(spec, grid, seed)?;
    let smoothed = draw.smoothed(spec, filter)?;
    let sigma = smoothed.params.model_sigma();
    let zero = grid.lookback_steps();
    let fit_times: Vec<f64> = (0..=zero).map(|k| grid.model_time(k)).collect();
    let e = fit(&fit_times, &sigma[..=zero], degree, lambda)?;
    let predict_times: Vec<f64> = (zero..=zero + predict_steps)
        .map(|k| grid.model_time(k))
        .collect();
    let predicted = predict(&e, &predict_times);
    prediction_error(&predicted, &sigma[zero..=zero + predict_steps], 2.0)
}

/// Sweeps the prediction experiment over a bandwidth schedule and seeds.
#[allow(clippy::too_many_arguments)]
pub fn prediction_sweep(
    spec: &ModelSpec,
    grid: &GridSpec,
    filter_kind: FilterKind,
    eps_list: &[f64],
    degree: usize,
    lambda: f64,
    n_seeds: u64,
    predict_steps: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &eps in eps_list {
        let filter = FilterSpec::from_bandwidth(filter_kind, eps);
        filter.validate(grid.h())?;
        let errs: Vec<f64> = (0..n_seeds)
            .into_par_iter()
            .map(|i| {
                predict_sigma_for_draw(
                    spec,
                    grid,
                    &filter,
                    child_seed(seed, DOMAIN_SWEEP, i),
                    degree,
                    lambda,
                    predict_steps,
                )
            })
            .collect::<Result<_>>()?;
        for (i, err) in errs.into_iter().enumerate() {
            rows.push(SweepRow {
                eps,
                degree,
                lambda,
                seed_index: i as u64,
                rel_error_q2: err,
            });
        }
    }
    Ok(rows)
}

/// Median of a sample; used by the smoothness-monotonicity checks.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
