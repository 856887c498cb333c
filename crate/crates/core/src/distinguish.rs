//! Statistical indistinguishability experiments.
//!
//! An observer collects rounded, subsampled prices over the observation
//! window `[-delta, 0]` from two worlds: the original model and its smoothed
//! twin (simulated with independent Brownian draws, because a statistician
//! never sees coupled worlds). The per-path feature is windowed realized
//! variance; the two feature samples are compared with a two-sample
//! Kolmogorov-Smirnov test. As the smoothing bandwidth shrinks the test's
//! rejection rate collapses to the significance level: the two worlds become
//! indistinguishable from market statistics alone.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mollify::{FilterKind, FilterSpec};
use crate::params::{GridSpec, ModelSpec};
use crate::scenario::PathDraw;
use crate::sde::PricePath;
use crate::streams::child_seed;

const DOMAIN_TRIAL: u64 = u64::from_le_bytes(*b"dsttrial");
const DOMAIN_ORIGINAL: u64 = u64::from_le_bytes(*b"dstorigw");
const DOMAIN_SMOOTHED: u64 = u64::from_le_bytes(*b"dstsmthw");

/// Largest sample product for which the exact lattice p-value is computed;
/// larger samples fall back to the asymptotic formula.
const EXACT_KS_MAX_PRODUCT: usize = 1 << 20;

/// Rounded prices sampled every `sample_every` grid steps over the
/// observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub dt: f64,
    pub tick: f64,
    pub values: Vec<f64>,
}

/// Outcome of a two-sample test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
}

/// Subsamples a price path on `[-delta, 0]` at spacing `dt` and rounds to
/// the tick grid, ties to even.
pub fn observe(path: &PricePath, dt: f64, tick: f64) -> Result<ObservationSeries> {
    if !(tick > 0.0 && tick.is_finite()) {
        return Err(Error::InvalidObservation(format!(
            "tick {tick} must be positive"
        )));
    }
    let h = path.grid.h();
    let ratio = dt / h;
    let every = ratio.round();
    if (ratio - every).abs() > 1e-9 * ratio.max(1.0) || every < 1.0 {
        return Err(Error::InvalidObservation(format!(
            "sample interval {dt} is not a whole number of grid steps {h}"
        )));
    }
    let every = every as usize;
    let zero = path.zero_index();
    if !zero.is_multiple_of(every) {
        return Err(Error::InvalidObservation(
            "sample interval does not divide the observation window".into(),
        ));
    }
    let values = (0..=zero / every)
        .map(|i| round_to_tick(path.log_prices[i * every].exp(), tick))
        .collect();
    Ok(ObservationSeries {
        dt: every as f64 * h,
        tick,
        values,
    })
}

/// Rounds to the nearest tick multiple, ties to even.
fn round_to_tick(s: f64, tick: f64) -> f64 {
    (s / tick).round_ties_even() * tick
}

/// Sum of squared log returns over the observation window.
pub fn realized_variance(series: &ObservationSeries) -> Result<f64> {
    if series.values.len() < 2 {
        return Err(Error::EmptySample);
    }
    if series.values.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidObservation(
            "rounded price is not positive; the tick is too coarse".into(),
        ));
    }
    Ok(series
        .values
        .windows(2)
        .map(|w| {
            let r = (w[1] / w[0]).ln();
            r * r
        })
        .sum())
}

fn ks_statistic_scaled(xs: &mut [f64], ys: &mut [f64]) -> u64 {
    // Max over the pooled order of |i*m - j*n|, an exact integer version of
    // the CDF gap max |i/n - j/m|.
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0i64;
    while i < n || j < m {
        let next_x = xs.get(i).copied().unwrap_or(f64::INFINITY);
        let next_y = ys.get(j).copied().unwrap_or(f64::INFINITY);
        let cur = next_x.min(next_y);
        while i < n && xs[i] == cur {
            i += 1;
        }
        while j < m && ys[j] == cur {
            j += 1;
        }
        best = best.max((i as i64 * m as i64 - j as i64 * n as i64).abs());
    }
    best as u64
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Exact permutation-null probability of a lattice-path statistic at least
/// `c0` (in `|i*m - j*n|` units), by counting monotone paths that stay
/// strictly inside the band.
fn ks_exact_p(n: usize, m: usize, c0: u64) -> f64 {
    if c0 == 0 {
        return 1.0;
    }
    // paths[j] = number of admissible lattice paths reaching (i, j), scaled
    // by 2^(-shift) to stay inside f64 range.
    let mut paths = vec![0.0f64; m + 1];
    let mut shift = 0i64;
    paths[0] = 1.0;
    for i in 0..=n {
        for j in 0..=m {
            if (i as i64 * m as i64 - j as i64 * n as i64).unsigned_abs() >= c0 {
                paths[j] = 0.0;
            } else if j > 0 {
                paths[j] += paths[j - 1];
            }
            // i > 0 contribution is already in paths[j] (row reuse).
        }
        let peak = paths.iter().cloned().fold(0.0f64, f64::max);
        if peak > 1e280 {
            paths.iter_mut().for_each(|p| *p *= 0.5f64.powi(512));
            shift += 512;
        }
    }
    let inside = paths[m];
    if inside == 0.0 {
        return 1.0;
    }
    let ln_inside = inside.ln() + shift as f64 * std::f64::consts::LN_2;
    let p = 1.0 - (ln_inside - ln_binomial((n + m) as u64, n as u64)).exp();
    p.clamp(0.0, 1.0)
}

/// Asymptotic Kolmogorov tail with the finite-sample correction of the
/// effective sample size.
fn ks_asymptotic_p(d: f64, n: usize, m: usize) -> f64 {
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    // The alternating series only converges for lambda away from zero.
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
    }
    p.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test at level `alpha`.
///
/// Small tie-free samples get the exact permutation-null p-value via
/// lattice-path counting; large ones (or samples with ties) use the
/// asymptotic tail.
pub fn ks_two_sample(xs: &[f64], ys: &[f64], alpha: f64) -> Result<TestResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptySample);
    }
    let (n, m) = (xs.len(), ys.len());
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    let scaled = ks_statistic_scaled(&mut xs, &mut ys);
    let statistic = scaled as f64 / (n as f64 * m as f64);

    let mut pooled: Vec<f64> = xs.iter().chain(ys.iter()).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let has_ties = pooled.windows(2).any(|w| w[0] == w[1]);

    let p_value = if !has_ties && n * m <= EXACT_KS_MAX_PRODUCT {
        ks_exact_p(n, m, scaled)
    } else {
        ks_asymptotic_p(statistic, n, m)
    };
    Ok(TestResult {
        statistic,
        p_value,
        rejected: p_value < alpha,
    })
}

/// What the smoothed-side sample is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparison {
    /// Original model versus its smoothed twin at the given bandwidth.
    SmoothedAt(f64),
    /// Original model versus itself: calibrates the test's null level.
    NullCalibration,
}

/// Rejection-rate summary over repeated trials, with a three-sigma binomial
/// interval around the observed rate.
#[derive(Debug, Clone)]
pub struct RejectionSummary {
    pub n_trials: usize,
    pub n_rejected: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn observed_variance_feature(
    spec: &ModelSpec,
    grid: &GridSpec,
    filter: Option<&FilterSpec>,
    dt: f64,
    tick: f64,
    seed: u64,
) -> Result<f64> {
    let draw = PathDraw::sample(spec, grid, seed)?;
    let world = match filter {
        Some(f) => draw.smoothed(spec, f)?,
        None => draw.original(spec)?,
    };
    realized_variance(&observe(&world.price, dt, tick)?)
}

/// Runs `n_trials` independent two-sample experiments and reports how often
/// the test rejects at level `alpha`.
///
/// Each trial draws `n_paths_per_trial` observation windows from each side
/// with independent randomness.
#[allow(clippy::too_many_arguments)]
pub fn indistinguishability_experiment(
    spec: &ModelSpec,
    grid: &GridSpec,
    filter_kind: FilterKind,
    comparison: Comparison,
    dt: f64,
    tick: f64,
    n_trials: usize,
    n_paths_per_trial: usize,
    alpha: f64,
    seed: u64,
) -> Result<RejectionSummary> {
    if n_trials < 100 {
        return Err(Error::InvalidSpec(format!(
            "need at least 100 trials for a stable rejection rate, got {n_trials}"
        )));
    }
    if n_paths_per_trial == 0 {
        return Err(Error::EmptySample);
    }
    let filter = match comparison {
        Comparison::SmoothedAt(eps) => {
            let f = FilterSpec::from_bandwidth(filter_kind, eps);
            f.validate(grid.h())?;
            Some(f)
        }
        Comparison::NullCalibration => None,
    };
    let rejections: Vec<bool> = (0..n_trials)
        .into_par_iter()
        .map(|t| -> Result<bool> {
            let trial_seed = child_seed(seed, DOMAIN_TRIAL, t as u64);
            let mut xs = Vec::with_capacity(n_paths_per_trial);
            let mut ys = Vec::with_capacity(n_paths_per_trial);
            for i in 0..n_paths_per_trial {
                xs.push(observed_variance_feature(
                    spec,
                    grid,
                    None,
                    dt,
                    tick,
                    child_seed(trial_seed, DOMAIN_ORIGINAL, i as u64),
                )?);
                ys.push(observed_variance_feature(
                    spec,
                    grid,
                    filter.as_ref(),
                    dt,
                    tick,
                    child_seed(trial_seed, DOMAIN_SMOOTHED, i as u64),
                )?);
            }
            Ok(ks_two_sample(&xs, &ys, alpha)?.rejected)
        })
        .collect::<Result<_>>()?;
    let n_rejected = rejections.iter().filter(|&&r| r).count();
    let rate = n_rejected as f64 / n_trials as f64;
    let half = 3.0 * (rate * (1.0 - rate) / n_trials as f64).sqrt();
    Ok(RejectionSummary {
        n_trials,
        n_rejected,
        rate,
        ci_low: (rate - half).max(0.0),
        ci_high: (rate + half).min(1.0),
    })
}

/// One row of a rejection-rate curve.
#[derive(Debug, Clone)]
pub struct PowerCurveRow {
    pub eps: f64,
    pub dt: f64,
    pub tick: f64,
    pub summary: RejectionSummary,
}

/// Maps the indistinguishability experiment over a bandwidth list, passing
/// the seed through unchanged so a one-entry list reproduces the single
/// experiment exactly. `eps = 0` rows are null calibrations (original
/// versus itself).
#[allow(clippy::too_many_arguments)]
pub fn power_curve(
    spec: &ModelSpec,
    grid: &GridSpec,
    filter_kind: FilterKind,
    eps_list: &[f64],
    dt: f64,
    tick: f64,
    n_trials: usize,
    n_paths_per_trial: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<PowerCurveRow>> {
    eps_list
        .iter()
        .map(|&eps| {
            let comparison = if eps == 0.0 {
                Comparison::NullCalibration
            } else {
                Comparison::SmoothedAt(eps)
            };
            let summary = indistinguishability_experiment(
                spec,
                grid,
                filter_kind,
                comparison,
                dt,
                tick,
                n_trials,
                n_paths_per_trial,
                alpha,
                seed,
            )?;
            Ok(PowerCurveRow {
                eps,
                dt,
                tick,
                summary,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{GridSpec, ParamPath, PathDomain};
    use crate::sde::{brownian, integrate};
    use crate::streams::child_seed;

    fn price_path(g: &GridSpec, seed: u64, sigma: f64, a: f64) -> PricePath {
        let p = ParamPath {
            grid: g.clone(),
            a: vec![a; g.node_count()],
            sigma: vec![sigma; g.node_count()],
            factor: None,
            domain: PathDomain::ModelWindow,
        };
        integrate(&p, &brownian(g, seed), 100.0).unwrap()
    }

    #[test]
    fn tiny_tick_preserves_the_path() {
        let g = GridSpec::new(0.25, 0.25, 0.25, 0.005).unwrap();
        let path = price_path(&g, 1, 0.2, 0.05);
        let obs = observe(&path, 0.005, 1e-9).unwrap();
        let raw = path.prices();
        for (i, &v) in obs.values.iter().enumerate() {
            assert!((v - raw[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn rounding_is_half_to_even_and_bounded() {
        let g = GridSpec::new(0.25, 0.25, 0.25, 0.005).unwrap();
        let mut path = price_path(&g, 1, 0.2, 0.05);
        for r in path.log_prices.iter_mut() {
            *r = 100.004f64.ln();
        }
        let obs = observe(&path, 0.005, 0.01).unwrap();
        assert!(obs.values.iter().all(|&v| (v - 100.0).abs() < 1e-12));
        // Ties round to the even multiple (exact binary inputs).
        assert_eq!(round_to_tick(2.5, 1.0), 2.0);
        assert_eq!(round_to_tick(3.5, 1.0), 4.0);
        assert_eq!(round_to_tick(100.125, 0.25), 100.0);
        let real = price_path(&g, 2, 0.2, 0.05);
        let obs = observe(&real, 0.005, 0.01).unwrap();
        let raw = real.prices();
        for (i, &v) in obs.values.iter().enumerate() {
            assert!((v - raw[i]).abs() <= 0.005 + 1e-12);
        }
    }

    #[test]
    fn observation_is_idempotent() {
        let g = GridSpec::new(0.25, 0.25, 0.25, 0.005).unwrap();
        let path = price_path(&g, 7, 0.2, 0.05);
        let once = observe(&path, 0.01, 0.01).unwrap();
        let mut as_path = path.clone();
        // Re-observe a path holding the already-rounded values.
        for (i, r) in as_path.log_prices.iter_mut().enumerate() {
            let every = (0.01 / g.h()).round() as usize;
            if i % every == 0 && i / every < once.values.len() {
                *r = once.values[i / every].ln();
            }
        }
        let twice = observe(&as_path, 0.01, 0.01).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn misaligned_sampling_rejected() {
        let g = GridSpec::new(0.25, 0.25, 0.25, 0.01).unwrap();
        let path = price_path(&g, 1, 0.2, 0.05);
        assert!(observe(&path, 0.015, 0.01).is_err());
    }

    #[test]
    fn realized_variance_basics() {
        let series = ObservationSeries {
            dt: 1.0,
            tick: 1e-9,
            values: vec![100.0, 100.0, 100.0],
        };
        assert_eq!(realized_variance(&series).unwrap(), 0.0);
        let series = ObservationSeries {
            dt: 1.0,
            tick: 1e-9,
            values: vec![100.0, 110.0],
        };
        let rv = realized_variance(&series).unwrap();
        assert!((rv - 1.1f64.ln().powi(2)).abs() < 1e-15);
        assert!((rv - 0.009_084_030_374_332_7).abs() < 1e-12);
        let bad = ObservationSeries {
            dt: 1.0,
            tick: 1.0,
            values: vec![1.0, 0.0],
        };
        assert!(realized_variance(&bad).is_err());
    }

    #[test]
    fn realized_variance_estimates_integrated_variance() {
        // Constant sigma = 0.2, one-year window sampled daily: the mean RV
        // over 1000 paths is 0.04 within 3 SE.
        let h = 1.0 / 504.0;
        let g = GridSpec::new(1.0, 0.25, 0.25, h).unwrap();
        let n_paths = 1000;
        let mut rvs = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            let path = price_path(&g, child_seed(90, 0, i as u64), 0.2, 0.05);
            let obs = observe(&path, 2.0 * h, 1e-9).unwrap();
            rvs.push(realized_variance(&obs).unwrap());
        }
        let mean = rvs.iter().sum::<f64>() / n_paths as f64;
        let var = rvs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_paths - 1) as f64;
        let se = (var / n_paths as f64).sqrt();
        assert!(
            (mean - 0.04).abs() <= 3.0 * se,
            "mean {mean}, 3 SE {}",
            3.0 * se
        );
    }

    #[test]
    fn ks_identical_and_disjoint_samples() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        let r = ks_two_sample(&xs, &xs, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.rejected);
        let ys = vec![10.0, 11.0, 12.0];
        let r = ks_two_sample(&xs, &ys, 0.05).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    /// Brute-force permutation oracle: enumerate every split of the pooled
    /// sample and count statistics at least as large as observed.
    fn permutation_p(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = xs.iter().chain(ys.iter()).copied().collect();
        let n = xs.len();
        let total = pooled.len();
        let d_obs = {
            let mut a = xs.to_vec();
            let mut b = ys.to_vec();
            ks_statistic_scaled(&mut a, &mut b)
        };
        let mut count = 0usize;
        let mut splits = 0usize;
        for mask in 0u32..(1 << total) {
            if mask.count_ones() as usize != n {
                continue;
            }
            splits += 1;
            let mut a = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(total - n);
            for (i, &v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    a.push(v);
                } else {
                    b.push(v);
                }
            }
            if ks_statistic_scaled(&mut a, &mut b) >= d_obs {
                count += 1;
            }
        }
        (
            d_obs as f64 / (n as f64 * (total - n) as f64),
            count as f64 / splits as f64,
        )
    }

    #[test]
    fn exact_p_matches_full_permutation_enumeration() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 2.0, 3.0], vec![1.5, 2.5]),
            (vec![0.1, 0.4, 0.8, 0.9], vec![0.2, 0.3, 0.5]),
            (vec![5.0, 6.0], vec![1.0, 2.0, 3.0]),
            (vec![1.0, 3.0, 5.0, 7.0, 9.0], vec![2.0, 4.0, 6.0, 8.0]),
        ];
        for (xs, ys) in cases {
            let (d_oracle, p_oracle) = permutation_p(&xs, &ys);
            let r = ks_two_sample(&xs, &ys, 0.05).unwrap();
            assert!((r.statistic - d_oracle).abs() < 1e-12);
            assert!(
                (r.p_value - p_oracle).abs() < 1e-10,
                "exact p {} vs oracle {} for {xs:?} vs {ys:?}",
                r.p_value,
                p_oracle
            );
        }
        // The worked example: D = 1/3 with a fully enumerable null.
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5], 0.05).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_invariant_under_monotone_transforms() {
        let xs: Vec<f64> = (1..40)
            .map(|k| 1.0 + (k as f64 * 0.37).sin().abs())
            .collect();
        let ys: Vec<f64> = (1..35)
            .map(|k| 1.2 + (k as f64 * 0.53).cos().abs())
            .collect();
        let base = ks_two_sample(&xs, &ys, 0.05).unwrap();
        let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        let logged = ks_two_sample(&lx, &ly, 0.05).unwrap();
        assert!((base.statistic - logged.statistic).abs() <= 1e-12);
    }

    #[test]
    fn exact_and_asymptotic_p_agree_for_moderate_samples() {
        let xs: Vec<f64> = (0..200).map(|k| ((k * 7919) % 1009) as f64).collect();
        let ys: Vec<f64> = (0..200).map(|k| ((k * 6007) % 1013) as f64 + 0.5).collect();
        let mut a = xs.clone();
        let mut b = ys.clone();
        let scaled = ks_statistic_scaled(&mut a, &mut b);
        let d = scaled as f64 / (200.0 * 200.0);
        let exact = ks_exact_p(200, 200, scaled);
        let asym = ks_asymptotic_p(d, 200, 200);
        assert!(
            (exact - asym).abs() < 0.02,
            "exact {exact} vs asymptotic {asym}"
        );
    }

    #[test]
    fn empty_bandwidth_list_gives_empty_curve() {
        let g = GridSpec::new(0.25, 0.25, 0.25, 0.005).unwrap();
        let spec = crate::params::ModelSpec::new(
            crate::params::ModelKind::ConstantParams {
                a: 0.05,
                sigma: 0.2,
            },
            0.05,
            100.0,
            0.05,
            0.6,
            0.2,
        )
        .unwrap();
        let rows = power_curve(
            &spec,
            &g,
            FilterKind::Gaussian,
            &[],
            0.005,
            1e-4,
            200,
            8,
            0.05,
            1,
        )
        .unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn single_entry_curve_equals_the_single_experiment() {
        let g = GridSpec::new(0.25, 0.25, 0.25, 0.005).unwrap();
        let spec = crate::params::ModelSpec::new(
            crate::params::ModelKind::ConstantParams {
                a: 0.05,
                sigma: 0.2,
            },
            0.05,
            100.0,
            0.05,
            0.6,
            0.2,
        )
        .unwrap();
        let rows = power_curve(
            &spec,
            &g,
            FilterKind::Gaussian,
            &[0.025],
            0.005,
            1e-4,
            100,
            8,
            0.05,
            5,
        )
        .unwrap();
        let single = indistinguishability_experiment(
            &spec,
            &g,
            FilterKind::Gaussian,
            Comparison::SmoothedAt(0.025),
            0.005,
            1e-4,
            100,
            8,
            0.05,
            5,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].summary.n_rejected, single.n_rejected);
        assert_eq!(rows[0].summary.rate, single.rate);
    }

    #[test]
    fn too_few_trials_rejected() {
        let g = GridSpec::new(0.25, 0.25, 0.25, 0.005).unwrap();
        let spec = crate::params::ModelSpec::new(
            crate::params::ModelKind::ConstantParams {
                a: 0.05,
                sigma: 0.2,
            },
            0.05,
            100.0,
            0.05,
            0.6,
            0.2,
        )
        .unwrap();
        assert!(indistinguishability_experiment(
            &spec,
            &g,
            FilterKind::Gaussian,
            Comparison::NullCalibration,
            0.005,
            1e-4,
            50,
            8,
            0.05,
            1
        )
        .is_err());
    }
}
