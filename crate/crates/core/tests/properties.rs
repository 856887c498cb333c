//! Property tests for the invariants that must hold on arbitrary inputs.

use mollify_markets_core::distinguish::{ks_two_sample, observe, ObservationSeries};
use mollify_markets_core::metrics::{log_sup_distance, sup_distance};
use mollify_markets_core::mollify::{build_kernel, FilterSpec};
use mollify_markets_core::params::{
    extend_boundary, sample_exogenous, GridSpec, ModelKind, ModelSpec, ParamPath, PathDomain,
};
use mollify_markets_core::sde::{brownian, integrate, PricePath};
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::new(0.25, 0.5, 0.25, 0.01).unwrap()
}

fn regime_spec(rate: f64) -> ModelSpec {
    ModelSpec::new(
        ModelKind::MarkovRegimeSwitch {
            a: 0.05,
            sigma_levels: vec![0.1, 0.3],
            switch_rates: vec![rate, rate],
            initial_state: None,
        },
        0.05,
        100.0,
        0.05,
        0.6,
        0.2,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn sampled_coefficients_respect_bounds(seed in 0u64..1_000_000, rate in 0.1f64..16.0) {
        let spec = regime_spec(rate);
        let g = grid();
        let p = sample_exogenous(&spec, &g, seed).unwrap();
        for &s in p.model_sigma() {
            prop_assert!((spec.sigma_min..=spec.sigma_max).contains(&s));
        }
        for &a in p.model_a() {
            prop_assert!(a.abs() <= spec.a_max);
        }
    }

    #[test]
    fn prices_stay_positive(seed in 0u64..1_000_000, rate in 0.1f64..16.0) {
        let spec = regime_spec(rate);
        let g = grid();
        let p = extend_boundary(&sample_exogenous(&spec, &g, seed).unwrap()).unwrap();
        let path = integrate(&p, &brownian(&g, seed), spec.s0).unwrap();
        prop_assert!(path.prices().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn kernels_have_unit_mass(eps in 0.021f64..0.4) {
        let k = build_kernel(&FilterSpec::gaussian(eps), 0.01).unwrap();
        let mass: f64 = k.weights.iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(k.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn sup_distances_are_consistent_in_q_and_scale(
        seed in 0u64..100_000,
        lam in 0.1f64..10.0,
    ) {
        let g = grid();
        let spec = regime_spec(2.0);
        let p = extend_boundary(&sample_exogenous(&spec, &g, seed).unwrap()).unwrap();
        let bw = brownian(&g, seed ^ 0x5555);
        let s = integrate(&p, &bw, spec.s0).unwrap();
        let mut bumped = p.clone();
        bumped.sigma.iter_mut().for_each(|v| *v = (*v + 0.02).min(0.6));
        let se = integrate(&bumped, &bw, spec.s0).unwrap();

        let d1 = sup_distance(&s, &se, 1.0).unwrap();
        let d2 = sup_distance(&s, &se, 2.0).unwrap();
        prop_assert!((d2 - d1 * d1).abs() <= 1e-12 * d2.max(1.0));

        let scale = |path: &PricePath| {
            let mut out = path.clone();
            out.log_prices.iter_mut().for_each(|r| *r += lam.ln());
            out
        };
        let ds = sup_distance(&scale(&s), &scale(&se), 1.0).unwrap();
        prop_assert!((ds - lam * d1).abs() <= 1e-9 * ds.max(1e-9));
        let l = log_sup_distance(&s, &se, 2.0).unwrap();
        let ls = log_sup_distance(&scale(&s), &scale(&se), 2.0).unwrap();
        prop_assert!((l - ls).abs() <= 1e-12);
    }

    #[test]
    fn observation_rounds_within_half_tick_and_is_idempotent(
        seed in 0u64..100_000,
        tick_exp in -4i32..-1,
    ) {
        let g = GridSpec::new(0.24, 0.5, 0.25, 0.01).unwrap();
        let tick = 10f64.powi(tick_exp);
        let spec = regime_spec(2.0);
        let p = extend_boundary(&sample_exogenous(&spec, &g, seed).unwrap()).unwrap();
        let path = integrate(&p, &brownian(&g, seed), spec.s0).unwrap();
        let obs = observe(&path, 0.02, tick).unwrap();
        let raw = path.prices();
        let every = (0.02 / g.h()).round() as usize;
        for (i, &v) in obs.values.iter().enumerate() {
            prop_assert!((v - raw[i * every]).abs() <= 0.5 * tick + 1e-12);
            let again = (v / tick).round_ties_even() * tick;
            prop_assert!((again - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn ks_statistic_is_normalized_and_order_invariant(
        xs in prop::collection::vec(0.01f64..10.0, 8..40),
        ys in prop::collection::vec(0.01f64..10.0, 8..40),
    ) {
        let r = ks_two_sample(&xs, &ys, 0.05).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.statistic));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        let logged = ks_two_sample(&lx, &ly, 0.05).unwrap();
        prop_assert!((r.statistic - logged.statistic).abs() <= 1e-12);
    }
}

#[test]
fn realized_variance_requires_positive_observations() {
    let series = ObservationSeries {
        dt: 1.0,
        tick: 1.0,
        values: vec![2.0, 0.0, 1.0],
    };
    assert!(mollify_markets_core::distinguish::realized_variance(&series).is_err());
}

#[test]
fn window_bounds_keep_smoothed_sigma_positive() {
    let g = GridSpec::new(0.25, 1.0, 0.5, 0.005).unwrap();
    let spec = regime_spec(4.0);
    for seed in 0..16 {
        let p = extend_boundary(&sample_exogenous(&spec, &g, seed).unwrap()).unwrap();
        let m =
            mollify_markets_core::mollify::mollify_path(&p, &FilterSpec::gaussian(0.05)).unwrap();
        let floor = spec.sigma_min.min(1.0);
        assert!(m.model_sigma().iter().all(|&s| s >= floor - 1e-12));
    }
}

#[test]
fn extension_is_only_defined_for_model_window_paths() {
    let g = grid();
    let p = ParamPath {
        grid: g.clone(),
        a: vec![0.0; g.node_count()],
        sigma: vec![0.2; g.node_count()],
        factor: None,
        domain: PathDomain::Extended,
    };
    assert!(extend_boundary(&p).is_err());
}
