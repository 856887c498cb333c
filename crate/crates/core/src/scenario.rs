//! Shared path-generation recipes.
//!
//! Every experiment family needs the same construction: sample a coefficient
//! path, extend it onto the flanks, smooth it, and integrate the original
//! and smoothed models against one Brownian path. For exogenous models the
//! coefficients themselves are smoothed; for closed-loop models it is the
//! exogenous factor that is smoothed and the coefficients are re-generated
//! through the map along the new price path.

use crate::error::{Error, Result};
use crate::mollify::{mollify_path, mollify_values, FilterSpec};
use crate::params::{
    extend_boundary, sample_closed_loop_factor, sample_exogenous, GridSpec, ModelSpec, ParamPath,
};
use crate::sde::{brownian, integrate, integrate_closed_loop, BrownianIncrements, PricePath};

/// One simulated world: realized coefficients and the price path they drove.
#[derive(Debug, Clone)]
pub struct World {
    pub params: ParamPath,
    pub price: PricePath,
}

/// A coupled pair of worlds sharing the Brownian increments.
#[derive(Debug, Clone)]
pub struct PairedWorlds {
    pub original: World,
    pub smoothed: World,
    pub bw: BrownianIncrements,
}

/// The exogenous state of one path before any smoothing: enough to derive
/// the original world and any number of smoothed twins.
#[derive(Debug, Clone)]
pub struct PathDraw {
    /// Extended coefficient path (exogenous models) or extended factor path
    /// wrapped in the driver's coefficients (closed-loop models).
    params: Option<ParamPath>,
    factor: Option<Vec<f64>>,
    bw: BrownianIncrements,
}

impl PathDraw {
    /// Samples the exogenous randomness of one path. Coefficient noise and
    /// Brownian noise come from disjoint streams of `seed`.
    pub fn sample(spec: &ModelSpec, grid: &GridSpec, seed: u64) -> Result<Self> {
        let bw = brownian(grid, seed);
        if spec.is_closed_loop() {
            let factor = sample_closed_loop_factor(spec, grid, seed)?;
            Ok(PathDraw {
                params: None,
                factor: Some(factor),
                bw,
            })
        } else {
            let params = extend_boundary(&sample_exogenous(spec, grid, seed)?)?;
            Ok(PathDraw {
                params: Some(params),
                factor: None,
                bw,
            })
        }
    }

    pub fn increments(&self) -> &BrownianIncrements {
        &self.bw
    }

    /// Integrates the original (unsmoothed) model.
    pub fn original(&self, spec: &ModelSpec) -> Result<World> {
        match (&self.params, &self.factor) {
            (Some(p), _) => {
                let price = integrate(p, &self.bw, spec.s0)?;
                Ok(World {
                    params: p.clone(),
                    price,
                })
            }
            (None, Some(y)) => {
                let (price, params) = integrate_closed_loop(spec, y, &self.bw, spec.s0)?;
                Ok(World { params, price })
            }
            _ => unreachable!(),
        }
    }

    /// Integrates the smoothed twin against the same Brownian increments.
    pub fn smoothed(&self, spec: &ModelSpec, filter: &FilterSpec) -> Result<World> {
        match (&self.params, &self.factor) {
            (Some(p), _) => {
                let smoothed = mollify_path(p, filter)?;
                let price = integrate(&smoothed, &self.bw, spec.s0)?;
                Ok(World {
                    params: smoothed,
                    price,
                })
            }
            (None, Some(y)) => {
                let grid = &self.bw.grid;
                check_window(grid, filter)?;
                let y_eps = mollify_values(y, filter, grid.h())?;
                let (price, params) = integrate_closed_loop(spec, &y_eps, &self.bw, spec.s0)?;
                Ok(World { params, price })
            }
            _ => unreachable!(),
        }
    }
}

/// Draws one path of the model and its smoothed twin, coupled through a
/// common Brownian path.
pub fn paired_worlds(
    spec: &ModelSpec,
    grid: &GridSpec,
    filter: &FilterSpec,
    seed: u64,
) -> Result<PairedWorlds> {
    let draw = PathDraw::sample(spec, grid, seed)?;
    let original = draw.original(spec)?;
    let smoothed = draw.smoothed(spec, filter)?;
    Ok(PairedWorlds {
        original,
        smoothed,
        bw: draw.bw,
    })
}

/// The factor-smoothing route needs the same support check that
/// `mollify_path` performs for coefficient paths.
fn check_window(grid: &GridSpec, filter: &FilterSpec) -> Result<()> {
    let h = grid.h();
    match *filter {
        FilterSpec::Gaussian {
            eps,
            truncation_radius,
        } => {
            let half_width = (truncation_radius * eps / h).round() as usize;
            if half_width > grid.flank_steps() {
                return Err(Error::KernelWindowExceedsDomain {
                    half_width: half_width as f64 * h,
                    flank: grid.flank(),
                });
            }
        }
        FilterSpec::ExpDecay {
            decay,
            truncation_radius,
        } => {
            let half_width = (truncation_radius * decay / h).round() as usize;
            if half_width > grid.flank_steps() {
                return Err(Error::KernelWindowExceedsDomain {
                    half_width: half_width as f64 * h,
                    flank: grid.flank(),
                });
            }
        }
        FilterSpec::IdealLowPass { .. } => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{CatalogMap, ModelKind};

    fn grid() -> GridSpec {
        GridSpec::new(0.25, 1.0, 0.5, 0.005).unwrap()
    }

    fn regime_spec() -> ModelSpec {
        ModelSpec::new(
            ModelKind::MarkovRegimeSwitch {
                a: 0.05,
                sigma_levels: vec![0.1, 0.3],
                switch_rates: vec![2.0, 2.0],
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

    #[test]
    fn paired_worlds_share_initial_price() {
        let spec = regime_spec();
        let pw = paired_worlds(&spec, &grid(), &FilterSpec::gaussian(0.05), 3).unwrap();
        assert_eq!(pw.original.price.s0(), pw.smoothed.price.s0());
        assert_eq!(
            pw.original.price.log_prices[0],
            pw.smoothed.price.log_prices[0]
        );
    }

    #[test]
    fn closed_loop_route_smooths_the_factor() {
        let spec = ModelSpec::new(
            ModelKind::ClosedLoop {
                driver: Box::new(regime_spec()),
                map: CatalogMap::FactorFeedback {
                    a: 0.05,
                    amp: 0.0,
                    rho_ref: 0.0,
                },
            },
            0.05,
            100.0,
            0.05,
            0.6,
            0.2,
        )
        .unwrap();
        let pw = paired_worlds(&spec, &grid(), &FilterSpec::gaussian(0.05), 3).unwrap();
        // The realized smoothed sigma is continuous-ish: successive nodes
        // move by far less than the regime jump size.
        let s = pw.smoothed.params.model_sigma();
        let max_step = s
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max);
        assert!(max_step < 0.05, "smoothed sigma jumps by {max_step}");
        let orig = pw.original.params.model_sigma();
        let max_step_orig = orig
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max);
        assert!(
            max_step_orig > 0.15,
            "original path should jump between levels"
        );
    }

    #[test]
    fn determinism_across_calls() {
        let spec = regime_spec();
        let f = FilterSpec::gaussian(0.05);
        let a = paired_worlds(&spec, &grid(), &f, 11).unwrap();
        let b = paired_worlds(&spec, &grid(), &f, 11).unwrap();
        assert_eq!(a.original.price, b.original.price);
        assert_eq!(a.smoothed.price, b.smoothed.price);
    }
}
