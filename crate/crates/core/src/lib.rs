//! Simulation laboratory for diffusion stock-market models whose coefficients
//! are replaced by non-causally smoothed (mollified) versions.
//!
//! The crate builds incomplete-market coefficient processes (regime switching,
//! stochastic factor, closed-loop feedback), runs paired log-Euler price
//! simulations driven by common Brownian increments, smooths coefficient paths
//! with Gaussian / ideal low-pass / exponential-decay filters, and quantifies
//! how close the smoothed model is to the original one:
//!
//! * [`metrics`] — `L^q` coefficient distance and sup price distance,
//!   Monte Carlo averaged;
//! * [`forecast`] — polynomial extrapolation of the smoothed volatility from
//!   the observation window into the trading window;
//! * [`hedge`] — constructive call replication in the smoothed model,
//!   hedging error in the original one, Girsanov diagnostics;
//! * [`distinguish`] — two-sample tests on rounded, subsampled observations
//!   of the two worlds.
//!
//! Everything is a pure function of `(spec, grid, seed)`; see [`streams`] for
//! the seeding discipline.

pub mod distinguish;
pub mod error;
pub mod forecast;
pub mod hedge;
pub mod metrics;
pub mod mollify;
pub mod params;
pub mod scenario;
pub mod sde;
pub mod streams;

pub use error::{Error, Result};
