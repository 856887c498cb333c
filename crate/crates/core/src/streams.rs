//! Reproducible random-number streams.
//!
//! Every stochastic quantity in the crate is drawn from a ChaCha stream whose
//! key is derived from `(seed, purpose, index)` with a SplitMix64 finalizer.
//! Exogenous coefficient noise and the price-driving Brownian increments use
//! different purposes, so they are sampled from disjoint streams: re-seeding
//! one never perturbs the other. Streams are cheap to create, carry no shared
//! state, and can be handed to worker threads freely.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is consumed for. The discriminants are part of the
/// reproducibility contract: changing them changes every output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Exogenous coefficient randomness (regime chains, factors).
    Coefficient = 1,
    /// Brownian increments driving the price equation.
    Brownian = 2,
    /// Extra Gaussians used by Brownian-bridge grid refinement.
    BridgeRefine = 3,
}

/// SplitMix64 finalizer: a fixed-point-free avalanche permutation of `u64`.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed for a sub-experiment.
///
/// `domain` separates unrelated uses (a module-local constant), `index`
/// enumerates paths, trials or sweep entries within the domain.
#[inline]
pub fn child_seed(seed: u64, domain: u64, index: u64) -> u64 {
    mix(mix(mix(seed) ^ domain) ^ index)
}

/// A deterministic ChaCha8 stream for `(seed, kind)`.
pub fn stream(seed: u64, kind: StreamKind) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut word = mix(seed ^ mix(kind as u64));
    for chunk in key.chunks_exact_mut(8) {
        word = mix(word);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
