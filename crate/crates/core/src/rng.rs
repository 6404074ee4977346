//! Deterministic RNG stream derivation.
//!
//! Every random quantity in the crate draws from a `ChaCha8Rng` seeded by
//! mixing a master seed with a small list of scope tags (replicate index,
//! mediator index, permutation index, ...). Workers therefore own independent
//! streams and results do not depend on scheduling or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scope tags namespacing derived streams. Values are stable; changing them
/// changes every seeded result.
pub mod scope {
    pub const GENERATOR: u64 = 1;
    pub const PERMUTATION: u64 = 2;
    pub const CV_FOLDS: u64 = 3;
    pub const REPLICATE: u64 = 4;
}

// splitmix64 finalizer; good avalanche for cheap seed mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and scope tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix(master);
    for &tag in tags {
        state = mix(state ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    state
}

/// A fresh deterministic stream for the given scope.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
