//! Deterministic RNG streams.
//!
//! Every random draw in the crate comes from a stream derived from
//! `(base seed, purpose tag, counter)`. Streams keep independent consumers
//! (label sampling, dropout, augmentation, ...) from perturbing each other,
//! and make checkpoint resume exact: the RNG state is a pure function of the
//! step counters, so none of it needs to be stored.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// RNG for `(seed, tag, counter)`, stable across platforms and runs.
pub fn stream(seed: u64, tag: &str, counter: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(counter.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, "x", 0).random();
        let b: u64 = stream(7, "x", 0).random();
        let c: u64 = stream(7, "x", 1).random();
        let d: u64 = stream(7, "y", 0).random();
        let e: u64 = stream(8, "x", 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }
}
