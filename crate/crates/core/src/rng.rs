//! Seed derivation for reproducible Monte-Carlo streams.
//!
//! Every randomized routine takes a master seed. Independent sub-streams
//! (per Monte-Carlo chunk, per trial, per sweep point) are obtained by
//! folding a list of tag words into the master seed with the SplitMix64
//! finalizer and seeding a fresh ChaCha12 generator with the result:
//!
//! ```text
//! state = master
//! for tag in tags: state = splitmix64(state ^ splitmix64(tag + GOLDEN))
//! rng   = ChaCha12Rng::seed_from_u64(state)
//! ```
//!
//! The derivation depends only on `(master, tags)`, so results do not change
//! with thread count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit sub-seed from a master seed and a path of tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |state, &tag| {
        splitmix64(state ^ splitmix64(tag.wrapping_add(GOLDEN)))
    })
}

/// Generator for the sub-stream identified by `tags`.
pub fn stream(master: u64, tags: &[u64]) -> StreamRng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, tags))
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn label_tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[1, 2]).random();
        let c: u64 = stream(7, &[2, 1]).random();
        let d: u64 = stream(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
