//! Seed fan-out.
//!
//! A single global seed is expanded into independent per-stage and
//! per-search seeds with a splitmix64 finalizer, so that adding a stage never
//! perturbs the streams of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The deterministic RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a stage label.
pub fn derive(parent: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the parent.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(parent ^ splitmix64(h))
}

/// Derives the seed of the `index`-th member of a family of streams.
pub fn derive_indexed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent).wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_indices_give_distinct_seeds() {
        let a = derive(7, "data");
        let b = derive(7, "train");
        assert_ne!(a, b);
        assert_eq!(a, derive(7, "data"));
        let fam: Vec<u64> = (0..100).map(|i| derive_indexed(a, i)).collect();
        let mut sorted = fam.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), fam.len());
    }
}
