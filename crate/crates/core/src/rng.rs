//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! whose seed is derived from a master seed and a string key, so parallel work
//! produces the same bytes regardless of scheduling.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn derive_seed(master: u64, key: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(master);
    h.write(key.as_bytes());
    // fold once more so short keys still spread across the word
    let x = h.finish();
    x ^ (x >> 29).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

pub fn substream(master: u64, key: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, key))
}

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
