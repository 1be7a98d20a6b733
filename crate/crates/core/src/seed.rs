//! Seed derivation.
//!
//! Every random decision in the crate draws from a `ChaCha8Rng` whose seed is
//! derived from a base seed and a list of integer coordinates with the
//! SplitMix64 finalizer. The mapping is stable across platforms and releases,
//! so a recorded seed reproduces its run in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 output function applied to `x + golden gamma`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `derive_seed(s, [a, b])` = `splitmix64(splitmix64(splitmix64(s) ^ a) ^ b)`.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(base), |acc, &c| splitmix64(acc ^ c))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Domain tags keep independent random streams from colliding when they share
/// a base seed.
pub(crate) mod stream {
    pub const RESTART: u64 = 0x5245_5354;
    pub const INIT: u64 = 0x494E_4954;
    pub const CLIENTS: u64 = 0x434C_4E54;
    pub const PARTITION: u64 = 0x5041_5254;
    pub const PAD: u64 = 0x5041_4421;
}
