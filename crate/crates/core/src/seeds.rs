//! Seed derivation for independent, reproducible random streams.
//!
//! Every randomised routine takes an explicit seed. Sub-streams are keyed by
//! a tuple of integers (stream tag, index, replicate, ...) hashed together
//! with SplitMix64, so a stream depends only on its key and never on the
//! order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags. Distinct tags keep e.g. input and label-noise draws independent.
pub mod tag {
    pub const INPUTS: u64 = 0x11;
    pub const NOISE: u64 = 0x12;
    pub const TEACHER: u64 = 0x13;
    pub const FRESH: u64 = 0x14;
    pub const TEST_SET: u64 = 0x15;
    pub const INIT: u64 = 0x21;
    pub const OUTPUT_SIGNS: u64 = 0x22;
    pub const REPLICATE: u64 = 0x31;
    pub const PERTURB: u64 = 0x41;
    pub const PROBE: u64 = 0x51;
    pub const GRAM_MC: u64 = 0x61;
    pub const REDRAW: u64 = 0x62;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `keys` into `seed`. Order of keys matters.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc.rotate_left(23) ^ splitmix64(k)))
}

pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, keys))
}
