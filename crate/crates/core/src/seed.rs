//! Order-independent seed derivation.
//!
//! Every image draws from its own stream keyed by `(seed, identity, sample)`,
//! which makes generation order and thread count irrelevant to the output.

use rand::SeedableRng;

use crate::Rng;

/// Stream tag for per-identity (shape + color) coefficients.
pub const IDENTITY_STREAM: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of keys into a 64-bit stream seed.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Seed of the per-identity coefficient stream.
pub fn identity_seed(seed: u64, identity_id: u64) -> u64 {
    derive(seed, &[identity_id, IDENTITY_STREAM])
}

/// Seed of the per-image stream.
pub fn image_seed(seed: u64, identity_id: u64, sample_idx: u64) -> u64 {
    derive(seed, &[identity_id, sample_idx])
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
