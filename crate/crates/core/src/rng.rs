//! Seed derivation and reproducible Gaussian draws.
//!
//! Every random quantity is keyed on a tuple of integers mixed through
//! SplitMix64, so a single entry can be regenerated without replaying a
//! stream and enlarging a table never changes existing entries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with a path of sub-keys into an independent seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k.wrapping_add(GOLDEN))))
}

/// A stream generator for the given key path.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}

/// One standard normal draw addressed by `(seed, keys)`.
pub fn normal_at(seed: u64, keys: &[u64]) -> f64 {
    StandardNormal.sample(&mut stream(seed, keys))
}

/// Next standard normal from a stream.
#[inline]
pub fn next_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
