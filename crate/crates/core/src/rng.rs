//! Seed derivation.
//!
//! Every random draw in training comes from a ChaCha8 stream whose seed is a
//! pure function of `(master seed, stream coordinates)`. Work items never share
//! a generator, so the order in which threads pick them up has no effect on
//! the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier of the random algorithm family, written into model headers.
///
/// 1 = ChaCha8 streams keyed by SplitMix64-mixed seeds, normals via the
/// `rand_distr` ziggurat sampler.
pub const RNG_ALGORITHM_ID: u32 = 1;

pub type HteRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of stream coordinates.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &c| {
        splitmix64(acc ^ splitmix64(c))
    })
}

pub fn stream(master: u64, path: &[u64]) -> HteRng {
    HteRng::seed_from_u64(derive_seed(master, path))
}
