//! Deterministic seed derivation. Every random draw in a run is a pure
//! function of the master seed, the iteration and a purpose tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Offsets = 1,
    Episodes = 2,
    Vbn = 3,
    DesiredReturn = 4,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent child seed for a named sub-stream.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Generator for one purpose within one iteration.
pub fn stream_rng(seed: u64, iteration: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose as u64));
    rng.set_stream(iteration);
    rng
}

/// Episode seeds shared by the whole population in one iteration. The first
/// seed is even, so consecutive pairs are balanced for parity-keyed tasks.
pub fn episode_seeds(seed: u64, iteration: u64, count: usize) -> Vec<u64> {
    let base =
        derive_seed(derive_seed(seed, Purpose::Episodes as u64), iteration) & !1 & (u64::MAX >> 1);
    (0..count as u64).map(|k| base + k).collect()
}
