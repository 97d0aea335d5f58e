//! Seeded randomness.
//!
//! Every random draw in the toolkit comes from xoshiro256** seeded through
//! SplitMix64, so a port in another language can replay the same sample
//! sequence bit-for-bit:
//!
//! * `seeded(s)` fills the 256-bit xoshiro state with four consecutive
//!   SplitMix64 outputs starting from state `s`.
//! * A uniform real in `[0, 1)` is `(next_u64() >> 11) * 2^-53`.
//! * Independent streams (per dataset, per worker) use
//!   `derive_seed(global, index)`.

use rand::{RngCore, SeedableRng};
pub use rand_xoshiro::Xoshiro256StarStar as Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// One SplitMix64 output for the given state.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent stream under a global seed.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    splitmix64(global ^ splitmix64(index))
}

/// Uniform real in `[0, 1)` with 53 random bits.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, n)` by multiply-shift; `n` must be non-zero.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    ((rng.next_u64() as u128 * n as u128) >> 64) as u64
}
