//! Seed derivation. Every random stream in a campaign is addressed by a tuple
//! of integers mixed into a 64-bit seed, so results never depend on the order
//! in which workers pick up work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an ordered tuple of words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn rng_for(parts: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parts))
}

/// Stream tags keep independent consumers of the same indices apart.
pub mod stream {
    pub const SEQUENCE: u64 = 1;
    pub const SHOT: u64 = 2;
    pub const REFERENCE: u64 = 3;
    pub const QUASISTATIC: u64 = 4;
    pub const CLOCK: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
    pub const CALIBRATION: u64 = 7;
}
