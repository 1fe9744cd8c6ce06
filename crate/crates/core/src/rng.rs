//! Seeded randomness shared by every component.
//!
//! All stochastic state (seed hypervectors, weight init, batch shuffles) is
//! drawn from ChaCha12 streams keyed by a 64-bit seed. Bounded integers and
//! shuffles are implemented here rather than through `rand`'s distribution
//! helpers so that regenerated item memories stay bit-identical even if
//! those helpers change their sampling algorithms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Generator used for all seeded draws.
pub type SeedRng = ChaCha12Rng;

/// Name recorded in model files next to every seed.
pub const RNG_NAME: &str = "chacha12-le64/v1";

/// Stream identifiers used when one seed feeds several independent consumers.
pub mod stream {
    pub const FEATURE_SEEDS: u64 = 1;
    pub const LEVEL_TABLE: u64 = 2;
    pub const WEIGHT_INIT: u64 = 3;
    pub const BATCH_ORDER: u64 = 4;
    pub const SPLIT: u64 = 5;
}

/// A generator for `(seed, stream)`; distinct streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> SeedRng {
    let mut rng = SeedRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `master` (splitmix64 of master + index·φ).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
pub fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0, "uniform_below: empty range");
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = (rng.next_u64() as u128) * (bound as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Fisher-Yates shuffle driven by [`uniform_below`].
pub fn shuffle<T, R: RngCore + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Uniform `f64` in `[0, 1)` from the top 53 bits of one draw.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
