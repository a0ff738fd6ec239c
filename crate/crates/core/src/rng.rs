//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream. Streams are keyed
//! by `(seed, stream)` so that instance generation, rollout re-seeding and
//! exploration never share state.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier written into output metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

pub type Rng = ChaCha8Rng;

pub mod streams {
    pub const INSTANCE: u64 = 1;
    pub const FUTURE: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const SEARCH: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const INIT: u64 = 6;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes two words into one seed (splitmix64 finalizer).
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard Gumbel sample; `argmax(log w_i + g_i)` draws `i` with probability
/// proportional to `w_i`.
pub fn gumbel(rng: &mut Rng) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}
