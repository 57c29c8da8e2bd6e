//! Keyed random streams.
//!
//! Every stochastic draw is taken from a ChaCha stream whose seed is a hash
//! of `(seed, tags…)`, so results depend only on the key and never on how
//! shots are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes, mixed into the key so different uses never collide.
pub mod purpose {
    pub const DRIFT: u64 = 0x6472_6966_74;
    pub const FAST_NOISE: u64 = 0x6661_7374;
    pub const READOUT: u64 = 0x7265_6164;
    pub const CALIBRATION: u64 = 0x6361_6c69_62;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for the key `(seed, tags)`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |h, &t| splitmix64(h ^ splitmix64(t)))
}

/// Deterministic generator for the key `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let h = derive_seed(seed, tags);
    let mut bytes = [0u8; 32];
    let mut s = h;
    for chunk in bytes.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
