//! Counter-based seed derivation.
//!
//! Every random stream in a Monte-Carlo run is keyed by the master seed plus
//! a path of counters (trial index, stream tag, ...). The mapping is a pure
//! function, so a trial draws the same numbers no matter which worker runs it
//! or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream tags used by the harness.
pub mod stream {
    pub const SYMBOLS: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const CSI: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a path of counters.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
