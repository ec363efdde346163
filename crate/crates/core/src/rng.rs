//! Seed derivation for independent random streams.
//!
//! Every stochastic step (noise vector, episode, evaluation batch) draws from
//! its own generator keyed by a tuple of integers, so results never depend on
//! evaluation order or thread count.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// Tags separating the stream families derived from one run seed.
pub mod tag {
    pub const INIT: u64 = 0x1;
    pub const NOISE: u64 = 0x2;
    pub const CANDIDATE: u64 = 0x3;
    pub const EVAL: u64 = 0x4;
    pub const PROTOCOL: u64 = 0x5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a path of tags into a single 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(root: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, path))
}
