//! Seed derivation. Every random stream is keyed by the root seed and a
//! path of counters (replicate, iteration, purpose, ...), mixed with
//! SplitMix64, so streams never depend on how many draws another stream
//! consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream at `path` below `root`.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(GOLDEN))))
}

pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

/// Labels for the streams used by the design loop and the benchmarks.
pub mod purpose {
    pub const INITIAL_DESIGN: u64 = 1;
    pub const CANDIDATES: u64 = 2;
    pub const FIT: u64 = 3;
    pub const BASELINE: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const BENCHMARK: u64 = 6;
}
