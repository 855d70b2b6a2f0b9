//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value. Derived seeds are produced by mixing a parent seed with a
//! stream index through SplitMix64, so per-trial and per-restart streams do
//! not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream` of `parent`.
pub fn derive(parent: u64, stream: u64) -> u64 {
    mix64(mix64(parent) ^ stream.wrapping_mul(0xd134_2543_de82_ef95))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags, so different consumers of one seed never share randomness.
pub mod stream {
    pub const GRAPH: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const EIGEN_START: u64 = 3;
    pub const EMBEDDING: u64 = 4;
    pub const PARAMS: u64 = 5;
    pub const LOUVAIN: u64 = 6;
    pub const RESTART: u64 = 7;
    pub const NB_START: u64 = 8;
}
