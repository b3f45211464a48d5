//! Deterministic substreams derived from a master seed.
//!
//! Every random draw in the crate goes through [`substream`] or
//! [`indexed_stream`], so that work split across threads reproduces the
//! sequential result bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for child `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Independent generator for child `index` of `master`.
pub fn substream(master: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Generator keyed by `seed` positioned on ChaCha stream `stream`.
pub fn indexed_stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
