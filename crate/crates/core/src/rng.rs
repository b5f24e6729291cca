//! Seed handling.
//!
//! Every random stage draws from a ChaCha8 stream keyed by an explicit 64-bit
//! seed. Independent sub-streams (layers, restarts, replications) are either
//! selected with `set_stream` or derived with [`mix`], a SplitMix64 finalizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag. Stable across releases.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

// Tags for the stages of one pipeline run.
pub(crate) const TAG_EIGEN: u64 = 0x65_6967_656e;
pub(crate) const TAG_KMEANS: u64 = 0x6b6d_6561_6e73;
