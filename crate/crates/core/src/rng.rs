//! Deterministic seed derivation.
//!
//! Every random stream in a run hangs off one master seed through a tagged
//! tree: `child_seed(parent, "session", 3)` names the fourth session,
//! `child_seed(session, "rollout", h)` names one rollout inside it, and so on.
//! Tags keep sibling streams independent even when their indices collide, and
//! recording a node's seed is enough to replay everything below it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the tag bytes; cheap, stable, and well-distributed enough to
/// separate the handful of tags we use.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer; bijective, so distinct inputs stay distinct.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of the `index`-th child stream named `tag`.
pub fn child_seed(parent: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ fnv1a64(tag.as_bytes())) ^ index)
}

/// Build the generator for a derived seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
