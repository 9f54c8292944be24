//! Seed derivation. Every random stream in the crate is keyed by the run seed
//! and a stream name, so no two components share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(seed, stream)`. Stable across platforms and releases.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(stream.as_bytes())))
}

pub fn stream(seed: u64, name: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, name))
}

/// Generator for one indexed sub-stream, e.g. one epoch of batch shuffling.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> Rng {
    Rng::seed_from_u64(splitmix64(derive_seed(seed, name) ^ splitmix64(index)))
}
