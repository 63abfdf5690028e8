//! Named seed derivation. Every random stream in the toolkit is keyed by
//! `(seed, role, index)` so no component shares a global generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives a child seed from a parent seed, a role name and an index.
pub fn derive(seed: u64, role: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(role.as_bytes())) ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng(seed: u64, role: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, role, index))
}
