//! Seeded random streams. Every consumer derives its own sub-seed from a
//! parent seed and a tag so streams never overlap and can be regenerated in
//! isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed from `parent`, a string tag and an index.
pub fn sub_seed(parent: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(parent);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
