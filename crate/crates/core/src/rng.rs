//! Seed derivation. Every random stream in the crate is a xoshiro256++ generator
//! seeded from a 64-bit user seed mixed with a stream label, so parallel work
//! never depends on scheduling order.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(mix64(seed))
}

/// Generator for a named sub-stream, e.g. one per target image.
pub fn stream(seed: u64, label: &str) -> Rng {
    Rng::seed_from_u64(mix64(seed ^ fnv1a(label.as_bytes())))
}

/// Generator for an indexed sub-stream, e.g. one per tree.
pub fn indexed(seed: u64, index: u64) -> Rng {
    Rng::seed_from_u64(mix64(mix64(seed).wrapping_add(index)))
}
