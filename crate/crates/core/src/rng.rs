//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from `(master, label, index)`, so results never depend on the order
//! in which trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// FNV-1a; stable across platforms and compiler versions, unlike `DefaultHasher`.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derive a sub-seed for the stream named `label` at position `index`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let h = splitmix64(master ^ splitmix64(label_hash(label)));
    splitmix64(h ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Derive a sub-seed from a path of indices, e.g. `(cell, trial)`.
pub fn derive_seed_path(master: u64, label: &str, path: &[u64]) -> u64 {
    path.iter().fold(derive_seed(master, label, 0), |acc, &i| {
        derive_seed(acc, label, i)
    })
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
