//! Deterministic stream splitting.
//!
//! Every random stream in a run is seeded with
//! `derive_seed(master, device, tag)`: the three inputs are folded through
//! SplitMix64 one after another. Streams are keyed by device id, so adding a
//! device never perturbs the draws of the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Placement = 1,
    Traffic = 2,
    Policy = 3,
    Shadowing = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, device: u64, tag: StreamTag) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ device);
    splitmix64(h ^ tag as u64)
}

pub fn stream(master: u64, device: u64, tag: StreamTag) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, device, tag))
}
