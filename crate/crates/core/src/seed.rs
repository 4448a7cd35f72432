//! Seed derivation.
//!
//! Every random stream in the lab is a `ChaCha20Rng` seeded through
//! `rand_core::SeedableRng::seed_from_u64`. Per-model and per-stage seeds are
//! derived from the master seed with the SplitMix64 finalizer:
//!
//! ```text
//! derive_seed(master, stream, index) =
//!     mix(mix(mix(master) ^ stream) ^ index)
//! mix(z): z += 0x9E3779B97F4A7C15;
//!         z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!         z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//!         z ^ (z >> 31)
//! ```
//!
//! All arithmetic is wrapping 64-bit, so the streams can be reproduced in any
//! language with a ChaCha20 implementation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Named random streams. The discriminant is mixed into derived seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 1,
    HeldOut = 2,
    Challenges = 3,
    ShadowSplit = 4,
    ShadowModel = 5,
    TargetSplit = 6,
    TargetModel = 7,
    Neighbors = 8,
    InitWeights = 9,
    Shuffle = 10,
    DpNoise = 11,
    StrictShadow = 12,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream as u64) ^ index)
}

/// Packs an (iteration, model) pair into a single derivation index.
pub fn pair_index(outer: u64, inner: u64) -> u64 {
    (outer << 32) ^ inner
}

pub fn rng(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> Rng {
    rng(derive_seed(master, stream, index))
}
