//! Seeded random streams.
//!
//! All randomness derives from one run seed. Independent work items (a sample
//! index, an epoch, a test condition) get their own ChaCha stream so results
//! do not depend on processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream families; the tag occupies the top bits of the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scenario = 1,
    Split = 2,
    Degrade = 3,
    Init = 4,
    Shuffle = 5,
    Dropout = 6,
    Eval = 7,
    Check = 8,
}

pub fn stream(seed: u64, kind: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 48) ^ index);
    rng
}

/// Folds extra keys into a stream index.
pub fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = a.wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) & 0x0000_FFFF_FFFF_FFFF
}
