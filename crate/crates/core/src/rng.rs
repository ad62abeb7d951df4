//! Seed derivation.
//!
//! Every random draw in the workbench comes from a ChaCha8 stream keyed by a
//! `(seed, stream)` pair, so independent consumers (channel, payload, noise,
//! shuffling, weight init) never share state and results do not depend on
//! evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of a record or run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    Payload = 2,
    Noise = 3,
    Split = 4,
    SnrTag = 5,
    Init = 6,
    Shuffle = 7,
    Bootstrap = 8,
    Records = 9,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finalizer; maps `(seed, index)` to a well-mixed child seed.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
