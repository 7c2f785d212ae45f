//! Keyed random streams.
//!
//! Every random draw in a run is addressed by `(master seed, stream, agent,
//! iteration)`, so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags separating independent uses of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dataset = 1,
    Gradient = 2,
    Repetition = 3,
    Misc = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a sequence of key words.
pub fn derive_seed(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x5354_5050_u64, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Generator for one `(seed, stream, agent, iteration)` key.
pub fn keyed_rng(seed: u64, stream: Stream, agent: usize, iteration: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[seed, stream as u64, agent as u64, iteration]))
}
