//! Seeded random streams.
//!
//! Every source of randomness draws from a ChaCha8 generator keyed by the
//! run seed, with a distinct stream id per purpose (and per item where work
//! is split across cases). Toggling augmentation therefore never shifts the
//! weight-initialisation or batching draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Augment = 2,
    Batching = 3,
    Synth = 4,
}

pub fn stream(seed: u64, purpose: Purpose) -> StreamRng {
    stream_for(seed, purpose, 0)
}

/// Independent stream for item `index` (a case, an annotator, ...) of `purpose`.
pub fn stream_for(seed: u64, purpose: Purpose, index: u32) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | index as u64);
    rng
}
