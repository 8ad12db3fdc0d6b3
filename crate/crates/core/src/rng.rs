//! Named random sub-streams derived from one 64-bit seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness. Each gets its own ChaCha stream,
/// so adding draws to one never shifts another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ModelInit = 1,
    TrainShuffle = 2,
    Generate = 3,
    Split = 4,
    Test = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    substream_rng(seed, stream, 0)
}

/// A numbered sub-stream within `stream`, e.g. one per category.
pub fn substream_rng(seed: u64, stream: Stream, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | index as u64);
    rng
}
