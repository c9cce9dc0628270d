//! Counter-based random streams.
//!
//! Every consumer of randomness draws from a named sub-stream of a single
//! 64-bit seed. A sub-stream is a ChaCha8 generator keyed by the seed with the
//! ChaCha stream id set from the sub-stream name (and an optional index), so
//! the `n`-th draw of a given `(seed, stream, index)` is always the same value
//! regardless of what other streams have consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Stream {
    Placement = 1,
    Traffic = 2,
    Fading = 3,
    PreambleChoice = 4,
    SchedulingOrder = 5,
    Exploration = 6,
    ReplaySampling = 7,
    Init = 8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for `stream`.
    pub fn substream(&self, stream: Stream) -> ChaCha8Rng {
        self.indexed(stream, 0)
    }

    /// Generator for `stream`, further keyed by `index` (agent id, group id, ...).
    pub fn indexed(&self, stream: Stream, index: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((index as u64) << 8) | stream as u64);
        rng
    }

    /// A child seed space, e.g. one per episode.
    pub fn derive(&self, index: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c909))),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
