//! Reproducible, splittable random streams.
//!
//! A [`SeedStream`] names a ChaCha8 keystream: the 64-bit seed fixes the key,
//! the stream id selects one of 2^64 independent counter-based keystreams.
//! Parallel Monte Carlo never shares a generator; work is cut into fixed-size
//! blocks and block `b` always draws from `stream.substream(b)`, so results do
//! not depend on how many worker threads execute the blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Generator handed out by [`SeedStream::rng`].
pub type StreamRng = ChaCha8Rng;

/// Number of Monte Carlo replications per parallel block.
pub const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl SeedStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream keyed by `tag`. Distinct tags give distinct stream ids.
    pub fn substream(&self, tag: u64) -> SeedStream {
        SeedStream {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ mix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    /// Child stream keyed by a sequence of tags, e.g. `(n, x.to_bits(), block)`.
    pub fn derive(&self, tags: &[u64]) -> SeedStream {
        tags.iter().fold(*self, |s, &t| s.substream(t))
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `reps` replications in blocks of [`BLOCK`], in parallel on the
/// current rayon pool. `f` receives the block size and the block's own
/// generator; outputs come back in block order.
pub fn run_blocks<T, F>(reps: usize, stream: SeedStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> T + Sync,
{
    let nblocks = reps.div_ceil(BLOCK);
    (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK.min(reps - b * BLOCK);
            let mut rng = stream.substream(b as u64).rng();
            f(count, &mut rng)
        })
        .collect()
}
