//! Seeding conventions. Every random consumer gets its own ChaCha stream
//! derived from one experiment seed, so adding draws in one place never
//! shifts the numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

pub mod streams {
    pub const WORLD: u64 = 0;
    pub const MEMBERSHIP: u64 = 1;
    pub const SAMPLES: u64 = 2;
    pub const TRAIN_EPISODES: u64 = 3;
    pub const EVAL_EPISODES: u64 = 4;
    pub const LEARNER: u64 = 5;
    pub const ORACLE: u64 = 6;
    pub const EPISODE_MOBILITY: u64 = 7;
    pub const EPISODE_SAMPLES: u64 = 8;
}

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The `index`-th derived seed of `stream`. Random access, no shared state.
pub fn derived_seed(seed: u64, stream: u64, index: u64) -> u64 {
    use rand::RngCore;
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Complete ChaCha position, enough to resume a generator bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Block position as (high, low) halves; not every format carries 128-bit integers.
    pub word_pos: [u64; 2],
}

impl RngState {
    pub fn capture(rng: &SimRng) -> Self {
        let pos = rng.get_word_pos();
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: [(pos >> 64) as u64, pos as u64] }
    }

    pub fn restore(&self) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos((u128::from(self.word_pos[0]) << 64) | u128::from(self.word_pos[1]));
        rng
    }
}
