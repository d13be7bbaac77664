//! Deterministic seed streams. Every random draw in a run comes from a stream
//! derived from the run seed and a path of tags, so the draws of one
//! component never depend on how many draws another component made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(splitmix64(seed))
    }

    pub fn child(self, tag: u64) -> Self {
        Self(splitmix64(
            self.0 ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019)),
        ))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

/// Top-level tags used by the run loop.
pub mod tags {
    pub const CONTEXT: u64 = 1;
    pub const LABEL: u64 = 2;
    pub const PLAYER: u64 = 3;
    pub const ACTION: u64 = 4;
    pub const ADVERSARY: u64 = 5;
    pub const FROZEN_NOISE: u64 = 6;
}
