//! Deterministic seeded substreams.
//!
//! All randomness in the pipeline flows from a single run seed fanned out
//! into keyed substreams, so any frame / pair / stage can be sampled in
//! isolation (or in parallel) and reproduce bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a substream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Role {
    Scene = 1,
    Resample = 2,
    TrainPerturb = 3,
    EvalPerturb = 4,
    Shuffle = 5,
    ParamInit = 6,
}

/// Substream key: every distinct tuple yields an independent generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub role: Role,
    /// 0 = LiDAR-RGB, 1 = LiDAR-Event, 2 = pair-independent.
    pub pair: u8,
    pub stage: u16,
    pub frame: u32,
    /// Free index (epoch counter, draw counter, ...).
    pub index: u32,
}

impl StreamKey {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            pair: 2,
            stage: 0,
            frame: 0,
            index: 0,
        }
    }

    pub fn pair(mut self, pair: u8) -> Self {
        self.pair = pair;
        self
    }

    pub fn stage(mut self, stage: u16) -> Self {
        self.stage = stage;
        self
    }

    pub fn frame(mut self, frame: u32) -> Self {
        self.frame = frame;
        self
    }

    pub fn index(mut self, index: u32) -> Self {
        self.index = index;
        self
    }

    fn pack(&self) -> u64 {
        ((self.role as u64) << 56)
            | ((self.pair as u64) << 48)
            | ((self.stage as u64) << 32)
            | (self.frame as u64)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed substream generator: a ChaCha12 RNG whose 256-bit seed is derived
/// from `(seed, key)` by absorbing the key words into a splitmix64 chain.
///
/// The absorb step is a chain of bijections, so distinct keys can never
/// collide for a fixed seed.
pub fn substream(seed: u64, key: StreamKey) -> ChaCha12Rng {
    let mut state = seed;
    for word in [key.pack(), key.index as u64] {
        state ^= word;
        state = splitmix64(&mut state);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(bytes)
}
