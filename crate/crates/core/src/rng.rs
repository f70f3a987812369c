//! Keyed deterministic random streams.
//!
//! Every stochastic step draws from its own stream, derived from the run
//! seed and a structured key. Streams never share state, so the order in
//! which agents are processed cannot change the draws any agent sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Part of the key so that two purposes with the
/// same (epoch, round, agent) coordinates get unrelated draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Perturb = 1,
    Partners = 2,
    Compose = 3,
    Retrieve = 4,
    Baseline = 5,
    Bootstrap = 6,
    Synthetic = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub purpose: Purpose,
    pub epoch: u64,
    pub round: u64,
    pub agent: u64,
    pub extra: u64,
}

impl StreamKey {
    pub fn new(purpose: Purpose) -> Self {
        Self {
            purpose,
            epoch: 0,
            round: 0,
            agent: 0,
            extra: 0,
        }
    }

    pub fn epoch(mut self, epoch: usize) -> Self {
        self.epoch = epoch as u64;
        self
    }

    pub fn round(mut self, round: usize) -> Self {
        self.round = round as u64;
        self
    }

    pub fn agent(mut self, agent: u64) -> Self {
        self.agent = agent;
        self
    }

    pub fn extra(mut self, extra: u64) -> Self {
        self.extra = extra;
        self
    }

    pub fn derive_seed(&self, seed: u64) -> u64 {
        let mut h = splitmix64(seed);
        for word in [self.purpose as u64, self.epoch, self.round, self.agent, self.extra] {
            h = splitmix64(h ^ word.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        h
    }

    pub fn stream(&self, seed: u64) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.derive_seed(seed))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
