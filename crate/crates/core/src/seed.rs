//! Seed derivation and the simulator's pseudo-random generator.
//!
//! Every random draw in a run descends from one 64-bit experiment seed. Child
//! seeds are derived by mixing the parent seed with a tag through SplitMix64,
//! so independent consumers (dataset, partition, per-round client work,
//! evaluation) never share a stream, and adding rounds or clients never shifts
//! the draws of another consumer.
//!
//! The generator itself is ChaCha8 seeded through `SeedableRng::seed_from_u64`,
//! which is specified bit-for-bit and does not depend on the platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named top-level streams split off the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dataset = 1,
    TestSet = 2,
    Partition = 3,
    ModelInit = 4,
    Participants = 5,
    Client = 6,
    Evaluation = 7,
    TailChoice = 8,
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedNode(u64);

impl SeedNode {
    pub fn new(seed: u64) -> Self {
        SeedNode(seed)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn child(self, tag: u64) -> SeedNode {
        SeedNode(splitmix64(self.0 ^ splitmix64(tag)))
    }

    pub fn stream(self, stream: Stream) -> SeedNode {
        self.child(stream as u64)
    }

    /// Seed for client `client` in round `round`.
    pub fn client_round(self, round: usize, client: usize) -> SeedNode {
        self.stream(Stream::Client)
            .child(round as u64)
            .child(client as u64)
    }

    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.0)
    }
}
