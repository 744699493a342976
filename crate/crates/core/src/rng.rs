//! Deterministic stream derivation.
//!
//! Every random decision in a run is drawn from a stream derived from the
//! run seed through a (tag, index) path, so the map sequence, per-episode
//! scenario draws, policy sampling, and augmentation draws are mutually
//! independent: changing how many values one stream consumes never shifts
//! another. Environments stepped in parallel own disjoint streams, which is
//! what makes parallel and sequential execution bit-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG handed to all sampling code.
pub type Stream = ChaCha8Rng;

/// Stream tags. Each tag is an independent branch under the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    MapGen,
    Scenario,
    Motion,
    PolicySampling,
    PolicyInit,
    Augment,
    Bench,
}

impl StreamTag {
    fn id(self) -> u64 {
        match self {
            StreamTag::MapGen => 1,
            StreamTag::Scenario => 2,
            StreamTag::Motion => 3,
            StreamTag::PolicySampling => 4,
            StreamTag::PolicyInit => 5,
            StreamTag::Augment => 6,
            StreamTag::Bench => 7,
        }
    }
}

/// Splittable seed tree rooted at the run seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(run_seed: u64) -> Self {
        SeedTree { root: run_seed }
    }

    /// Independent stream for `(tag, index)`. The index is typically an
    /// episode id or an environment lane.
    pub fn stream(&self, tag: StreamTag, index: u64) -> Stream {
        ChaCha8Rng::seed_from_u64(mix3(self.root, tag.id(), index))
    }

    /// Stream for a tag with two indices (e.g. env lane + episode counter).
    pub fn stream2(&self, tag: StreamTag, a: u64, b: u64) -> Stream {
        ChaCha8Rng::seed_from_u64(mix3(mix3(self.root, tag.id(), a), 0x9e37, b))
    }
}

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn mix3(a: u64, b: u64, c: u64) -> u64 {
    splitmix(splitmix(splitmix(a) ^ b.wrapping_mul(0xff51afd7ed558ccd)) ^ c)
}

/// Stable per-(seed, class) parameter derivation used by the sound bank.
pub fn derive_stream(seed: u64, salt: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(mix3(seed, 0xdead_beef, salt))
}
