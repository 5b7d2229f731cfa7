//! Deterministic, named random streams derived from one root seed.
//!
//! Each consumer (environment, model, gibbs sampler, planner) draws from its
//! own ChaCha stream, so adding a new consumer never shifts the numbers seen
//! by the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a, used only to map stream names onto ChaCha stream ids.
fn fnv1a(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Root seed from which named streams are split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Independent stream for `name`.
    pub fn stream(&self, name: &str) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(fnv1a(name));
        rng
    }

    /// Child tree, e.g. one per repetition inside an experiment.
    pub fn child(&self, name: &str, index: u64) -> SeedTree {
        let mixed = self.root ^ fnv1a(name).rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        SeedTree::new(splitmix64(mixed))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
