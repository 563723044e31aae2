//! Deterministic random streams.
//!
//! Every random draw in a run comes from a ChaCha stream whose seed is derived
//! from a base seed plus a context tuple (step, question slot, group index, ...).
//! Nothing carries hidden generator state between steps, so a checkpoint only
//! needs the base seeds to reproduce the continuation exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with an ordered context tuple.
pub fn derive_seed(base: u64, context: &[u64]) -> u64 {
    context
        .iter()
        .fold(splitmix64(base), |acc, &part| splitmix64(acc ^ splitmix64(part)))
}

pub fn stream_rng(base: u64, context: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, context))
}

/// Independent base seeds for the four random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreams {
    pub sampling: u64,
    pub rollout: u64,
    pub proposer: u64,
    pub verification: u64,
}

impl RngStreams {
    pub fn from_master(seed: u64) -> Self {
        Self {
            sampling: derive_seed(seed, &[1]),
            rollout: derive_seed(seed, &[2]),
            proposer: derive_seed(seed, &[3]),
            verification: derive_seed(seed, &[4]),
        }
    }
}
