//! Offline mutation proposer: toggles one keyword flag by splicing its
//! phrase in or out of the text, and jitters the strategy knobs.

use rand::Rng;

use crate::env::lexicon::{keyword_flags, with_keyword, without_keyword};
use crate::env::{INSTRUCTION_DIM, KEYWORD_FLAGS};
use crate::population::InstructionCandidate;

pub const KNOB_JITTER: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ProposedCandidate {
    pub text: String,
    pub features: Vec<f64>,
}

pub fn mutation_propose<R: Rng + ?Sized>(
    parent: &InstructionCandidate,
    rng: &mut R,
    count: usize,
) -> Vec<ProposedCandidate> {
    (0..count).map(|_| mutate_once(&parent.text, &parent.features, rng)).collect()
}

fn mutate_once<R: Rng + ?Sized>(text: &str, features: &[f64], rng: &mut R) -> ProposedCandidate {
    let flag = rng.random_range(0..KEYWORD_FLAGS);
    let present = features[flag] > 0.5;
    let text = if present {
        without_keyword(text, flag)
    } else {
        with_keyword(text, flag)
    };
    let mut out = features.to_vec();
    out[flag] = if present { 0.0 } else { 1.0 };
    debug_assert_eq!(keyword_flags(&text)[flag], !present);
    for k in KEYWORD_FLAGS..INSTRUCTION_DIM {
        let jitter = rng.random_range(-KNOB_JITTER..=KNOB_JITTER);
        out[k] = (features[k] + jitter).clamp(-1.0, 1.0);
    }
    ProposedCandidate { text, features: out }
}
