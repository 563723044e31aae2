//! Instruction proposal: prompt construction, response parsing, offline
//! mutation, proxy verification and the evolution event that ties them
//! together.

pub mod evolve;
pub mod generator;
pub mod mutation;
pub mod prompt;
pub mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use evolve::{evolve_population, EvolutionContext, EvolutionReport, EvolutionSettings};
pub use generator::{ScriptedGenerator, TextGenerator};
pub use mutation::{mutation_propose, ProposedCandidate};
pub use prompt::{build_prompt, parse_candidates, FailureExample, PromptContext, Templates};
pub use verify::{verify_candidates, VerificationOutcome, VerifyContext};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    Paraphrase,
    History,
    #[default]
    Reflection,
    Mutation,
}

impl ProposerKind {
    pub const ALL: [ProposerKind; 4] = [
        ProposerKind::Paraphrase,
        ProposerKind::History,
        ProposerKind::Reflection,
        ProposerKind::Mutation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProposerKind::Paraphrase => "paraphrase",
            ProposerKind::History => "history",
            ProposerKind::Reflection => "reflection",
            ProposerKind::Mutation => "mutation",
        }
    }

    /// Whether this kind goes through a text generator.
    pub fn uses_generator(self) -> bool {
        !matches!(self, ProposerKind::Mutation)
    }
}

impl fmt::Display for ProposerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProposerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown proposer kind `{s}` (expected paraphrase, history, reflection or mutation)")))
    }
}

/// One generator exchange, kept for the audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalBatch {
    pub parent_id: u64,
    pub kind: ProposerKind,
    pub step: u64,
    pub prompt: String,
    pub raw_response: String,
    pub candidates: Vec<String>,
}
