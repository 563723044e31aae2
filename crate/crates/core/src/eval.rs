//! Greedy evaluation of a policy with a fixed instruction.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::dataset::read_questions_jsonl;
use crate::env::lexicon::instruction_features_from_text;
use crate::env::rollout::{rollout, Actor, SoftmaxActor};
use crate::env::{Environment, Question};
use crate::error::Result;
use crate::orchestrator::Trainer;
use crate::policy::ParamSet;
use crate::population::Population;
use crate::rng::stream_rng;

/// Which instruction to evaluate with.
#[derive(Debug, Clone, PartialEq)]
pub enum InstructionChoice {
    /// Highest-weight candidate of the population.
    Best,
    Id(u64),
    /// Free text, featurized on the fly.
    Text(String),
}

impl InstructionChoice {
    /// `best`, a bare integer id, or anything else as literal text.
    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "best" => Self::Best,
            t => t.parse().map(Self::Id).unwrap_or_else(|_| Self::Text(s.to_string())),
        }
    }

    /// Text and features of the chosen instruction.
    pub fn resolve(&self, population: &Population) -> Result<(String, Vec<f64>)> {
        let cand = match self {
            Self::Text(t) => return Ok((t.clone(), instruction_features_from_text(t))),
            Self::Best => population.get(population.best_instruction()?)?,
            Self::Id(id) => population.get(*id)?,
        };
        Ok((cand.text.clone(), cand.features.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub exact_match: f64,
    pub mean_tool_calls: f64,
    pub mean_turns: f64,
}

/// Roll out each question once. With a greedy actor the result is deterministic.
pub fn evaluate(
    env: &Environment,
    questions: &[Question],
    instruction_features: &[f64],
    actor: &dyn Actor,
) -> Result<EvalReport> {
    let mut em = 0.0;
    let mut tools = 0.0;
    let mut turns = 0.0;
    for q in questions {
        let mut rng = stream_rng(0, &[q.id]);
        let t = rollout(env, q, u64::MAX, instruction_features, actor, &mut rng)?;
        em += t.reward;
        tools += t.tool_calls() as f64;
        turns += t.turns_used as f64;
    }
    let n = questions.len();
    let d = n.max(1) as f64;
    Ok(EvalReport { count: n, exact_match: em / d, mean_tool_calls: tools / d, mean_turns: turns / d })
}

/// Greedy evaluation of a checkpoint on its own questions or a JSONL question file.
pub fn evaluate_checkpoint(dir: &Path, questions_file: Option<&Path>, choice: &InstructionChoice) -> Result<EvalReport> {
    let trainer = Trainer::resume(dir)?;
    let (_, features) = choice.resolve(&trainer.state().population)?;
    let env = match questions_file {
        Some(path) => trainer.env().with_questions(read_questions_jsonl(BufReader::new(File::open(path)?))?)?,
        None => trainer.env().clone(),
    };
    let actor = SoftmaxActor { params: &trainer.state().params, which: ParamSet::Current, greedy: true };
    evaluate(&env, env.questions(), &features, &actor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::rollout::OracleActor;
    use crate::env::{DepthCounts, INSTRUCTION_DIM};

    #[test]
    fn oracle_scores_one_and_empty_scores_zero() {
        let env = Environment::from_seed(2, DepthCounts { depth1: 10, depth2: 10, depth3: 10 }, 4).unwrap();
        let r = evaluate(&env, env.questions(), &[0.0; INSTRUCTION_DIM], &OracleActor).unwrap();
        assert_eq!(r.count, 30);
        assert_eq!(r.exact_match, 1.0);
        assert_eq!(r.mean_turns, 3.0);
        let empty = evaluate(&env, &[], &[0.0; INSTRUCTION_DIM], &OracleActor).unwrap();
        assert_eq!(empty.count, 0);
        assert_eq!(empty.exact_match, 0.0);
    }

    #[test]
    fn instruction_choice_parsing() {
        assert_eq!(InstructionChoice::parse("best"), InstructionChoice::Best);
        assert_eq!(InstructionChoice::parse("3"), InstructionChoice::Id(3));
        assert_eq!(InstructionChoice::parse("Answer briefly."), InstructionChoice::Text("Answer briefly.".into()));
    }

    #[test]
    fn unknown_id_is_rejected() {
        let mut pop = Population::new(2, 1, 0.2, 5).unwrap();
        pop.insert("a", vec![0.0; INSTRUCTION_DIM], 0, None).unwrap();
        assert!(matches!(InstructionChoice::Id(9).resolve(&pop), Err(crate::Error::UnknownCandidate(9))));
        assert_eq!(InstructionChoice::Best.resolve(&pop).unwrap().0, "a");
    }
}
