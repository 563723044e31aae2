//! Actors and episode rollouts.

use rand::{Rng, RngCore};

use super::{Action, Environment, Episode, Question, StepOutcome, Trajectory};
use crate::error::Result;
use crate::policy::{softmax, ParamSet, PolicyParams};

pub trait Actor {
    fn choose(&self, episode: &Episode<'_>, instruction_features: &[f64], rng: &mut dyn RngCore) -> Result<Action>;
}

/// Samples (or takes the argmax of) the featurized softmax policy.
pub struct SoftmaxActor<'p> {
    pub params: &'p PolicyParams,
    pub which: ParamSet,
    pub greedy: bool,
}

impl Actor for SoftmaxActor<'_> {
    fn choose(&self, episode: &Episode<'_>, instruction_features: &[f64], rng: &mut dyn RngCore) -> Result<Action> {
        let logits = self
            .params
            .action_logits(self.which, &episode.state_features(), instruction_features)?;
        if self.greedy {
            let best = (0..logits.len())
                .fold(0, |best, i| if logits[i] > logits[best] { i } else { best });
            return Action::from_index(best);
        }
        let probs = softmax(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::from_index(i);
            }
        }
        Action::from_index(probs.len() - 1)
    }
}

/// Follows the hop chain, then answers.
pub struct OracleActor;

impl Actor for OracleActor {
    fn choose(&self, episode: &Episode<'_>, _: &[f64], _: &mut dyn RngCore) -> Result<Action> {
        Ok(if episode.resolved_hops() < episode.question().depth() {
            Action::SearchNextHop
        } else {
            Action::AnswerLatest
        })
    }
}

/// One search mirroring the whole question, then answer.
pub struct BroadSearchActor;

impl Actor for BroadSearchActor {
    fn choose(&self, episode: &Episode<'_>, _: &[f64], _: &mut dyn RngCore) -> Result<Action> {
        Ok(if episode.trajectory().turns_used == 0 {
            Action::SearchWholeQuestion
        } else {
            Action::AnswerLatest
        })
    }
}

/// Searches `hops` times along the chain, then answers regardless.
pub struct FixedHopsActor(pub usize);

impl Actor for FixedHopsActor {
    fn choose(&self, episode: &Episode<'_>, _: &[f64], _: &mut dyn RngCore) -> Result<Action> {
        Ok(if episode.trajectory().turns_used < self.0 {
            Action::SearchNextHop
        } else {
            Action::AnswerLatest
        })
    }
}

pub fn rollout(
    env: &Environment,
    question: &Question,
    instruction_id: u64,
    instruction_features: &[f64],
    actor: &dyn Actor,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    let mut episode = env.start(question, instruction_id);
    loop {
        let action = actor.choose(&episode, instruction_features, rng)?;
        if let StepOutcome::Terminal { .. } = episode.step(action, instruction_features)? {
            return Ok(episode.into_trajectory());
        }
    }
}
