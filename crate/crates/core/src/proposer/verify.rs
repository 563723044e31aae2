//! Proxy verification of proposed candidates on a small validation set.

use crate::env::rollout::{rollout, SoftmaxActor};
use crate::env::Environment;
use crate::error::{structural, Result};
use crate::policy::{ParamSet, PolicyParams};
use crate::rng::stream_rng;

use super::ProposedCandidate;

pub struct VerifyContext<'a> {
    pub env: &'a Environment,
    pub params: &'a PolicyParams,
    /// Validation question ids.
    pub questions: &'a [u64],
    pub seed: u64,
    pub step: u64,
    pub round: u64,
    /// Share rollout seeds between the parent and every candidate.
    pub crn: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub parent_score: f64,
    /// Proxy score per candidate, in input order.
    pub scores: Vec<f64>,
    /// Indices of admitted candidates, best first.
    pub admitted: Vec<usize>,
    pub rollouts: usize,
}

const PARENT_SLOT: u64 = u64::MAX;

impl VerifyContext<'_> {
    /// Mean exact-match reward over the validation set, one sampled rollout each.
    fn score(&self, features: &[f64], slot: u64) -> Result<(f64, usize)> {
        if self.questions.is_empty() {
            return Ok((0.0, 0));
        }
        let actor = SoftmaxActor { params: self.params, which: ParamSet::Current, greedy: false };
        let mut total = 0.0;
        for &qid in self.questions {
            let question = self.env.question(qid)?;
            let mut rng = if self.crn {
                stream_rng(self.seed, &[self.step, self.round, qid])
            } else {
                stream_rng(self.seed, &[self.step, self.round, slot, qid])
            };
            total += rollout(self.env, question, u64::MAX, features, &actor, &mut rng)?.reward;
        }
        Ok((total / self.questions.len() as f64, self.questions.len()))
    }
}

/// Score the parent and each candidate, rank candidates by score (ties to the
/// lower index) and admit up to `admit_count` of those scoring at least
/// `acceptance_ratio` times the parent.
pub fn verify_candidates(
    ctx: &VerifyContext<'_>,
    parent_features: &[f64],
    candidates: &[ProposedCandidate],
    admit_count: usize,
    acceptance_ratio: f64,
) -> Result<VerificationOutcome> {
    if candidates.is_empty() {
        return Err(structural("verification needs at least one candidate"));
    }
    if ctx.questions.is_empty() {
        log::warn!("empty validation set at step {}; all proxy scores are 0", ctx.step);
    }
    let (parent_score, mut rollouts) = ctx.score(parent_features, PARENT_SLOT)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        let (s, n) = ctx.score(&c.features, i as u64)?;
        scores.push(s);
        rollouts += n;
    }

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let threshold = acceptance_ratio * parent_score;
    let admitted: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| scores[i] >= threshold)
        .take(admit_count)
        .collect();
    for &i in &order {
        if !admitted.contains(&i) {
            log::info!(
                "step {} round {}: candidate {i} not admitted (proxy {:.4}, parent {:.4})",
                ctx.step,
                ctx.round,
                scores[i],
                parent_score
            );
        }
    }
    Ok(VerificationOutcome { parent_score, scores, admitted, rollouts })
}
