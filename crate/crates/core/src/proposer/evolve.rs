//! One evolution event: keep the best parents, propose, verify, admit, and
//! fill any shortfall with mutation candidates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generator::TextGenerator;
use super::mutation::{mutation_propose, ProposedCandidate};
use super::prompt::{build_prompt, parse_candidates, FailureExample, PromptContext, Templates};
use super::verify::{verify_candidates, VerifyContext};
use super::{ProposalBatch, ProposerKind};
use crate::env::lexicon::features_with_knobs;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::population::{InstructionCandidate, Population};
use crate::replay::ReplayBuffer;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSettings {
    pub kind: ProposerKind,
    pub population_size: usize,
    pub n_parent: usize,
    pub acceptance_ratio: f64,
    pub validation_size: usize,
    pub failures_per_prompt: usize,
    pub max_rounds: usize,
    pub candidates_per_call: usize,
    pub crn: bool,
    pub preserve_parent_weights: bool,
}

pub struct EvolutionContext<'a, 'g> {
    pub env: &'a Environment,
    pub params: &'a PolicyParams,
    pub buffer: &'a ReplayBuffer,
    pub templates: &'a Templates,
    pub generator: Option<&'g mut dyn TextGenerator>,
    /// Scored instructions shown to the history proposer.
    pub history: &'a [(String, f64)],
    pub step: u64,
    pub proposer_seed: u64,
    pub verification_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub step: u64,
    pub parents: Vec<u64>,
    pub rounds: usize,
    /// Proposal calls made in the first round (0 or 1).
    pub primary_calls: usize,
    /// Proposal calls made in later rounds.
    pub retrial_calls: usize,
    /// Rounds that fell back to mutation because the generator failed.
    pub fallback_rounds: usize,
    pub verification_rollouts: Vec<usize>,
    pub admitted: Vec<u64>,
    pub mutation_fills: Vec<u64>,
    pub batches: Vec<ProposalBatch>,
}

impl EvolutionReport {
    pub fn proposal_calls(&self) -> usize {
        self.primary_calls + self.retrial_calls
    }
}

fn failures(ctx: &EvolutionContext<'_, '_>, count: usize, rng: &mut impl Rng) -> Result<Vec<FailureExample>> {
    ctx.buffer
        .sample_failures(count, rng)
        .into_iter()
        .map(|r| {
            let q = ctx.env.question(r.question_id)?;
            Ok(FailureExample { response: r.trajectory.render(), correct_answer: q.gold_answer.clone() })
        })
        .collect()
}

/// Ask the generator for candidates. `Ok(None)` means the generator could not
/// be used this round and the caller should fall back to mutation.
fn generate(
    ctx: &mut EvolutionContext<'_, '_>,
    settings: &EvolutionSettings,
    parent: &InstructionCandidate,
    rng: &mut impl Rng,
    report: &mut EvolutionReport,
) -> Result<Option<Vec<ProposedCandidate>>> {
    let prompt_ctx = PromptContext {
        history: ctx.history.to_vec(),
        failures: if settings.kind == ProposerKind::Reflection {
            failures(ctx, settings.failures_per_prompt, rng)?
        } else {
            Vec::new()
        },
        n: settings.candidates_per_call,
    };
    let prompt = match build_prompt(ctx.templates, settings.kind, parent, &prompt_ctx) {
        Ok(p) => p,
        Err(Error::Structural(msg)) => {
            log::warn!("step {}: {msg}; using mutation this round", ctx.step);
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let Some(generator) = ctx.generator.as_deref_mut() else {
        log::error!("step {}: no text generator configured; using mutation this round", ctx.step);
        return Ok(None);
    };
    let raw = match generator.generate(&prompt) {
        Ok(raw) => raw,
        Err(Error::Generator(msg)) => {
            log::error!("step {}: GENERATOR UNAVAILABLE ({msg}); using mutation this round", ctx.step);
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let texts = match parse_candidates(&raw) {
        Ok(t) => t,
        Err(Error::Parse(msg)) => {
            log::warn!("step {}: {msg}", ctx.step);
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    report.batches.push(ProposalBatch {
        parent_id: parent.id,
        kind: settings.kind,
        step: ctx.step,
        prompt,
        raw_response: raw,
        candidates: texts.clone(),
    });
    Ok(Some(
        texts
            .into_iter()
            .map(|text| {
                let features = features_with_knobs(&text, &parent.features);
                ProposedCandidate { text, features }
            })
            .collect(),
    ))
}

/// Replace the population with its top `n_parent` members plus verified
/// newcomers, refilled to exactly `population_size`.
pub fn evolve_population(
    population: &mut Population,
    ctx: &mut EvolutionContext<'_, '_>,
    settings: &EvolutionSettings,
) -> Result<EvolutionReport> {
    let parents = population.top(settings.n_parent);
    population.retain_ids(&parents);
    let parent_cands: Vec<InstructionCandidate> = parents
        .iter()
        .map(|&id| population.get(id).cloned())
        .collect::<Result<_>>()?;
    let mut report = EvolutionReport { step: ctx.step, parents: parents.clone(), ..Default::default() };
    let needed = settings.population_size.saturating_sub(population.len());

    let validation = ctx
        .buffer
        .validation_set(settings.validation_size, &mut stream_rng(ctx.verification_seed, &[ctx.step, u64::MAX]));

    let mut round = 0;
    while report.admitted.len() < needed && round < settings.max_rounds && !parent_cands.is_empty() {
        let mut rng = stream_rng(ctx.proposer_seed, &[ctx.step, round as u64]);
        let parent = &parent_cands[rng.random_range(0..parent_cands.len())];
        if round == 0 {
            report.primary_calls += 1;
        } else {
            report.retrial_calls += 1;
        }
        let proposals = if settings.kind.uses_generator() {
            match generate(ctx, settings, parent, &mut rng, &mut report)? {
                Some(p) => p,
                None => {
                    report.fallback_rounds += 1;
                    mutation_propose(parent, &mut rng, settings.candidates_per_call)
                }
            }
        } else {
            mutation_propose(parent, &mut rng, settings.candidates_per_call)
        };
        round += 1;
        if proposals.is_empty() {
            continue;
        }

        let verify_ctx = VerifyContext {
            env: ctx.env,
            params: ctx.params,
            questions: &validation,
            seed: ctx.verification_seed,
            step: ctx.step,
            round: round as u64 - 1,
            crn: settings.crn,
        };
        let outcome = verify_candidates(
            &verify_ctx,
            &parent.features,
            &proposals,
            needed - report.admitted.len(),
            settings.acceptance_ratio,
        )?;
        report.verification_rollouts.push(outcome.rollouts);
        for i in outcome.admitted {
            let c = &proposals[i];
            let id = population.insert(c.text.clone(), c.features.clone(), ctx.step, Some(parent.id))?;
            report.admitted.push(id);
        }
    }
    report.rounds = round;

    let shortfall = settings.population_size.saturating_sub(population.len());
    if shortfall > 0 {
        if let Some(best) = parent_cands.first() {
            log::info!("step {}: filling {shortfall} slot(s) with mutation candidates", ctx.step);
            let mut rng = stream_rng(ctx.proposer_seed, &[ctx.step, u64::MAX]);
            for c in mutation_propose(best, &mut rng, shortfall) {
                let id = population.insert(c.text, c.features, ctx.step, Some(best.id))?;
                report.mutation_fills.push(id);
            }
        }
    }

    if settings.preserve_parent_weights {
        population.reset_weights_except(&parents);
    } else {
        population.reset_weights();
    }
    Ok(report)
}
