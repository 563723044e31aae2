//! The training loop: sample, roll out, update, re-weight, prune, evolve.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::env::dataset::{read_kb_jsonl, read_questions_jsonl};
use crate::env::lexicon::{instruction_features_from_text, SEED_INSTRUCTION};
use crate::env::prior::prior_params;
use crate::env::rollout::{rollout, SoftmaxActor};
use crate::env::Environment;
use crate::error::{structural, Error, Result};
use crate::metrics::{read_metrics, write_metrics_line, MetricsRecord, StepEvent};
use crate::policy::{batch_surrogate_loss, GroupRollout, ParamSet, PolicyParams};
use crate::population::{InstructionCandidate, Population};
use crate::proposer::generator::TextGenerator;
use crate::proposer::prompt::Templates;
use crate::proposer::{
    evolve_population, mutation_propose, EvolutionContext, EvolutionReport, ScriptedGenerator,
};
use crate::replay::{ReplayBuffer, ReplayRecord};
use crate::rng::{derive_seed, stream_rng, RngStreams};

/// Entries kept in the scored-instruction archive for the history proposer.
const ARCHIVE_LIMIT: usize = 50;
/// Scored instructions shown in one history prompt.
const HISTORY_SHOWN: usize = 10;
const METRICS_FLUSH_EVERY: u64 = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Proposal calls outside retrial rounds, including the initial population.
    pub primary_calls: u64,
    pub retrial_calls: u64,
    pub generator_fallbacks: u64,
    pub evolution_events: u64,
    pub prune_events: u64,
    pub verification_rollouts: u64,
    pub buffer_insertions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    /// Completed steps; the next step to run has this index.
    pub step: u64,
    pub population: Population,
    pub buffer: ReplayBuffer,
    pub params: PolicyParams,
    pub seed: u64,
    pub rng: RngStreams,
    pub metrics: Vec<MetricsRecord>,
    pub counters: Counters,
    /// `(text, last weight)` of instructions that left the population.
    pub archive: Vec<(String, f64)>,
    pub evolutions: Vec<EvolutionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StateFile {
    step: u64,
    counters: Counters,
    archive: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngFile {
    seed: u64,
    streams: RngStreams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub best_instruction: InstructionCandidate,
    pub counters: Counters,
    pub final_mean_reward: f64,
}

pub fn build_environment(config: &RunConfig) -> Result<Environment> {
    match (&config.dataset.questions_file, &config.dataset.kb_file) {
        (Some(q), Some(kb)) => {
            let kb = read_kb_jsonl(BufReader::new(File::open(kb)?))?;
            let questions = read_questions_jsonl(BufReader::new(File::open(q)?))?;
            Environment::new(kb, questions, config.max_turns)
        }
        _ => Environment::from_seed(config.dataset.seed, config.dataset.counts(), config.max_turns),
    }
}

pub fn build_generator(config: &RunConfig) -> Result<Option<Box<dyn TextGenerator>>> {
    if !config.proposer.uses_generator() {
        return Ok(None);
    }
    if config.scripted_generator {
        let mut g = ScriptedGenerator::new(derive_seed(config.seed, &[5]));
        g.candidates_per_call = config.candidates_per_call;
        return Ok(Some(Box::new(g)));
    }
    match &config.generator {
        #[cfg(feature = "http")]
        Some(g) => Ok(Some(Box::new(crate::proposer::generator::HttpGenerator::new(g.clone())?))),
        #[cfg(not(feature = "http"))]
        Some(_) => Err(Error::Config {
            path: "generator".into(),
            message: "built without HTTP support; use scripted_generator".into(),
        }),
        None => Err(Error::Config { path: "generator".into(), message: "no generator configured".into() }),
    }
}

fn initial_state(config: &RunConfig) -> Result<RunState> {
    let rng = RngStreams::from_master(config.seed);
    let mut population = Population::new(
        config.population_size,
        config.n_parent,
        config.selection_temperature,
        config.weight_window,
    )?;
    let seed_id = population.insert(SEED_INSTRUCTION, instruction_features_from_text(SEED_INSTRUCTION), 0, None)?;
    let mut counters = Counters::default();
    if config.co_evolve && config.population_size > 1 {
        let seed_cand = population.get(seed_id)?.clone();
        let mut prng = stream_rng(rng.proposer, &[u64::MAX, 0]);
        for c in mutation_propose(&seed_cand, &mut prng, config.population_size - 1) {
            population.insert(c.text, c.features, 0, Some(seed_id))?;
        }
        counters.primary_calls += 1;
    }
    Ok(RunState {
        step: 0,
        population,
        buffer: ReplayBuffer::new(config.buffer_capacity, config.failure_threshold, config.failure_lookback)?,
        params: prior_params(),
        seed: config.seed,
        rng,
        metrics: Vec::new(),
        counters,
        archive: Vec::new(),
        evolutions: Vec::new(),
    })
}

fn archive_push(archive: &mut Vec<(String, f64)>, cand: &InstructionCandidate) {
    if cand.reward_window.is_empty() {
        return;
    }
    match archive.iter_mut().find(|(t, _)| *t == cand.text) {
        Some(entry) => entry.1 = cand.weight,
        None => archive.push((cand.text.clone(), cand.weight)),
    }
    if archive.len() > ARCHIVE_LIMIT {
        archive.remove(0);
    }
}

/// Best-first scored instructions from the population and the archive.
fn history_for_prompt(state: &RunState) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = state
        .population
        .candidates()
        .iter()
        .map(|c| (c.text.clone(), c.weight))
        .collect();
    for (text, w) in &state.archive {
        if !all.iter().any(|(t, _)| t == text) {
            all.push((text.clone(), *w));
        }
    }
    all.sort_by(|a, b| b.1.total_cmp(&a.1));
    all.truncate(HISTORY_SHOWN);
    all
}

struct StepTotals {
    reward: f64,
    tool_calls: f64,
    chars: f64,
    items: f64,
    trajectories: usize,
}

/// One training step applied to `state`. On error the caller discards `state`.
fn advance(
    config: &RunConfig,
    env: &Environment,
    templates: &Templates,
    generator: Option<&mut dyn TextGenerator>,
    state: &mut RunState,
) -> Result<MetricsRecord> {
    let t = state.step;
    state.params.refresh_old();
    let questions = env.questions();
    let mut groups = Vec::with_capacity(config.batch_size);
    let mut per_instruction: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    let mut pending = Vec::with_capacity(config.batch_size * config.group_size);
    let mut totals = StepTotals { reward: 0.0, tool_calls: 0.0, chars: 0.0, items: 0.0, trajectories: 0 };

    for b in 0..config.batch_size as u64 {
        let mut srng = stream_rng(state.rng.sampling, &[t, b]);
        let question = &questions[srng.random_range(0..questions.len())];
        let instruction_id = state.population.sample_instruction(&mut srng)?;
        let cand = state.population.get(instruction_id)?;
        let features = cand.features.clone();
        let chars = cand.text.chars().count() as f64;
        let actor = SoftmaxActor { params: &state.params, which: ParamSet::Old, greedy: false };

        let mut points = Vec::with_capacity(config.group_size);
        let mut rewards = Vec::with_capacity(config.group_size);
        for g in 0..config.group_size as u64 {
            let mut rrng = stream_rng(state.rng.rollout, &[t, b, g]);
            let traj = rollout(env, question, instruction_id, &features, &actor, &mut rrng)?;
            totals.reward += traj.reward;
            totals.tool_calls += traj.tool_calls() as f64;
            totals.items += traj.items.len() as f64;
            totals.chars += chars;
            totals.trajectories += 1;
            points.push(traj.decision_points(&features));
            rewards.push(traj.reward);
            pending.push(ReplayRecord {
                instruction_id,
                question_id: question.id,
                reward: traj.reward,
                trajectory: traj,
                step: t,
            });
        }
        let group_mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let entry = per_instruction.entry(instruction_id).or_insert((0.0, 0));
        entry.0 += group_mean;
        entry.1 += 1;
        groups.push(GroupRollout::new(points, rewards)?);
    }

    for _ in 0..config.inner_epochs {
        let out = batch_surrogate_loss(&groups, &state.params, config.clip_eps, config.kl_coef)?;
        if !out.loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite surrogate loss at step {t}")));
        }
        state.params.apply_update(&out.grad, config.learning_rate)?;
    }
    for (id, (sum, n)) in &per_instruction {
        state.population.record_step_reward(*id, sum / *n as f64)?;
    }
    for rec in pending {
        state.buffer.push(rec);
        state.counters.buffer_insertions += 1;
    }

    let mut event = None;
    if config.prunes_at(t, state.population.len()) {
        let before = state.population.candidates().to_vec();
        let removed = state.population.prune();
        if !removed.is_empty() {
            for c in before.iter().filter(|c| removed.contains(&c.id)) {
                archive_push(&mut state.archive, c);
            }
            state.counters.prune_events += 1;
            event = Some(StepEvent::Prune);
        }
    }
    if config.evolves_at(t) {
        let history = history_for_prompt(state);
        let before = state.population.candidates().to_vec();
        let mut ctx = EvolutionContext {
            env,
            params: &state.params,
            buffer: &state.buffer,
            templates,
            generator,
            history: &history,
            step: t,
            proposer_seed: state.rng.proposer,
            verification_seed: state.rng.verification,
        };
        let report = evolve_population(&mut state.population, &mut ctx, &config.evolution_settings())?;
        for c in before.iter().filter(|c| !report.parents.contains(&c.id)) {
            archive_push(&mut state.archive, c);
        }
        state.counters.evolution_events += 1;
        state.counters.primary_calls += report.primary_calls as u64;
        state.counters.retrial_calls += report.retrial_calls as u64;
        state.counters.generator_fallbacks += report.fallback_rounds as u64;
        state.counters.verification_rollouts += report.verification_rollouts.iter().sum::<usize>() as u64;
        if report.fallback_rounds > 0 {
            log::error!("step {t}: {} evolution round(s) fell back to mutation", report.fallback_rounds);
        }
        state.evolutions.push(report);
        event = Some(StepEvent::Evolve);
    }

    let n = totals.trajectories.max(1) as f64;
    let best_weight = state
        .population
        .candidates()
        .iter()
        .map(|c| c.weight)
        .fold(f64::NEG_INFINITY, f64::max);
    let record = MetricsRecord {
        step: t,
        mean_reward: totals.reward / n,
        mean_tool_calls: totals.tool_calls / n,
        active_instruction_chars: totals.chars / n,
        mean_response_items: totals.items / n,
        population_size: state.population.len(),
        best_weight,
        event,
    };
    state.metrics.push(record.clone());
    state.step += 1;
    Ok(record)
}

pub struct Trainer {
    config: RunConfig,
    env: Environment,
    templates: Templates,
    generator: Option<Box<dyn TextGenerator>>,
    state: RunState,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = build_environment(&config)?;
        let templates = Templates::load(&config.templates)?;
        let generator = build_generator(&config)?;
        let state = initial_state(&config)?;
        Ok(Self { config, env, templates, generator, state })
    }

    /// Swap in a different text generator (tests, stubs).
    pub fn with_generator(mut self, generator: Box<dyn TextGenerator>) -> Self {
        self.generator = Some(generator);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.steps
    }

    pub fn best_instruction(&self) -> Result<&InstructionCandidate> {
        self.state.population.get(self.state.population.best_instruction()?)
    }

    /// Run one step. Either the whole step commits or the state is untouched.
    pub fn train_step(&mut self) -> Result<MetricsRecord> {
        if self.is_done() {
            return Err(structural(format!("run already finished {} steps", self.config.steps)));
        }
        let mut next = self.state.clone();
        let generator = self.generator.as_mut().map(|g| &mut **g as &mut dyn TextGenerator);
        let record = advance(&self.config, &self.env, &self.templates, generator, &mut next)?;
        self.state = next;
        Ok(record)
    }

    /// Run until `step` steps have completed (capped at the configured total).
    pub fn run_to(&mut self, step: u64) -> Result<()> {
        while self.state.step < step.min(self.config.steps) {
            self.train_step()?;
        }
        Ok(())
    }

    fn summary(&self) -> Result<RunSummary> {
        Ok(RunSummary {
            steps: self.state.step,
            best_instruction: self.best_instruction()?.clone(),
            counters: self.state.counters.clone(),
            final_mean_reward: self.state.metrics.last().map_or(0.0, |m| m.mean_reward),
        })
    }

    /// Run to completion. With an output directory, metrics are flushed every
    /// few steps and a checkpoint is written at the end, or before returning
    /// an error.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<RunSummary> {
        let Some(dir) = out_dir else {
            self.run_to(self.config.steps)?;
            return self.summary();
        };
        fs::create_dir_all(dir)?;
        let metrics_path = dir.join("metrics.jsonl");
        self.write_metrics(&metrics_path)?;
        let mut flushed = self.state.metrics.len();
        while !self.is_done() {
            if let Err(e) = self.train_step() {
                log::error!("step {} failed: {e}; writing checkpoint", self.state.step);
                self.save_checkpoint(dir)?;
                return Err(e);
            }
            if self.state.step.is_multiple_of(METRICS_FLUSH_EVERY) {
                let mut w = BufWriter::new(OpenOptions::new().append(true).open(&metrics_path)?);
                for rec in &self.state.metrics[flushed..] {
                    write_metrics_line(&mut w, rec)?;
                }
                w.flush()?;
                flushed = self.state.metrics.len();
            }
            if self.config.checkpoint_every > 0 && self.state.step.is_multiple_of(self.config.checkpoint_every) {
                self.save_checkpoint(dir)?;
            }
        }
        self.save_checkpoint(dir)?;
        let summary = self.summary()?;
        fs::write(dir.join("best_instruction.txt"), format!("{}\n", summary.best_instruction.text))?;
        Ok(summary)
    }

    fn write_metrics(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for rec in &self.state.metrics {
            write_metrics_line(&mut w, rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let s = &self.state;
        fs::write(dir.join("config.json"), self.config.to_json()?)?;
        fs::write(dir.join("population.json"), serde_json::to_string_pretty(&s.population)?)?;
        let mut buf = BufWriter::new(File::create(dir.join("buffer.jsonl"))?);
        s.buffer.write_jsonl(&mut buf)?;
        buf.flush()?;
        s.params.save(&dir.join("policy.bin"))?;
        fs::write(
            dir.join("rng.json"),
            serde_json::to_string_pretty(&RngFile { seed: s.seed, streams: s.rng })?,
        )?;
        fs::write(
            dir.join("state.json"),
            serde_json::to_string_pretty(&StateFile {
                step: s.step,
                counters: s.counters.clone(),
                archive: s.archive.clone(),
            })?,
        )?;
        let mut ev = BufWriter::new(File::create(dir.join("evolution.jsonl"))?);
        for report in &s.evolutions {
            serde_json::to_writer(&mut ev, report)?;
            ev.write_all(b"\n")?;
        }
        ev.flush()?;
        self.write_metrics(&dir.join("metrics.jsonl"))
    }

    /// Rebuild a trainer from a checkpoint directory.
    pub fn resume(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.join(name).display())))
        };
        let config = RunConfig::from_json(&read("config.json")?)?;
        let env = build_environment(&config)?;
        let templates = Templates::load(&config.templates)?;
        let generator = build_generator(&config)?;

        let pop: Population = serde_json::from_str(&read("population.json")?)?;
        let population = Population::from_snapshot(
            pop.candidates().to_vec(),
            pop.max_size(),
            pop.n_parent(),
            pop.temperature(),
            pop.window(),
            pop.next_id(),
        )?;
        let buffer = ReplayBuffer::read_jsonl(
            BufReader::new(File::open(dir.join("buffer.jsonl"))?),
            config.buffer_capacity,
            config.failure_threshold,
            config.failure_lookback,
        )?;
        let params = PolicyParams::load(&dir.join("policy.bin"))?;
        if params.layout() != crate::env::policy_layout() {
            return Err(Error::Checkpoint("policy layout does not match this environment".into()));
        }
        let rng: RngFile = serde_json::from_str(&read("rng.json")?)?;
        let st: StateFile = serde_json::from_str(&read("state.json")?)?;
        let mut metrics = read_metrics(&dir.join("metrics.jsonl"))?;
        metrics.retain(|m| m.step < st.step);
        if metrics.len() as u64 != st.step {
            return Err(Error::Checkpoint(format!(
                "metrics.jsonl has {} lines before step {}",
                metrics.len(),
                st.step
            )));
        }
        let evolutions = match fs::read_to_string(dir.join("evolution.jsonl")) {
            Ok(text) => text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<std::result::Result<Vec<EvolutionReport>, _>>()?,
            Err(_) => Vec::new(),
        };
        let state = RunState {
            step: st.step,
            population,
            buffer,
            params,
            seed: rng.seed,
            rng: rng.streams,
            metrics,
            counters: st.counters,
            archive: st.archive,
            evolutions,
        };
        Ok(Self { config, env, templates, generator, state })
    }
}
