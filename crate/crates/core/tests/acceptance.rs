//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use coevo_core::env::lexicon::{flag_count, instruction_features_from_text, SEED_INSTRUCTION};
use coevo_core::env::prior::prior_params;
use coevo_core::env::rollout::{rollout, SoftmaxActor};
use coevo_core::env::{DepthCounts, Environment, INSTRUCTION_DIM};
use coevo_core::metrics::final_quartile_mean;
use coevo_core::orchestrator::{ablate, write_ablation_csv, RunConfig, Trainer};
use coevo_core::policy::{
    compute_advantages, importance_ratio, surrogate_loss, DecisionPoint, GroupRollout, ParamSet, PolicyLayout,
    PolicyParams,
};
use coevo_core::population::Population;
use coevo_core::proposer::{
    evolve_population, parse_candidates, EvolutionContext, EvolutionSettings, ProposerKind, Templates,
};
use coevo_core::replay::{ReplayBuffer, ReplayRecord};
use coevo_core::rng::stream_rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn check_runtime(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))?;
    Ok(took)
}

// ---------------------------------------------------------------- criterion 1

struct GradInstance {
    group: GroupRollout,
    params: PolicyParams,
    clip_eps: f64,
    kl_coef: f64,
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> GradInstance {
    let layout = PolicyLayout {
        state_dim: rng.random_range(1..=3),
        instruction_dim: rng.random_range(1..=3),
        num_actions: rng.random_range(3..=6),
    };
    let n = layout.param_count();
    let theta_ref = uniform_vec(rng, n, 1.0);
    let theta: Vec<f64> = theta_ref.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    let theta_old: Vec<f64> = theta.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    let mut params = PolicyParams::new(layout, theta_ref).unwrap();
    params.set_theta(theta).unwrap();
    params.set_theta_old(theta_old).unwrap();

    let g = rng.random_range(3..=8);
    let mut trajectories = Vec::with_capacity(g);
    let mut rewards = Vec::with_capacity(g);
    for _ in 0..g {
        let len = rng.random_range(1..=6);
        let forced_agent = rng.random_range(0..len);
        let traj = (0..len)
            .map(|k| DecisionPoint {
                state_features: uniform_vec(rng, layout.state_dim, 1.0),
                instruction_features: uniform_vec(rng, layout.instruction_dim, 1.0),
                action: rng.random_range(0..layout.num_actions),
                is_agent: k == forced_agent || rng.random_bool(0.6),
            })
            .collect();
        trajectories.push(traj);
        rewards.push(rng.random_range(0.0..1.0));
    }
    GradInstance {
        group: GroupRollout::new(trajectories, rewards).unwrap(),
        params,
        clip_eps: rng.random_range(0.1..0.3),
        kl_coef: rng.random_range(0.0..0.1),
    }
}

fn near_clip_boundary(inst: &GradInstance) -> bool {
    inst.group.trajectories.iter().flatten().filter(|p| p.is_agent).any(|p| {
        let r = importance_ratio(p, &inst.params).unwrap().value;
        (r - (1.0 - inst.clip_eps)).abs() < 1e-4 || (r - (1.0 + inst.clip_eps)).abs() < 1e-4
    })
}

fn loss_at(inst: &GradInstance, theta: &[f64]) -> f64 {
    let mut p = inst.params.clone();
    p.set_theta(theta.to_vec()).unwrap();
    surrogate_loss(&inst.group, &p, inst.clip_eps, inst.kl_coef).unwrap().loss
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7d);
    let instances = 200;
    let mut worst_rel = 0.0f64;
    let mut resampled = 0;
    let mut advantage_groups = 0;
    let mut done = 0;
    while done < instances {
        let inst = random_instance(&mut rng);
        if near_clip_boundary(&inst) {
            resampled += 1;
            continue;
        }
        done += 1;

        // central differences
        let analytic = surrogate_loss(&inst.group, &inst.params, inst.clip_eps, inst.kl_coef).unwrap().grad;
        let h = 1e-6;
        let theta = inst.params.theta().to_vec();
        let numeric: Vec<f64> = (0..theta.len())
            .map(|i| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[i] += h;
                down[i] -= h;
                (loss_at(&inst, &up) - loss_at(&inst, &down)) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric));
        let rel = if scale == 0.0 { 0.0 } else { norm(&diff) / scale };
        worst_rel = worst_rel.max(rel);
        ensure(rel < 1e-5, || format!("instance {done}: relative gradient error {rel:e}"))?;

        // advantages
        let adv = compute_advantages(&inst.group.rewards).unwrap();
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        ensure(mean.abs() < 1e-10 && (std - 1.0).abs() < 1e-10, || {
            format!("instance {done}: advantages mean {mean:e} std {std}")
        })?;
        advantage_groups += 1;

        // observation points contribute nothing: dropping or scrambling them is bit-identical
        let base = surrogate_loss(&inst.group, &inst.params, inst.clip_eps, inst.kl_coef).unwrap();
        let layout = inst.params.layout();
        let mut dropped = inst.group.clone();
        let mut scrambled = inst.group.clone();
        for traj in &mut dropped.trajectories {
            traj.retain(|p| p.is_agent);
        }
        for p in scrambled.trajectories.iter_mut().flatten().filter(|p| !p.is_agent) {
            p.state_features = uniform_vec(&mut rng, layout.state_dim, 5.0);
            p.instruction_features = uniform_vec(&mut rng, layout.instruction_dim, 5.0);
            p.action = rng.random_range(0..layout.num_actions);
        }
        for variant in [&dropped, &scrambled] {
            let out = surrogate_loss(variant, &inst.params, inst.clip_eps, inst.kl_coef).unwrap();
            let same = out.loss.to_bits() == base.loss.to_bits()
                && out.grad.iter().zip(&base.grad).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("instance {done}: observation points changed the gradient"))?;
        }
    }
    let took = check_runtime(start, Duration::from_secs(30))?;
    Ok(format!(
        "{instances} instances, worst relative error {worst_rel:.2e}, {advantage_groups} advantage groups, \
         {resampled} resampled near clip, {took:.2?}"
    ))
}

// ---------------------------------------------------------------- criterion 2

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn big_to_f64(b: &BigFloat) -> f64 {
    format!("{b}").parse().expect("decimal rendering parses as f64")
}

/// Tempered softmax evaluated at 256-bit precision, without max-shifting.
fn softmax_oracle(weights: &[f64], temperature: f64, cc: &mut Consts) -> Vec<f64> {
    let t = BigFloat::from_f64(temperature, PREC);
    let exps: Vec<BigFloat> = weights
        .iter()
        .map(|&w| BigFloat::from_f64(w, PREC).div(&t, PREC, RM).exp(PREC, RM, cc))
        .collect();
    let mut total = BigFloat::from_f64(0.0, PREC);
    for e in &exps {
        total = total.add(e, PREC, RM);
    }
    exps.iter().map(|e| big_to_f64(&e.div(&total, PREC, RM))).collect()
}

fn population_with(weights: &[f64], temperature: f64) -> Population {
    let mut pop = Population::new(weights.len(), 1, temperature, 1).unwrap();
    for &w in weights {
        let id = pop.insert("candidate", vec![0.0; INSTRUCTION_DIM], 0, None).unwrap();
        pop.record_step_reward(id, w).unwrap();
    }
    pop
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x50f7);
    let mut cc = Consts::new().expect("constants cache");
    let mut worst = 0.0f64;
    for v in 0..1000 {
        let n = rng.random_range(1..=20);
        let temperature = rng.random_range(0.05..2.0);
        let weights = uniform_vec(&mut rng, n, 3.0);
        let pop = population_with(&weights, temperature);
        let got = pop.selection_probabilities().map_err(|e| e.to_string())?;
        let want = softmax_oracle(&weights, temperature, &mut cc);
        for (g, w) in got.iter().zip(&want) {
            let err = (g - w).abs();
            worst = worst.max(err);
            ensure(err < 1e-10, || format!("vector {v}: probability {g} vs oracle {w}"))?;
        }
    }

    let draws = 100_000;
    let mut min_p = 1.0f64;
    for k in 0..20 {
        let n = rng.random_range(2..=8);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let pop = population_with(&weights, 0.2);
        let probs = pop.selection_probabilities().unwrap();
        let ids: Vec<u64> = pop.candidates().iter().map(|c| c.id).collect();
        let mut counts = vec![0usize; n];
        let mut draw_rng = ChaCha8Rng::seed_from_u64(1000 + k);
        for _ in 0..draws {
            let id = pop.sample_instruction(&mut draw_rng).unwrap();
            counts[ids.iter().position(|&i| i == id).unwrap()] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| {
                let e = p * draws as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let p_value = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
        min_p = min_p.min(p_value);
        ensure(p_value > 0.01, || format!("population {k}: chi-square p = {p_value:.4}"))?;
    }
    let took = check_runtime(start, Duration::from_secs(30))?;
    Ok(format!(
        "1000 vectors, worst abs error {worst:.2e}; 20 populations, min chi-square p {min_p:.3}; {took:.2?}"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let config = RunConfig { proposer: ProposerKind::Mutation, ..RunConfig::default() };
    let expected_steps: Vec<u64> = (0..config.steps)
        .filter(|t| t % config.evolve_period == 0 && *t < config.evolve_until)
        .collect();
    let mut trainer = Trainer::new(config.clone()).map_err(|e| e.to_string())?;
    let mut checked_rounds = 0;
    while !trainer.is_done() {
        let record = trainer.train_step().map_err(|e| e.to_string())?;
        let state = trainer.state();
        if record.event == Some(coevo_core::metrics::StepEvent::Evolve) {
            let report = state.evolutions.last().unwrap();
            ensure(report.step == record.step, || "evolution report out of step".into())?;
            let validation = state
                .buffer
                .validation_set(config.validation_size, &mut stream_rng(state.rng.verification, &[record.step, u64::MAX]));
            let distinct: BTreeSet<u64> = validation.iter().copied().collect();
            ensure(distinct.len() == validation.len() && validation.len() <= config.validation_size, || {
                format!("step {}: validation set of {} ids is not distinct or too large", record.step, validation.len())
            })?;
            let per_round = (config.candidates_per_call + 1) * validation.len();
            ensure(report.verification_rollouts.iter().all(|&r| r == per_round), || {
                format!(
                    "step {}: rollouts {:?}, expected {per_round} per round",
                    record.step, report.verification_rollouts
                )
            })?;
            checked_rounds += report.verification_rollouts.len();
        }
    }
    let state = trainer.state();
    let steps: Vec<u64> = state.evolutions.iter().map(|r| r.step).collect();
    ensure(steps == expected_steps && steps.len() == 10, || format!("evolution steps {steps:?}"))?;
    let c = &state.counters;
    ensure(c.evolution_events == 10, || format!("{} evolution events", c.evolution_events))?;
    ensure(c.primary_calls == 11, || format!("{} primary proposer calls, expected 11", c.primary_calls))?;
    let total = c.primary_calls + c.retrial_calls;
    let cap = 1 + 10 * config.max_rounds as u64;
    ensure(total <= cap, || format!("{total} proposer calls exceed cap {cap}"))?;
    Ok(format!(
        "10 evolutions at {:?}..{:?}, {} primary + {} retrial calls, {checked_rounds} verification rounds exact",
        steps.first().unwrap(),
        steps.last().unwrap(),
        c.primary_calls,
        c.retrial_calls
    ))
}

// ---------------------------------------------------------------- criterion 4

/// Independent record of each candidate's reward window.
struct Shadow {
    window: usize,
    entries: Vec<(u64, Vec<f64>)>,
}

impl Shadow {
    fn weight(w: &[f64]) -> f64 {
        if w.is_empty() {
            0.0
        } else {
            w.iter().sum::<f64>() / w.len() as f64
        }
    }

    fn push(&mut self, id: u64, r: f64) {
        let entry = &mut self.entries.iter_mut().find(|(i, _)| *i == id).unwrap().1;
        entry.push(r);
        if entry.len() > self.window {
            entry.remove(0);
        }
    }

    /// Ids ordered best first by brute force: compare every pair.
    fn ranked(&self) -> Vec<u64> {
        let mut ids: Vec<(u64, f64)> = self.entries.iter().map(|(i, w)| (*i, Self::weight(w))).collect();
        let mut out = Vec::new();
        while !ids.is_empty() {
            let mut best = 0;
            for k in 1..ids.len() {
                let (id, w) = ids[k];
                let (bid, bw) = ids[best];
                if w > bw || (w == bw && id < bid) {
                    best = k;
                }
            }
            out.push(ids.remove(best).0);
        }
        out
    }

    fn sync_from(&mut self, pop: &Population) {
        self.entries = pop
            .candidates()
            .iter()
            .map(|c| (c.id, c.reward_window.iter().copied().collect()))
            .collect();
    }
}

fn check_windows(pop: &Population, shadow: &Shadow, at: &str) -> Result<(), String> {
    ensure(pop.len() == shadow.entries.len(), || format!("{at}: size {} vs oracle {}", pop.len(), shadow.entries.len()))?;
    for c in pop.candidates() {
        let (_, w) = shadow
            .entries
            .iter()
            .find(|(i, _)| *i == c.id)
            .ok_or_else(|| format!("{at}: unexpected candidate {}", c.id))?;
        let stored: Vec<f64> = c.reward_window.iter().copied().collect();
        ensure(&stored == w, || format!("{at}: candidate {} window {stored:?} vs oracle {w:?}", c.id))?;
        ensure(c.weight.to_bits() == Shadow::weight(w).to_bits(), || {
            format!("{at}: candidate {} weight {} vs recomputed {}", c.id, c.weight, Shadow::weight(w))
        })?;
    }
    Ok(())
}

fn criterion_4() -> Outcome {
    let env = Environment::from_seed(1, DepthCounts { depth1: 10, depth2: 10, depth3: 10 }, 4).unwrap();
    let params = prior_params();
    let templates = Templates::default();
    let seed_features = instruction_features_from_text(SEED_INSTRUCTION);
    let mut buffer = ReplayBuffer::new(1000, 0.5, 5).unwrap();
    {
        let actor = SoftmaxActor { params: &params, which: ParamSet::Current, greedy: false };
        let mut rng = stream_rng(3, &[]);
        for q in env.questions() {
            let t = rollout(&env, q, 0, &seed_features, &actor, &mut rng).unwrap();
            buffer.push(ReplayRecord { instruction_id: 0, question_id: q.id, reward: t.reward, trajectory: t, step: 0 });
        }
    }

    let rewards = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e1);
    let mut events = 0;
    let (mut prunes, mut evolutions) = (0, 0);
    for config in 0..5u64 {
        let max_size = rng.random_range(2..=8);
        let n_parent = rng.random_range(1..=max_size.min(3));
        let window = rng.random_range(1..=5);
        let preserve = rng.random_bool(0.5);
        let settings = EvolutionSettings {
            kind: ProposerKind::Mutation,
            population_size: max_size,
            n_parent,
            acceptance_ratio: rng.random_range(0.0..1.2),
            validation_size: 8,
            failures_per_prompt: 4,
            max_rounds: 2,
            candidates_per_call: 3,
            crn: true,
            preserve_parent_weights: preserve,
        };
        let mut pop = Population::new(max_size, n_parent, 0.2, window).unwrap();
        for _ in 0..max_size {
            pop.insert(SEED_INSTRUCTION, seed_features.clone(), 0, None).unwrap();
        }
        let mut shadow = Shadow { window, entries: Vec::new() };
        shadow.sync_from(&pop);

        for e in 0..100u64 {
            let at = format!("config {config} event {e}");
            for _ in 0..rng.random_range(0..12) {
                let ids: Vec<u64> = pop.candidates().iter().map(|c| c.id).collect();
                let id = ids[rng.random_range(0..ids.len())];
                let r = rewards[rng.random_range(0..rewards.len())];
                pop.record_step_reward(id, r).unwrap();
                shadow.push(id, r);
            }
            check_windows(&pop, &shadow, &at)?;
            let ranked = shadow.ranked();
            ensure(pop.best_instruction().unwrap() == ranked[0], || format!("{at}: best differs from oracle"))?;
            ensure(pop.top(n_parent) == ranked[..n_parent.min(ranked.len())], || format!("{at}: top differs from oracle"))?;

            if rng.random_bool(0.5) {
                let len = pop.len();
                let count = (len / 2).min(len.saturating_sub(n_parent));
                let expected: BTreeSet<u64> = ranked[len - count..].iter().copied().collect();
                let removed: BTreeSet<u64> = pop.prune().into_iter().collect();
                ensure(removed == expected, || format!("{at}: pruned {removed:?}, oracle {expected:?}"))?;
                shadow.entries.retain(|(i, _)| !removed.contains(i));
                ensure(pop.len() >= n_parent && pop.len() <= max_size, || format!("{at}: size {} after prune", pop.len()))?;
                check_windows(&pop, &shadow, &at)?;
                prunes += 1;
            } else {
                let parents: Vec<u64> = ranked[..n_parent.min(ranked.len())].to_vec();
                let max_old = pop.next_id();
                let mut ctx = EvolutionContext {
                    env: &env,
                    params: &params,
                    buffer: &buffer,
                    templates: &templates,
                    generator: None,
                    history: &[],
                    step: config * 1000 + e,
                    proposer_seed: 17,
                    verification_seed: 23,
                };
                let report = evolve_population(&mut pop, &mut ctx, &settings).map_err(|err| format!("{at}: {err}"))?;
                ensure(report.parents == parents, || format!("{at}: parents {:?}, oracle {parents:?}", report.parents))?;
                ensure(pop.len() == max_size, || format!("{at}: size {} after evolve", pop.len()))?;
                for c in pop.candidates() {
                    let is_parent = parents.contains(&c.id);
                    ensure(is_parent || c.id >= max_old, || format!("{at}: non-parent {} survived evolve", c.id))?;
                }
                ensure(parents.iter().all(|p| pop.get(*p).is_ok()), || format!("{at}: a parent was dropped"))?;
                shadow.entries.retain(|(i, _)| parents.contains(i));
                if !preserve {
                    shadow.entries.iter_mut().for_each(|(_, w)| w.clear());
                }
                for c in pop.candidates().iter().filter(|c| c.id >= max_old) {
                    shadow.entries.push((c.id, Vec::new()));
                }
                check_windows(&pop, &shadow, &at)?;
                evolutions += 1;
            }
            events += 1;
        }
    }
    Ok(format!("{events} events ({prunes} prunes, {evolutions} evolutions) matched the recompute oracle"))
}

// ---------------------------------------------------------------- criterion 5

fn final_quartiles(config: RunConfig) -> Result<(f64, f64), String> {
    let mut trainer = Trainer::new(config).map_err(|e| e.to_string())?;
    trainer.run(None).map_err(|e| e.to_string())?;
    let m = &trainer.state().metrics;
    Ok((
        final_quartile_mean(m, "mean_reward").map_err(|e| e.to_string())?,
        final_quartile_mean(m, "mean_tool_calls").map_err(|e| e.to_string())?,
    ))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut diffs = Vec::new();
    let (mut evo_calls, mut static_calls) = (0.0, 0.0);
    let mut rewards = Vec::new();
    for seed in 0..5 {
        let base = RunConfig { seed, proposer: ProposerKind::Mutation, ..RunConfig::default() };
        let (r_evo, t_evo) = final_quartiles(base.clone())?;
        let (r_static, t_static) = final_quartiles(RunConfig { co_evolve: false, ..base })?;
        diffs.push(r_evo - r_static);
        rewards.push((r_evo, r_static));
        evo_calls += t_evo / 5.0;
        static_calls += t_static / 5.0;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let p = 1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t);
    let pairs: Vec<String> = rewards.iter().map(|(a, b)| format!("{a:.3}/{b:.3}")).collect();
    let detail = format!(
        "final-quartile reward co-evolve/static {}; paired t = {t:.2}, p = {p:.2e}; tool calls {evo_calls:.2} vs {static_calls:.2}; {:.1?}",
        pairs.join(" "),
        start.elapsed()
    );
    ensure(p < 0.05, || format!("not significant: {detail}"))?;
    ensure(evo_calls > static_calls, || format!("tool calls not higher: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = RunConfig { scripted_generator: true, ..RunConfig::default() };
    let kinds = [ProposerKind::Paraphrase, ProposerKind::History, ProposerKind::Reflection];
    let seeds: Vec<u64> = (0..5).collect();
    let rows = ablate(&base, &kinds, &seeds, Some(dir.path())).map_err(|e| e.to_string())?;
    let csv_path = dir.path().join("ablation.csv");
    write_ablation_csv(&rows, std::fs::File::create(&csv_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let csv = std::fs::read_to_string(&csv_path).map_err(|e| e.to_string())?;
    ensure(csv.lines().count() == 1 + kinds.len() * seeds.len(), || format!("CSV has {} lines", csv.lines().count()))?;
    for kind in kinds {
        for seed in &seeds {
            let d = dir.path().join(kind.as_str()).join(format!("seed_{seed}"));
            ensure(d.join("metrics.jsonl").is_file(), || format!("missing metrics for {kind} seed {seed}"))?;
        }
    }
    let mean = |k: ProposerKind| {
        let v: Vec<f64> = rows.iter().filter(|r| r.proposer == k).map(|r| r.final_quartile_reward).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (para, hist, refl) = (mean(kinds[0]), mean(kinds[1]), mean(kinds[2]));
    let detail = format!("mean final-quartile reward paraphrase {para:.3}, history {hist:.3}, reflection {refl:.3}");
    ensure(refl > para, || detail.clone())?;
    Ok(format!("{detail}; CSV with {} rows", rows.len()))
}

// ---------------------------------------------------------------- criterion 7

fn smoke_config() -> RunConfig {
    RunConfig {
        steps: 20,
        prune_period: 5,
        evolve_period: 10,
        evolve_until: 10,
        batch_size: 4,
        seed: 7,
        proposer: ProposerKind::Mutation,
        ..RunConfig::default()
    }
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>, String> {
    std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))
}

fn criterion_7() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b, c) = (root.path().join("a"), root.path().join("b"), root.path().join("c"));
    for dir in [&a, &b] {
        Trainer::new(smoke_config()).and_then(|mut t| t.run(Some(dir))).map_err(|e| e.to_string())?;
    }
    let files = ["metrics.jsonl", "population.json", "policy.bin", "buffer.jsonl"];
    for f in files {
        ensure(read(&a, f)? == read(&b, f)?, || format!("{f} differs between identical runs"))?;
    }

    let mut first = Trainer::new(smoke_config()).map_err(|e| e.to_string())?;
    first.run_to(10).map_err(|e| e.to_string())?;
    first.save_checkpoint(&c).map_err(|e| e.to_string())?;
    drop(first);
    let mut resumed = Trainer::resume(&c).map_err(|e| e.to_string())?;
    ensure(resumed.state().step == 10, || format!("resumed at step {}", resumed.state().step))?;
    resumed.run(Some(&c)).map_err(|e| e.to_string())?;
    for f in files {
        ensure(read(&a, f)? == read(&c, f)?, || format!("{f} differs after resume at step 10"))?;
    }
    Ok(format!("{} byte-identical across reruns and after resume at step 10", files.join(", ")))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let raw = std::fs::read_to_string(fixtures.join("reflection_response.txt")).map_err(|e| e.to_string())?;
    let cands = parse_candidates(&raw).map_err(|e| e.to_string())?;
    let pos = cands
        .iter()
        .position(|c| c.starts_with("You must follow these steps"))
        .ok_or_else(|| format!("no candidate starts with the expected text among {}", cands.len()))?;
    let evolved = std::fs::read_to_string(fixtures.join("evolved_instruction.txt")).map_err(|e| e.to_string())?;
    let seed_flags = flag_count(&instruction_features_from_text(SEED_INSTRUCTION));
    let evolved_flags = flag_count(&instruction_features_from_text(&evolved));
    ensure(evolved_flags > seed_flags, || format!("evolved {evolved_flags} flags vs seed {seed_flags}"))?;
    Ok(format!(
        "{} candidate(s) parsed, match at index {pos}; keyword flags evolved {evolved_flags} > seed {seed_flags}",
        cands.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("surrogate gradients and advantages", criterion_1),
        ("selection probabilities and sampling", criterion_2),
        ("default schedule and call accounting", criterion_3),
        ("population invariants under fuzzing", criterion_4),
        ("co-evolution beats static instruction", criterion_5),
        ("proposer ablation harness", criterion_6),
        ("determinism and resume", criterion_7),
        ("instruction text fixtures", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        match run() {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
