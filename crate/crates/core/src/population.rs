//! Dynamic instruction population.
//!
//! Each candidate carries an importance weight equal to the moving average of
//! the group-mean rewards it earned over its last `window` sampled steps.
//! Candidates are drawn by a tempered softmax over those weights and the pool
//! is periodically halved, keeping the best-weighted members.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::INSTRUCTION_DIM;
use crate::error::{structural, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionCandidate {
    pub id: u64,
    pub text: String,
    pub features: Vec<f64>,
    pub weight: f64,
    pub reward_window: VecDeque<f64>,
    pub birth_step: u64,
    pub parent_id: Option<u64>,
}

impl InstructionCandidate {
    fn window_mean(&self) -> f64 {
        if self.reward_window.is_empty() {
            0.0
        } else {
            self.reward_window.iter().sum::<f64>() / self.reward_window.len() as f64
        }
    }

    fn reset(&mut self) {
        self.reward_window.clear();
        self.weight = 0.0;
    }
}

/// Tempered softmax `exp(w_j / t) / sum_k exp(w_k / t)`, max-shifted.
pub fn softmax_with_temperature(weights: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(structural("softmax over an empty weight vector"));
    }
    if temperature.is_nan() || temperature <= 0.0 || temperature.is_infinite() {
        return Err(structural(format!("temperature must be positive, got {temperature}")));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("non-finite importance weight".into()));
    }
    let scaled: Vec<f64> = weights.iter().map(|w| w / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Index ordering by weight descending, ties to the lower id.
fn rank_order(candidates: &[InstructionCandidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        cb.weight.total_cmp(&ca.weight).then(ca.id.cmp(&cb.id))
    });
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    candidates: Vec<InstructionCandidate>,
    max_size: usize,
    n_parent: usize,
    temperature: f64,
    window: usize,
    next_id: u64,
}

impl Population {
    pub fn new(max_size: usize, n_parent: usize, temperature: f64, window: usize) -> Result<Self> {
        if max_size == 0 {
            return Err(structural("population max size must be at least 1"));
        }
        if n_parent == 0 || n_parent > max_size {
            return Err(structural(format!(
                "parent count {n_parent} must be in 1..={max_size}"
            )));
        }
        if temperature.is_nan() || temperature <= 0.0 || temperature.is_infinite() {
            return Err(structural("selection temperature must be positive"));
        }
        if window == 0 {
            return Err(structural("reward window must hold at least one step"));
        }
        Ok(Self {
            candidates: Vec::new(),
            max_size,
            n_parent,
            temperature,
            window,
            next_id: 0,
        })
    }

    /// Rebuild from a JSON snapshot (array of candidates).
    pub fn from_snapshot(
        candidates: Vec<InstructionCandidate>,
        max_size: usize,
        n_parent: usize,
        temperature: f64,
        window: usize,
        next_id: u64,
    ) -> Result<Self> {
        let mut pop = Self::new(max_size, n_parent, temperature, window)?;
        if candidates.is_empty() || candidates.len() > max_size {
            return Err(structural(format!(
                "snapshot holds {} candidates, expected 1..={max_size}",
                candidates.len()
            )));
        }
        for c in &candidates {
            check_features(&c.features)?;
            if c.reward_window.len() > window {
                return Err(structural(format!("candidate {} window exceeds {window}", c.id)));
            }
            if c.id >= next_id {
                return Err(structural(format!("candidate id {} not below next id {next_id}", c.id)));
            }
        }
        let mut ids: Vec<u64> = candidates.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != candidates.len() {
            return Err(structural("duplicate candidate ids in snapshot"));
        }
        pop.candidates = candidates;
        pop.next_id = next_id;
        Ok(pop)
    }

    pub fn candidates(&self) -> &[InstructionCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn n_parent(&self) -> usize {
        self.n_parent
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn get(&self, id: u64) -> Result<&InstructionCandidate> {
        self.candidates
            .iter()
            .find(|c| c.id == id)
            .ok_or(Error::UnknownCandidate(id))
    }

    fn get_mut(&mut self, id: u64) -> Result<&mut InstructionCandidate> {
        self.candidates
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or(Error::UnknownCandidate(id))
    }

    /// Add a new candidate with an empty window. Returns its id.
    pub fn insert(
        &mut self,
        text: impl Into<String>,
        features: Vec<f64>,
        birth_step: u64,
        parent_id: Option<u64>,
    ) -> Result<u64> {
        if self.candidates.len() >= self.max_size {
            return Err(structural(format!("population already holds {} candidates", self.max_size)));
        }
        check_features(&features)?;
        let id = self.next_id;
        self.next_id += 1;
        self.candidates.push(InstructionCandidate {
            id,
            text: text.into(),
            features,
            weight: 0.0,
            reward_window: VecDeque::with_capacity(self.window),
            birth_step,
            parent_id,
        });
        Ok(id)
    }

    pub fn selection_probabilities(&self) -> Result<Vec<f64>> {
        if self.candidates.is_empty() {
            return Err(structural("selection over an empty population"));
        }
        let weights: Vec<f64> = self.candidates.iter().map(|c| c.weight).collect();
        softmax_with_temperature(&weights, self.temperature)
    }

    /// Inverse-CDF draw over the candidate ordering.
    pub fn sample_instruction<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let probs = self.selection_probabilities()?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, p) in self.candidates.iter().zip(&probs) {
            acc += p;
            if u < acc {
                return Ok(c.id);
            }
        }
        // u landed in the rounding slack above the final cumulative sum.
        Ok(self.candidates.last().map(|c| c.id).expect("non-empty"))
    }

    /// Push one step's group-mean reward and refresh the weight.
    pub fn record_step_reward(&mut self, id: u64, mean_reward: f64) -> Result<()> {
        if !mean_reward.is_finite() {
            return Err(Error::Numeric(format!("non-finite mean reward for candidate {id}")));
        }
        let window = self.window;
        let cand = self.get_mut(id)?;
        if cand.reward_window.len() == window {
            cand.reward_window.pop_front();
        }
        cand.reward_window.push_back(mean_reward);
        cand.weight = cand.window_mean();
        Ok(())
    }

    /// Drop the bottom floor(len/2) candidates by weight, never going below
    /// `n_parent`. Returns the removed ids.
    pub fn prune(&mut self) -> Vec<u64> {
        let len = self.candidates.len();
        let removable = len.saturating_sub(self.n_parent);
        let count = (len / 2).min(removable);
        if count == 0 {
            return Vec::new();
        }
        let order = rank_order(&self.candidates);
        let doomed: Vec<u64> = order[len - count..]
            .iter()
            .map(|&i| self.candidates[i].id)
            .collect();
        self.candidates.retain(|c| !doomed.contains(&c.id));
        doomed
    }

    pub fn best_instruction(&self) -> Result<u64> {
        rank_order(&self.candidates)
            .first()
            .map(|&i| self.candidates[i].id)
            .ok_or_else(|| structural("best instruction of an empty population"))
    }

    /// Ids of the top `n` candidates by weight (ties to the lower id).
    pub fn top(&self, n: usize) -> Vec<u64> {
        rank_order(&self.candidates)
            .into_iter()
            .take(n)
            .map(|i| self.candidates[i].id)
            .collect()
    }

    /// Keep only the listed ids, in their existing order.
    pub fn retain_ids(&mut self, keep: &[u64]) {
        self.candidates.retain(|c| keep.contains(&c.id));
    }

    pub fn reset_weights(&mut self) {
        self.candidates.iter_mut().for_each(InstructionCandidate::reset);
    }

    /// Clear the windows of every candidate except those listed.
    pub fn reset_weights_except(&mut self, keep: &[u64]) {
        self.candidates
            .iter_mut()
            .filter(|c| !keep.contains(&c.id))
            .for_each(InstructionCandidate::reset);
    }
}

fn check_features(features: &[f64]) -> Result<()> {
    if features.len() != INSTRUCTION_DIM {
        return Err(structural(format!(
            "instruction features must have {INSTRUCTION_DIM} entries, got {}",
            features.len()
        )));
    }
    if features.iter().any(|f| !f.is_finite()) {
        return Err(Error::Numeric("non-finite instruction feature".into()));
    }
    Ok(())
}
