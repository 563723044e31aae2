//! FIFO replay buffer of `(instruction, question, trajectory, reward)` records.

use std::collections::{HashSet, VecDeque};
use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{structural, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub instruction_id: u64,
    pub question_id: u64,
    pub trajectory: Trajectory,
    pub reward: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    records: VecDeque<ReplayRecord>,
    capacity: usize,
    failure_threshold: f64,
    recency_steps: u64,
}

impl ReplayBuffer {
    /// `recency_steps` is how many recent steps the failure search widens to
    /// before falling back to the whole buffer.
    pub fn new(capacity: usize, failure_threshold: f64, recency_steps: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(structural("replay capacity must be positive"));
        }
        Ok(Self {
            records: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            failure_threshold,
            recency_steps: recency_steps.max(1),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayRecord> {
        self.records.iter()
    }

    pub fn push(&mut self, record: ReplayRecord) {
        debug_assert!((0.0..=1.0).contains(&record.reward), "reward outside [0, 1]");
        debug_assert!(
            self.records.back().is_none_or(|last| last.step <= record.step),
            "replay steps must be non-decreasing"
        );
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    fn is_failure(&self, r: &ReplayRecord) -> bool {
        r.reward < self.failure_threshold
    }

    /// Uniformly sample up to `count` failures, preferring the latest step,
    /// then the last `recency_steps` steps, then the whole buffer.
    pub fn sample_failures<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<ReplayRecord> {
        let Some(latest) = self.records.back().map(|r| r.step) else {
            return Vec::new();
        };
        let tiers = [latest, latest.saturating_sub(self.recency_steps - 1), 0];
        let mut pool: Vec<&ReplayRecord> = Vec::new();
        for min_step in tiers {
            pool = self
                .records
                .iter()
                .filter(|r| r.step >= min_step && self.is_failure(r))
                .collect();
            if pool.len() >= count {
                break;
            }
        }
        if pool.len() <= count {
            pool.shuffle(rng);
            return pool.into_iter().cloned().collect();
        }
        index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect()
    }

    /// Up to `size` distinct question ids drawn uniformly from the buffer.
    pub fn validation_set<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<u64> {
        let mut seen = HashSet::new();
        // newest first, so the most recent occurrence fixes each id's position
        let distinct: Vec<u64> = self
            .records
            .iter()
            .rev()
            .filter(|r| seen.insert(r.question_id))
            .map(|r| r.question_id)
            .collect();
        if distinct.len() <= size {
            let mut all = distinct;
            all.shuffle(rng);
            return all;
        }
        index::sample(rng, distinct.len(), size)
            .into_iter()
            .map(|i| distinct[i])
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(
        reader: R,
        capacity: usize,
        failure_threshold: f64,
        recency_steps: u64,
    ) -> Result<Self> {
        let mut buf = Self::new(capacity, failure_threshold, recency_steps)?;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("replay line {}: {e}", n + 1)))?;
            buf.push(rec);
        }
        Ok(buf)
    }
}
