//! Run configuration: a single JSON document with defaults for every key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::DepthCounts;
use crate::error::{Error, Result};
use crate::proposer::generator::GeneratorConfig;
use crate::proposer::prompt::TemplatePaths;
use crate::proposer::{EvolutionSettings, ProposerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Seed of the generated knowledge base and questions.
    pub seed: u64,
    pub depth1: usize,
    pub depth2: usize,
    pub depth3: usize,
    /// Load questions (and the knowledge base) from JSONL instead of generating them.
    pub questions_file: Option<String>,
    pub kb_file: Option<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let counts = DepthCounts::default();
        Self {
            seed: 0,
            depth1: counts.depth1,
            depth2: counts.depth2,
            depth3: counts.depth3,
            questions_file: None,
            kb_file: None,
        }
    }
}

impl DatasetConfig {
    pub fn counts(&self) -> DepthCounts {
        DepthCounts { depth1: self.depth1, depth2: self.depth2, depth3: self.depth3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Total training steps `T`.
    pub steps: u64,
    /// Evolution horizon `T_e`; no pruning or evolution at or after it.
    pub evolve_until: u64,
    pub prune_period: u64,
    pub evolve_period: u64,
    pub group_size: usize,
    /// Questions per step.
    pub batch_size: usize,
    pub population_size: usize,
    pub n_parent: usize,
    pub selection_temperature: f64,
    /// Moving-average window for instruction weights, in steps.
    pub weight_window: usize,
    pub kl_coef: f64,
    pub clip_eps: f64,
    pub learning_rate: f64,
    /// Gradient steps per batch against the same old policy.
    pub inner_epochs: usize,
    pub max_turns: usize,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub proposer: ProposerKind,
    /// Answer generator prompts with the offline scripted stub.
    pub scripted_generator: bool,
    pub generator: Option<GeneratorConfig>,
    pub templates: TemplatePaths,
    pub acceptance_ratio: f64,
    pub validation_size: usize,
    pub failures_per_prompt: usize,
    pub max_rounds: usize,
    pub candidates_per_call: usize,
    pub buffer_capacity: usize,
    pub failure_threshold: f64,
    /// Steps the failure search looks back before using the whole buffer.
    pub failure_lookback: u64,
    /// `false` pins the population to the seed instruction (static control).
    pub co_evolve: bool,
    pub preserve_parent_weights: bool,
    /// Common random numbers across candidates during verification.
    pub crn: bool,
    /// Save a checkpoint every this many steps (0 disables).
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            evolve_until: 150,
            prune_period: 5,
            evolve_period: 15,
            group_size: 5,
            batch_size: 32,
            population_size: 7,
            n_parent: 1,
            selection_temperature: 0.2,
            weight_window: 5,
            kl_coef: 0.001,
            clip_eps: 0.2,
            learning_rate: 0.05,
            inner_epochs: 1,
            max_turns: 4,
            seed: 0,
            dataset: DatasetConfig::default(),
            proposer: ProposerKind::Mutation,
            scripted_generator: false,
            generator: None,
            templates: TemplatePaths::default(),
            acceptance_ratio: 1.0,
            validation_size: 200,
            failures_per_prompt: 4,
            max_rounds: 5,
            candidates_per_call: 6,
            buffer_capacity: 4096,
            failure_threshold: 0.5,
            failure_lookback: 5,
            co_evolve: true,
            preserve_parent_weights: false,
            crn: true,
            checkpoint_every: 0,
        }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

impl RunConfig {
    /// Parse a JSON config, reporting the key path of the first problem.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.evolve_until > self.steps {
            return Err(invalid("evolve_until", "must not exceed steps"));
        }
        for (name, v) in [
            ("prune_period", self.prune_period),
            ("evolve_period", self.evolve_period),
            ("failure_lookback", self.failure_lookback),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.group_size < 2 {
            return Err(invalid("group_size", "must be at least 2"));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("population_size", self.population_size),
            ("n_parent", self.n_parent),
            ("weight_window", self.weight_window),
            ("inner_epochs", self.inner_epochs),
            ("max_turns", self.max_turns),
            ("candidates_per_call", self.candidates_per_call),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.n_parent > self.population_size {
            return Err(invalid("n_parent", "must not exceed population_size"));
        }
        for (name, v) in [
            ("selection_temperature", self.selection_temperature),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be a positive finite number"));
            }
        }
        for (name, v) in [
            ("kl_coef", self.kl_coef),
            ("clip_eps", self.clip_eps),
            ("acceptance_ratio", self.acceptance_ratio),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be a non-negative finite number"));
            }
        }
        if !(0.0..=1.0).contains(&self.failure_threshold) {
            return Err(invalid("failure_threshold", "must lie in [0, 1]"));
        }
        if self.dataset.questions_file.is_some() != self.dataset.kb_file.is_some() {
            return Err(invalid("dataset", "questions_file and kb_file must be given together"));
        }
        if self.dataset.questions_file.is_none() && self.dataset.depth1 + self.dataset.depth2 + self.dataset.depth3 == 0 {
            return Err(invalid("dataset", "at least one question is required"));
        }
        if self.proposer.uses_generator() && self.generator.is_none() && !self.scripted_generator {
            return Err(invalid(
                "generator",
                format!("proposer `{}` needs a generator endpoint or scripted_generator = true", self.proposer),
            ));
        }
        if let Some(g) = &self.generator {
            if !(g.temperature.is_finite() && g.temperature >= 0.0) {
                return Err(invalid("generator.temperature", "must be a non-negative finite number"));
            }
        }
        Ok(())
    }

    /// Command-line overrides. A shorter `steps` also pulls the evolution
    /// horizon in so the result stays valid.
    pub fn apply_overrides(&mut self, seed: Option<u64>, proposer: Option<ProposerKind>, steps: Option<u64>) {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(kind) = proposer {
            self.proposer = kind;
        }
        if let Some(steps) = steps {
            self.steps = steps;
            if self.evolve_until > steps {
                log::warn!("evolve_until {} lowered to the overridden step count {steps}", self.evolve_until);
                self.evolve_until = steps;
            }
        }
    }

    pub fn evolution_settings(&self) -> EvolutionSettings {
        EvolutionSettings {
            kind: self.proposer,
            population_size: self.population_size,
            n_parent: self.n_parent,
            acceptance_ratio: self.acceptance_ratio,
            validation_size: self.validation_size,
            failures_per_prompt: self.failures_per_prompt,
            max_rounds: self.max_rounds,
            candidates_per_call: self.candidates_per_call,
            crn: self.crn,
            preserve_parent_weights: self.preserve_parent_weights,
        }
    }

    /// Whether pruning fires after step `t` (0-based), given the population size.
    pub fn prunes_at(&self, t: u64, population_len: usize) -> bool {
        self.co_evolve && t < self.evolve_until && t.is_multiple_of(self.prune_period) && population_len > self.n_parent
    }

    pub fn evolves_at(&self, t: u64) -> bool {
        self.co_evolve && t < self.evolve_until && t.is_multiple_of(self.evolve_period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = RunConfig::from_json(r#"{"dataset": {"depth4": 3}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert!(path.starts_with("dataset"), "{path}"),
            other => panic!("unexpected {other}"),
        }
        let err = RunConfig::from_json(r#"{"steps": "many"}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "steps"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let err = RunConfig::from_json(r#"{"steps": 10, "evolve_until": 20}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "evolve_until"));
        let err = RunConfig::from_json(r#"{"proposer": "reflection"}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "generator"));
        assert!(RunConfig::from_json(r#"{"proposer": "reflection", "scripted_generator": true}"#).is_ok());
        assert!(RunConfig::from_json(r#"{"group_size": 1}"#).is_err());
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.apply_overrides(Some(4), Some(ProposerKind::Paraphrase), Some(20));
        assert_eq!((c.seed, c.proposer, c.steps, c.evolve_until), (4, ProposerKind::Paraphrase, 20, 20));
        let mut d = RunConfig::default();
        d.apply_overrides(None, None, None);
        assert_eq!(d, RunConfig::default());
    }

    #[test]
    fn default_schedule() {
        let c = RunConfig::default();
        let evolutions: Vec<u64> = (0..c.steps).filter(|&t| c.evolves_at(t)).collect();
        assert_eq!(evolutions.len(), 10);
        assert_eq!(*evolutions.last().unwrap(), 135);
        assert!(!c.evolves_at(150));
        assert!(c.prunes_at(5, 7));
        assert!(!c.prunes_at(5, 1));
        assert!(!c.prunes_at(4, 7));
        assert!(!c.prunes_at(155, 7));
    }
}
