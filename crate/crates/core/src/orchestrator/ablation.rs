//! Proposer ablation: one run per (proposer kind, seed), summarised in a CSV.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::trainer::Trainer;
use crate::env::lexicon::flag_count;
use crate::error::Result;
use crate::metrics::final_quartile_mean;
use crate::proposer::ProposerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub proposer: ProposerKind,
    pub seed: u64,
    pub final_quartile_reward: f64,
    pub final_quartile_tool_calls: f64,
    pub best_instruction_flags: usize,
    pub best_instruction_chars: usize,
}

/// Runs every kind on every seed. Generator-backed kinds use the scripted
/// stub unless the base config names an endpoint.
pub fn ablate(base: &RunConfig, kinds: &[ProposerKind], seeds: &[u64], out_dir: Option<&Path>) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(kinds.len() * seeds.len());
    for &kind in kinds {
        for &seed in seeds {
            let config = RunConfig {
                proposer: kind,
                seed,
                scripted_generator: base.scripted_generator || base.generator.is_none(),
                ..base.clone()
            };
            log::info!("ablation run: proposer {kind}, seed {seed}");
            let mut trainer = Trainer::new(config)?;
            let dir = out_dir.map(|d| d.join(kind.as_str()).join(format!("seed_{seed}")));
            let summary = trainer.run(dir.as_deref())?;
            let metrics = &trainer.state().metrics;
            rows.push(AblationRow {
                proposer: kind,
                seed,
                final_quartile_reward: final_quartile_mean(metrics, "mean_reward")?,
                final_quartile_tool_calls: final_quartile_mean(metrics, "mean_tool_calls")?,
                best_instruction_flags: flag_count(&summary.best_instruction.features),
                best_instruction_chars: summary.best_instruction.text.chars().count(),
            });
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "proposer,seed,final_quartile_reward,final_quartile_tool_calls,best_instruction_flags,best_instruction_chars"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.proposer,
            r.seed,
            r.final_quartile_reward,
            r.final_quartile_tool_calls,
            r.best_instruction_flags,
            r.best_instruction_chars
        )?;
    }
    Ok(())
}
