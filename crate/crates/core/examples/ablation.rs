//! Proposer ablation with the scripted generator stub.
//!
//! cargo run --release -p coevo-core --example ablation -- [seeds]

use coevo_core::orchestrator::{ablate, write_ablation_csv, RunConfig};
use coevo_core::proposer::ProposerKind;

fn main() -> coevo_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds: Vec<u64> = (0..seeds).collect();
    let kinds = [ProposerKind::Paraphrase, ProposerKind::History, ProposerKind::Reflection];
    let rows = ablate(&RunConfig::default(), &kinds, &seeds, None)?;
    write_ablation_csv(&rows, std::io::stdout().lock())
}
