//! Paired-seed comparison of co-evolution against a static instruction.
//!
//! cargo run --release -p coevo-core --example compare -- [seeds] [steps] [learning_rate]

use std::time::Instant;

use coevo_core::metrics::final_quartile_mean;
use coevo_core::orchestrator::{RunConfig, Trainer};

fn main() -> coevo_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(RunConfig::default().learning_rate);
    println!("seed,arm,final_reward,final_tool_calls,best_instruction");
    for seed in 0..seeds {
        for co_evolve in [true, false] {
            let start = Instant::now();
            let config = RunConfig {
                seed,
                steps,
                evolve_until: steps / 2,
                co_evolve,
                learning_rate: lr,
                ..RunConfig::default()
            };
            let mut trainer = Trainer::new(config)?;
            let summary = trainer.run(None)?;
            let m = &trainer.state().metrics;
            println!(
                "{seed},{},{:.4},{:.3},{:?} ({:.1}s)",
                if co_evolve { "coevolve" } else { "static" },
                final_quartile_mean(m, "mean_reward")?,
                final_quartile_mean(m, "mean_tool_calls")?,
                summary.best_instruction.features,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
