//! End-to-end training runs, checkpoints and the proposer ablation.

pub mod ablation;
pub mod config;
pub mod trainer;

pub use ablation::{ablate, write_ablation_csv, AblationRow};
pub use config::{DatasetConfig, RunConfig};
pub use trainer::{build_environment, build_generator, Counters, RunState, RunSummary, Trainer};
