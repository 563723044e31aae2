//! Co-evolution of an instruction population and a tool-using policy.
//!
//! A softmax policy over a synthetic multi-hop lookup environment is trained
//! with a group-relative clipped surrogate, while a small population of
//! natural-language instructions is sampled, scored by moving-average reward,
//! pruned by successive halving and periodically refreshed by a proposer.

pub mod env;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod orchestrator;
pub mod policy;
pub mod population;
pub mod proposer;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
