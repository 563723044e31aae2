//! Browser bindings: tempered selection probabilities, the clipped surrogate
//! as a function of the importance ratio, and a small co-evolution run
//! against a fixed-instruction control.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use coevo_core::orchestrator::{RunConfig, Trainer};
use coevo_core::policy::{surrogate_loss, DecisionPoint, GroupRollout, PolicyLayout, PolicyParams};
use coevo_core::population::softmax_with_temperature;
use coevo_core::proposer::ProposerKind;

/// Selection probabilities for `weights` at `temperature`.
pub fn selection_curve(weights: &[f64], temperature: f64) -> Result<Vec<f64>, String> {
    softmax_with_temperature(weights, temperature).map_err(|e| e.to_string())
}

/// Per-point clipped objective at `points` ratios spread over (0, 2), evaluated
/// by the training loss on a two-action policy whose old probability is 1/2.
pub fn surrogate_curve(advantage: f64, clip_eps: f64, points: usize) -> Result<Vec<(f64, f64)>, String> {
    let layout = PolicyLayout { state_dim: 0, instruction_dim: 0, num_actions: 2 };
    let point = DecisionPoint { state_features: vec![], instruction_features: vec![], action: 0, is_agent: true };
    let group = GroupRollout { trajectories: vec![vec![point]], rewards: vec![0.0], advantages: vec![advantage] };
    let mut params = PolicyParams::zeros(layout);
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let ratio = 0.02 + 1.96 * i as f64 / (n - 1) as f64;
            // pi(a0) = sigmoid(b) and the old policy is uniform, so ratio = 2 sigmoid(b)
            let p = ratio / 2.0;
            params.set_theta(vec![(p / (1.0 - p)).ln(), 0.0]).map_err(|e| e.to_string())?;
            let out = surrogate_loss(&group, &params, clip_eps, 0.0).map_err(|e| e.to_string())?;
            Ok((ratio, -out.loss))
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub steps: Vec<u64>,
    pub coevolve_reward: Vec<f64>,
    pub static_reward: Vec<f64>,
    pub coevolve_tool_calls: Vec<f64>,
    pub static_tool_calls: Vec<f64>,
    pub best_instruction: String,
}

fn demo_config(seed: u64, steps: u64) -> RunConfig {
    RunConfig {
        seed,
        steps,
        evolve_until: steps / 2,
        batch_size: 8,
        validation_size: 50,
        proposer: ProposerKind::Mutation,
        ..RunConfig::default()
    }
}

/// Train the co-evolving and the static arm side by side on the toy dataset.
pub fn compare(seed: u64, steps: u64) -> Result<Comparison, String> {
    let run = |co_evolve: bool| -> Result<Trainer, String> {
        let mut t = Trainer::new(RunConfig { co_evolve, ..demo_config(seed, steps) }).map_err(|e| e.to_string())?;
        t.run(None).map_err(|e| e.to_string())?;
        Ok(t)
    };
    let evo = run(true)?;
    let fixed = run(false)?;
    let (a, b) = (&evo.state().metrics, &fixed.state().metrics);
    Ok(Comparison {
        steps: a.iter().map(|m| m.step).collect(),
        coevolve_reward: a.iter().map(|m| m.mean_reward).collect(),
        static_reward: b.iter().map(|m| m.mean_reward).collect(),
        coevolve_tool_calls: a.iter().map(|m| m.mean_tool_calls).collect(),
        static_tool_calls: b.iter().map(|m| m.mean_tool_calls).collect(),
        best_instruction: evo.best_instruction().map_err(|e| e.to_string())?.text.clone(),
    })
}

#[wasm_bindgen(js_name = selectionProbabilities)]
pub fn selection_probabilities(weights: Vec<f64>, temperature: f64) -> Result<Vec<f64>, JsError> {
    selection_curve(&weights, temperature).map_err(|e| JsError::new(&e))
}

/// Flat `[ratio0, objective0, ratio1, objective1, ...]`.
#[wasm_bindgen(js_name = clippedObjective)]
pub fn clipped_objective(advantage: f64, clip_eps: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let curve = surrogate_curve(advantage, clip_eps, points).map_err(|e| JsError::new(&e))?;
    Ok(curve.into_iter().flat_map(|(r, v)| [r, v]).collect())
}

/// JSON-encoded [`Comparison`].
#[wasm_bindgen(js_name = compareRuns)]
pub fn compare_runs(seed: u32, steps: u32) -> Result<String, JsError> {
    let c = compare(u64::from(seed), u64::from(steps)).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&c).map_err(|e| JsError::new(&e.to_string()))
}
