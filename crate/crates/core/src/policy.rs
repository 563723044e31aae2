//! Featurized softmax policy and the masked group-relative surrogate.
//!
//! `logit(a) = theta_a . [state ⊕ instruction ⊕ 1]`, one weight block per
//! action. The surrogate follows the clipped-ratio form with a per-point
//! closed-form KL penalty against the frozen reference parameters; points
//! that come from the environment (`is_agent == false`) are masked out and
//! the sum over agent points is normalized by their count.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};

/// Smallest old-policy probability used as a ratio denominator.
pub const RATIO_FLOOR: f64 = 1e-30;

const CHECKPOINT_MAGIC: &[u8; 4] = b"CEVP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyLayout {
    pub state_dim: usize,
    pub instruction_dim: usize,
    pub num_actions: usize,
}

impl PolicyLayout {
    /// Width of one action block: state, instruction and a bias entry.
    pub fn input_dim(&self) -> usize {
        self.state_dim + self.instruction_dim + 1
    }

    pub fn param_count(&self) -> usize {
        self.num_actions * self.input_dim()
    }

    /// Offset of `(action, input)` in the flat parameter vector.
    pub fn index(&self, action: usize, input: usize) -> usize {
        action * self.input_dim() + input
    }

    pub fn bias_index(&self, action: usize) -> usize {
        self.index(action, self.input_dim() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSet {
    Current,
    Old,
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    layout: PolicyLayout,
    theta: Vec<f64>,
    theta_old: Vec<f64>,
    theta_ref: Vec<f64>,
}

/// One decision in a trajectory. Observation points carry features but no
/// action likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub state_features: Vec<f64>,
    pub instruction_features: Vec<f64>,
    pub action: usize,
    pub is_agent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRollout {
    pub trajectories: Vec<Vec<DecisionPoint>>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GroupRollout {
    pub fn new(trajectories: Vec<Vec<DecisionPoint>>, rewards: Vec<f64>) -> Result<Self> {
        if trajectories.len() != rewards.len() {
            return Err(structural(format!(
                "{} trajectories but {} rewards",
                trajectories.len(),
                rewards.len()
            )));
        }
        let advantages = compute_advantages(&rewards)?;
        Ok(Self { trajectories, rewards, advantages })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    /// The old-policy probability was floored at `RATIO_FLOOR`.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub ratio_clamps: usize,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

impl PolicyParams {
    pub fn zeros(layout: PolicyLayout) -> Self {
        Self::new(layout, vec![0.0; layout.param_count()]).expect("zero vector has layout size")
    }

    /// Current, old and reference parameters all start at `theta`.
    pub fn new(layout: PolicyLayout, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != layout.param_count() {
            return Err(structural(format!(
                "expected {} parameters, got {}",
                layout.param_count(),
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("non-finite initial parameter".into()));
        }
        Ok(Self {
            layout,
            theta_old: theta.clone(),
            theta_ref: theta.clone(),
            theta,
        })
    }

    pub fn layout(&self) -> PolicyLayout {
        self.layout
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_ref(&self) -> &[f64] {
        &self.theta_ref
    }

    pub fn theta_old(&self) -> &[f64] {
        &self.theta_old
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(structural("parameter length mismatch"));
        }
        self.theta = theta;
        Ok(())
    }

    pub fn set_theta_old(&mut self, theta_old: Vec<f64>) -> Result<()> {
        if theta_old.len() != self.theta.len() {
            return Err(structural("parameter length mismatch"));
        }
        self.theta_old = theta_old;
        Ok(())
    }

    /// Snapshot the current parameters as the rollout policy.
    pub fn refresh_old(&mut self) {
        self.theta_old.clone_from(&self.theta);
    }

    fn params(&self, which: ParamSet) -> &[f64] {
        match which {
            ParamSet::Current => &self.theta,
            ParamSet::Old => &self.theta_old,
            ParamSet::Reference => &self.theta_ref,
        }
    }

    fn input(&self, state: &[f64], instruction: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.layout.state_dim || instruction.len() != self.layout.instruction_dim {
            return Err(structural(format!(
                "features ({}, {}) do not match layout ({}, {})",
                state.len(),
                instruction.len(),
                self.layout.state_dim,
                self.layout.instruction_dim
            )));
        }
        let mut x = Vec::with_capacity(self.layout.input_dim());
        x.extend_from_slice(state);
        x.extend_from_slice(instruction);
        x.push(1.0);
        Ok(x)
    }

    fn logits_for(&self, which: ParamSet, x: &[f64]) -> Vec<f64> {
        let d = self.layout.input_dim();
        self.params(which)
            .chunks_exact(d)
            .map(|block| block.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    pub fn action_logits(&self, which: ParamSet, state: &[f64], instruction: &[f64]) -> Result<Vec<f64>> {
        let x = self.input(state, instruction)?;
        Ok(self.logits_for(which, &x))
    }

    pub fn action_probs(&self, which: ParamSet, state: &[f64], instruction: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.action_logits(which, state, instruction)?))
    }

    /// Plain gradient descent. `theta_old` is left alone.
    pub fn apply_update(&mut self, grad: &[f64], learning_rate: f64) -> Result<()> {
        if grad.len() != self.theta.len() {
            return Err(structural("gradient length mismatch"));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient entry at index {i}")));
        }
        for (t, g) in self.theta.iter_mut().zip(grad) {
            *t -= learning_rate * g;
        }
        Ok(())
    }

    /// Binary checkpoint: magic, version, P, F, |A|, state dim, then
    /// little-endian f64 for theta and theta_ref.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for n in [
            self.layout.param_count(),
            self.layout.instruction_dim,
            self.layout.num_actions,
            self.layout.state_dim,
        ] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in self.theta.iter().chain(&self.theta_ref) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("policy file has wrong magic bytes".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported policy format version {version}")));
        }
        let mut read_u64 = || -> Result<usize> {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8) as usize)
        };
        let p = read_u64()?;
        let f = read_u64()?;
        let a = read_u64()?;
        let s = read_u64()?;
        let layout = PolicyLayout { state_dim: s, instruction_dim: f, num_actions: a };
        if layout.param_count() != p {
            return Err(Error::Checkpoint(format!("header P={p} inconsistent with layout")));
        }
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut b8 = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b8)?;
                out.push(f64::from_le_bytes(b8));
            }
            Ok(out)
        };
        let theta = read_vec(p)?;
        let theta_ref = read_vec(p)?;
        Ok(Self {
            layout,
            theta_old: theta.clone(),
            theta,
            theta_ref,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Group-normalized advantages with population std; a degenerate group
/// (std < 1e-8) gets all-zero advantages.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(structural(format!("group needs at least 2 rewards, got {}", rewards.len())));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

pub fn importance_ratio(point: &DecisionPoint, params: &PolicyParams) -> Result<Ratio> {
    if !point.is_agent {
        return Err(structural("importance ratio requested for an observation point"));
    }
    let x = params.input(&point.state_features, &point.instruction_features)?;
    check_action(point.action, params.layout)?;
    let cur = log_softmax(&params.logits_for(ParamSet::Current, &x))[point.action];
    let old = log_softmax(&params.logits_for(ParamSet::Old, &x))[point.action];
    Ok(ratio_from_logs(cur, old))
}

fn ratio_from_logs(log_cur: f64, log_old: f64) -> Ratio {
    let floor = RATIO_FLOOR.ln();
    if log_old < floor {
        log::warn!("old-policy probability below {RATIO_FLOOR:e}; ratio denominator clamped");
        Ratio { value: (log_cur - floor).exp(), clamped: true }
    } else {
        Ratio { value: (log_cur - log_old).exp(), clamped: false }
    }
}

/// Closed-form `KL(pi_theta || pi_ref)` over the action set at this point.
pub fn kl_penalty(point: &DecisionPoint, params: &PolicyParams) -> Result<f64> {
    if !point.is_agent {
        return Err(structural("KL penalty requested for an observation point"));
    }
    let x = params.input(&point.state_features, &point.instruction_features)?;
    let lp = log_softmax(&params.logits_for(ParamSet::Current, &x));
    let lr = log_softmax(&params.logits_for(ParamSet::Reference, &x));
    Ok(kl_from_logs(&lp, &lr))
}

fn kl_from_logs(lp: &[f64], lr: &[f64]) -> f64 {
    lp.iter().zip(lr).map(|(p, r)| p.exp() * (p - r)).sum::<f64>()
}

fn check_action(action: usize, layout: PolicyLayout) -> Result<()> {
    if action >= layout.num_actions {
        return Err(structural(format!(
            "action {action} outside action set of size {}",
            layout.num_actions
        )));
    }
    Ok(())
}

/// Negated masked clipped objective for one group, with its analytic gradient.
pub fn surrogate_loss(
    group: &GroupRollout,
    params: &PolicyParams,
    clip_eps: f64,
    kl_coef: f64,
) -> Result<SurrogateOutput> {
    let g = group.trajectories.len();
    if g == 0 || group.advantages.len() != g {
        return Err(structural("group advantages do not match its trajectories"));
    }
    let layout = params.layout;
    let d = layout.input_dim();
    let mut objective = 0.0;
    let mut grad_obj = vec![0.0; layout.param_count()];
    let mut kl_total = 0.0;
    let mut agent_total = 0usize;
    let mut clipped = 0usize;
    let mut clamps = 0usize;

    for (i, (traj, &adv)) in group.trajectories.iter().zip(&group.advantages).enumerate() {
        let agent_points = traj.iter().filter(|p| p.is_agent).count();
        if agent_points == 0 {
            return Err(structural(format!("trajectory {i} has no agent decision points")));
        }
        let norm = 1.0 / agent_points as f64;
        let mut traj_obj = 0.0;
        let mut traj_grad = vec![0.0; layout.param_count()];
        for point in traj.iter().filter(|p| p.is_agent) {
            check_action(point.action, layout)?;
            let x = params.input(&point.state_features, &point.instruction_features)?;
            let lp = log_softmax(&params.logits_for(ParamSet::Current, &x));
            let lo = log_softmax(&params.logits_for(ParamSet::Old, &x));
            let lr = log_softmax(&params.logits_for(ParamSet::Reference, &x));
            let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();

            let ratio = ratio_from_logs(lp[point.action], lo[point.action]);
            clamps += usize::from(ratio.clamped);
            let rho = ratio.value;
            let unclipped = rho * adv;
            let clipped_val = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
            // dL/dlogit_b for the policy term
            let mut dlogit = vec![0.0; layout.num_actions];
            if unclipped <= clipped_val {
                traj_obj += unclipped;
                for (b, dl) in dlogit.iter_mut().enumerate() {
                    let indicator = if b == point.action { 1.0 } else { 0.0 };
                    *dl += adv * rho * (indicator - probs[b]);
                }
            } else {
                traj_obj += clipped_val;
                clipped += 1;
            }

            let kl = kl_from_logs(&lp, &lr);
            kl_total += kl;
            traj_obj -= kl_coef * kl;
            for (b, dl) in dlogit.iter_mut().enumerate() {
                *dl -= kl_coef * probs[b] * (lp[b] - lr[b] - kl);
            }

            for (b, dl) in dlogit.iter().enumerate() {
                if *dl == 0.0 {
                    continue;
                }
                let block = &mut traj_grad[b * d..(b + 1) * d];
                for (gv, xv) in block.iter_mut().zip(&x) {
                    *gv += dl * xv;
                }
            }
            agent_total += 1;
        }
        objective += traj_obj * norm;
        for (acc, v) in grad_obj.iter_mut().zip(&traj_grad) {
            *acc += v * norm;
        }
    }

    let scale = 1.0 / g as f64;
    Ok(SurrogateOutput {
        loss: -objective * scale,
        grad: grad_obj.into_iter().map(|v| -v * scale).collect(),
        mean_kl: kl_total / agent_total as f64,
        clip_fraction: clipped as f64 / agent_total as f64,
        ratio_clamps: clamps,
    })
}

/// Mean of per-group surrogates, reduced in slice order.
pub fn batch_surrogate_loss(
    groups: &[GroupRollout],
    params: &PolicyParams,
    clip_eps: f64,
    kl_coef: f64,
) -> Result<SurrogateOutput> {
    if groups.is_empty() {
        return Err(structural("empty batch"));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.layout.param_count()];
    let mut kl = 0.0;
    let mut clip = 0.0;
    let mut clamps = 0;
    for group in groups {
        let out = surrogate_loss(group, params, clip_eps, kl_coef)?;
        loss += out.loss;
        for (a, b) in grad.iter_mut().zip(&out.grad) {
            *a += b;
        }
        kl += out.mean_kl;
        clip += out.clip_fraction;
        clamps += out.ratio_clamps;
    }
    let n = groups.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(SurrogateOutput {
        loss: loss / n,
        grad,
        mean_kl: kl / n,
        clip_fraction: clip / n,
        ratio_clamps: clamps,
    })
}
