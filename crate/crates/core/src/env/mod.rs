//! Synthetic multi-hop lookup environment with a search tool.
//!
//! A question names a start entity and a chain of relations; answering a
//! depth-`d` question needs `d` sequential lookups. The agent picks from a
//! fixed set of action kinds, each resolved against the knowledge base:
//! search the next unresolved hop, search the whole question text at once,
//! or answer with the latest retrieved value, the distractor from the last
//! result, or a canned guess.

pub mod dataset;
pub mod lexicon;
pub mod prior;
pub mod rollout;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{structural, Result};
use crate::policy::{DecisionPoint, PolicyLayout};

pub use dataset::{generate_dataset, DepthCounts};
pub use lexicon::{instruction_features_from_text, SEED_INSTRUCTION};

/// Turn index, resolved fraction, last-hit flag, memory size, depth one-hot.
pub const STATE_DIM: usize = 7;
pub const KEYWORD_FLAGS: usize = 8;
pub const STRATEGY_KNOBS: usize = 4;
pub const INSTRUCTION_DIM: usize = KEYWORD_FLAGS + STRATEGY_KNOBS;
pub const NUM_ACTIONS: usize = 5;
pub const MAX_DEPTH: usize = 3;

pub const GUESSES: [&str; 4] = ["Beijing", "unknown", "James Buchanan", "1812"];

pub fn policy_layout() -> PolicyLayout {
    PolicyLayout {
        state_dim: STATE_DIM,
        instruction_dim: INSTRUCTION_DIM,
        num_actions: NUM_ACTIONS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    SearchNextHop,
    SearchWholeQuestion,
    AnswerLatest,
    AnswerDistractor,
    AnswerGuess,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::SearchNextHop,
        Action::SearchWholeQuestion,
        Action::AnswerLatest,
        Action::AnswerDistractor,
        Action::AnswerGuess,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| structural(format!("no action with index {i}")))
    }

    pub fn is_search(self) -> bool {
        matches!(self, Action::SearchNextHop | Action::SearchWholeQuestion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub entity: String,
    pub relation: String,
    pub value: String,
}

impl Triple {
    fn render(&self) -> String {
        format!("({}, {}, {})", self.entity, self.relation, self.value)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    facts: BTreeMap<(String, String), String>,
}

impl KnowledgeBase {
    pub fn insert(&mut self, entity: &str, relation: &str, value: &str) -> Result<()> {
        let key = (entity.to_string(), relation.to_string());
        if self.facts.contains_key(&key) {
            return Err(structural(format!("duplicate fact key ({entity}, {relation})")));
        }
        self.facts.insert(key, value.to_string());
        Ok(())
    }

    pub fn lookup(&self, entity: &str, relation: &str) -> Option<&str> {
        self.facts
            .get(&(entity.to_string(), relation.to_string()))
            .map(String::as_str)
    }

    /// First fact about `entity` whose relation differs from `except`.
    pub fn related(&self, entity: &str, except: &str) -> Option<Triple> {
        let start = (entity.to_string(), String::new());
        self.facts
            .range(start..)
            .take_while(|((e, _), _)| e == entity)
            .find(|((_, r), _)| r != except)
            .map(|((e, r), v)| Triple { entity: e.clone(), relation: r.clone(), value: v.clone() })
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.facts.iter().map(|((e, r), v)| Triple {
            entity: e.clone(),
            relation: r.clone(),
            value: v.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub text: String,
    /// `(entity, relation)` for each hop, in lookup order.
    pub hops: Vec<(String, String)>,
    pub gold_answer: String,
}

impl Question {
    pub fn depth(&self) -> usize {
        self.hops.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub hit: bool,
    pub primary: Option<Triple>,
    pub distractor: Option<Triple>,
    /// State encoding right after the observation arrived.
    pub state_features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryItem {
    Agent { point: DecisionPoint, text: String },
    Observation(Observation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instruction_id: u64,
    pub question_id: u64,
    pub items: Vec<TrajectoryItem>,
    pub final_answer: Option<String>,
    pub turns_used: usize,
    pub reward: f64,
    pub terminal: bool,
}

impl Trajectory {
    pub fn tool_calls(&self) -> usize {
        self.items
            .iter()
            .filter(|item| match item {
                TrajectoryItem::Agent { point, .. } => {
                    Action::from_index(point.action).map(Action::is_search).unwrap_or(false)
                }
                TrajectoryItem::Observation(_) => false,
            })
            .count()
    }

    /// Agent points plus masked observation points, in trajectory order.
    pub fn decision_points(&self, instruction_features: &[f64]) -> Vec<DecisionPoint> {
        self.items
            .iter()
            .map(|item| match item {
                TrajectoryItem::Agent { point, .. } => point.clone(),
                TrajectoryItem::Observation(obs) => DecisionPoint {
                    state_features: obs.state_features.clone(),
                    instruction_features: instruction_features.to_vec(),
                    action: 0,
                    is_agent: false,
                },
            })
            .collect()
    }

    /// Text transcript of actions and tool results.
    pub fn render(&self) -> String {
        let mut parts: Vec<&str> = Vec::with_capacity(self.items.len() + 1);
        for item in &self.items {
            match item {
                TrajectoryItem::Agent { text, .. } => parts.push(text),
                TrajectoryItem::Observation(obs) => parts.push(&obs.text),
            }
        }
        let mut out = parts.join("\n");
        if self.final_answer.is_none() {
            out.push_str("\n(no answer before the turn limit)");
        }
        out
    }
}

/// Whitespace-collapsed, lower-cased form used by the exact-match check.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// 1 when the final answer matches the gold answer after normalization.
pub fn exact_match_reward(trajectory: &Trajectory, question: &Question) -> f64 {
    match &trajectory.final_answer {
        Some(ans) if normalize_answer(ans) == normalize_answer(&question.gold_answer) => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    kb: KnowledgeBase,
    questions: Vec<Question>,
    index: BTreeMap<u64, usize>,
    max_turns: usize,
}

impl Environment {
    pub fn new(kb: KnowledgeBase, questions: Vec<Question>, max_turns: usize) -> Result<Self> {
        if max_turns == 0 {
            return Err(structural("max_turns must be at least 1"));
        }
        let mut index = BTreeMap::new();
        for (i, q) in questions.iter().enumerate() {
            if q.hops.is_empty() || q.depth() > MAX_DEPTH {
                return Err(structural(format!("question {} has depth {}", q.id, q.depth())));
            }
            if index.insert(q.id, i).is_some() {
                return Err(structural(format!("duplicate question id {}", q.id)));
            }
        }
        Ok(Self { kb, questions, index, max_turns })
    }

    pub fn from_seed(seed: u64, counts: DepthCounts, max_turns: usize) -> Result<Self> {
        let (kb, questions) = generate_dataset(seed, counts)?;
        Self::new(kb, questions, max_turns)
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn max_turns(&self) -> usize {
        self.max_turns
    }

    pub fn question(&self, id: u64) -> Result<&Question> {
        self.index
            .get(&id)
            .map(|&i| &self.questions[i])
            .ok_or_else(|| structural(format!("unknown question id {id}")))
    }

    pub fn with_questions(&self, questions: Vec<Question>) -> Result<Self> {
        Self::new(self.kb.clone(), questions, self.max_turns)
    }

    pub fn start<'a>(&'a self, question: &'a Question, instruction_id: u64) -> Episode<'a> {
        Episode {
            env: self,
            question,
            resolved: 0,
            memory: Vec::new(),
            last_hit: false,
            last_distractor: None,
            trajectory: Trajectory {
                instruction_id,
                question_id: question.id,
                items: Vec::new(),
                final_answer: None,
                turns_used: 0,
                reward: 0.0,
                terminal: false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Observation(Observation),
    Terminal { reward: f64 },
}

/// A trajectory in progress.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    env: &'a Environment,
    question: &'a Question,
    resolved: usize,
    memory: Vec<String>,
    last_hit: bool,
    last_distractor: Option<String>,
    trajectory: Trajectory,
}

impl<'a> Episode<'a> {
    pub fn question(&self) -> &Question {
        self.question
    }

    pub fn is_terminal(&self) -> bool {
        self.trajectory.terminal
    }

    pub fn resolved_hops(&self) -> usize {
        self.resolved
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }

    pub fn state_features(&self) -> Vec<f64> {
        let max_turns = self.env.max_turns as f64;
        let depth = self.question.depth();
        let mut f = vec![0.0; STATE_DIM];
        f[0] = self.trajectory.turns_used as f64 / max_turns;
        f[1] = self.resolved as f64 / depth as f64;
        f[2] = if self.last_hit { 1.0 } else { 0.0 };
        f[3] = self.memory.len() as f64 / max_turns;
        f[3 + depth.min(MAX_DEPTH)] = 1.0;
        f
    }

    /// Apply one agent action. Every action consumes a turn; the episode
    /// force-terminates with no answer once `max_turns` is reached.
    pub fn step(&mut self, action: Action, instruction_features: &[f64]) -> Result<StepOutcome> {
        if self.trajectory.terminal {
            return Err(structural("step on a terminal trajectory"));
        }
        let point = DecisionPoint {
            state_features: self.state_features(),
            instruction_features: instruction_features.to_vec(),
            action: action.index(),
            is_agent: true,
        };
        self.trajectory.turns_used += 1;
        let q = self.question;
        match action {
            Action::SearchNextHop => {
                let (entity, relation) = match q.hops.get(self.resolved) {
                    Some((e, r)) => (e.clone(), r.clone()),
                    None => (q.gold_answer.clone(), q.hops[q.depth() - 1].1.clone()),
                };
                let text = format!("<search> {relation} of {entity} </search>");
                self.push_agent(point, text);
                let obs = self.search(&entity, &relation);
                Ok(self.after_search(obs))
            }
            Action::SearchWholeQuestion => {
                let text = format!("<search> {} </search>", q.text);
                self.push_agent(point, text);
                let (e0, r0) = q.hops[0].clone();
                let obs = if q.depth() == 1 {
                    self.search(&e0, &r0)
                } else {
                    // A query mirroring the whole question surfaces a fact
                    // about the start entity, but not the one needed.
                    let primary = self.env.kb.related(&e0, &r0);
                    let text = match &primary {
                        Some(t) => format!("<information> {} </information>", t.render()),
                        None => "<information> no result </information>".to_string(),
                    };
                    PendingObservation { text, hit: false, advance: false, primary, distractor: None }
                };
                Ok(self.after_search(obs))
            }
            Action::AnswerLatest | Action::AnswerDistractor | Action::AnswerGuess => {
                let answer = match action {
                    Action::AnswerLatest => self.memory.last().cloned().unwrap_or_default(),
                    Action::AnswerDistractor => self.last_distractor.clone().unwrap_or_default(),
                    _ => GUESSES[(q.id % GUESSES.len() as u64) as usize].to_string(),
                };
                self.push_agent(point, format!("<answer> {answer} </answer>"));
                self.trajectory.final_answer = Some(answer);
                self.trajectory.terminal = true;
                let reward = exact_match_reward(&self.trajectory, q);
                self.trajectory.reward = reward;
                Ok(StepOutcome::Terminal { reward })
            }
        }
    }

    fn push_agent(&mut self, point: DecisionPoint, text: String) {
        self.trajectory.items.push(TrajectoryItem::Agent { point, text });
    }

    fn search(&self, entity: &str, relation: &str) -> PendingObservation {
        match self.env.kb.lookup(entity, relation) {
            Some(value) => {
                let primary = Triple {
                    entity: entity.to_string(),
                    relation: relation.to_string(),
                    value: value.to_string(),
                };
                let distractor = self.env.kb.related(entity, relation);
                let mut text = format!("<information> {}", primary.render());
                if let Some(d) = &distractor {
                    text.push_str("; ");
                    text.push_str(&d.render());
                }
                text.push_str(" </information>");
                let advance = self
                    .question
                    .hops
                    .get(self.resolved)
                    .is_some_and(|(e, r)| e == entity && r == relation);
                PendingObservation { text, hit: true, advance, primary: Some(primary), distractor }
            }
            None => PendingObservation {
                text: "<information> no result </information>".to_string(),
                hit: false,
                advance: false,
                primary: None,
                distractor: None,
            },
        }
    }

    fn after_search(&mut self, pending: PendingObservation) -> StepOutcome {
        if pending.advance {
            self.resolved += 1;
        }
        if let Some(p) = &pending.primary {
            self.memory.push(p.value.clone());
        }
        self.last_hit = pending.hit;
        self.last_distractor = pending.distractor.as_ref().map(|d| d.value.clone());
        let obs = Observation {
            text: pending.text,
            hit: pending.hit,
            primary: pending.primary,
            distractor: pending.distractor,
            state_features: self.state_features(),
        };
        self.trajectory.items.push(TrajectoryItem::Observation(obs.clone()));
        if self.trajectory.turns_used >= self.env.max_turns {
            self.trajectory.terminal = true;
            self.trajectory.final_answer = None;
            self.trajectory.reward = 0.0;
            return StepOutcome::Terminal { reward: 0.0 };
        }
        StepOutcome::Observation(obs)
    }
}

struct PendingObservation {
    text: String,
    hit: bool,
    advance: bool,
    primary: Option<Triple>,
    distractor: Option<Triple>,
}
