//! Initial (and reference) policy parameters.
//!
//! This stands in for a pretrained instruction-following model: with no
//! instruction signal it favours one broad search followed by answering with
//! whatever came back, and each keyword flag or strategy knob nudges the
//! action preferences the way the corresponding wording would.

use super::{policy_layout, Action, INSTRUCTION_DIM, KEYWORD_FLAGS, STATE_DIM};
use crate::policy::PolicyParams;

// state feature slots
const TURN: usize = 0;
const RESOLVED: usize = 1;
const LAST_HIT: usize = 2;
const MEMORY: usize = 3;

/// `(action, keyword or knob slot, weight)` entries of the instruction block.
const INSTRUCTION_EFFECTS: &[(Action, usize, f64)] = &[
    // step-by-step
    (Action::SearchNextHop, 0, 1.0),
    // individually
    (Action::SearchNextHop, 1, 0.75),
    (Action::SearchWholeQuestion, 1, -0.75),
    // never search for the entire question
    (Action::SearchWholeQuestion, 2, -1.5),
    // analyze the results
    (Action::AnswerDistractor, 3, -1.0),
    // verify
    (Action::AnswerGuess, 4, -1.0),
    (Action::AnswerDistractor, 4, -0.25),
    // format
    (Action::AnswerGuess, 5, -0.25),
    // search as many times
    (Action::SearchNextHop, 6, 0.5),
    // after each search
    (Action::AnswerLatest, 7, 0.25),
    // knobs
    (Action::SearchNextHop, KEYWORD_FLAGS, 1.0),
    (Action::SearchWholeQuestion, KEYWORD_FLAGS + 1, -1.0),
    (Action::AnswerGuess, KEYWORD_FLAGS + 2, -1.0),
    (Action::AnswerDistractor, KEYWORD_FLAGS + 2, -0.5),
];

/// `(action, state slot or bias, weight)`; `None` marks the bias entry.
const STATE_EFFECTS: &[(Action, Option<usize>, f64)] = &[
    (Action::SearchNextHop, None, 0.0),
    (Action::SearchNextHop, Some(RESOLVED), -3.0),
    (Action::SearchWholeQuestion, None, 1.5),
    (Action::SearchWholeQuestion, Some(MEMORY), -2.0),
    (Action::SearchWholeQuestion, Some(RESOLVED), -2.0),
    (Action::AnswerLatest, None, -2.0),
    (Action::AnswerLatest, Some(RESOLVED), 3.0),
    (Action::AnswerLatest, Some(LAST_HIT), 1.0),
    (Action::AnswerLatest, Some(MEMORY), 2.0),
    (Action::AnswerLatest, Some(TURN), 1.0),
    (Action::AnswerDistractor, None, -1.5),
    (Action::AnswerDistractor, Some(LAST_HIT), 0.5),
    (Action::AnswerGuess, None, -1.0),
    (Action::AnswerGuess, Some(TURN), 0.5),
];

pub fn prior_theta() -> Vec<f64> {
    let layout = policy_layout();
    let mut theta = vec![0.0; layout.param_count()];
    for &(action, slot, w) in STATE_EFFECTS {
        let idx = match slot {
            Some(s) => layout.index(action.index(), s),
            None => layout.bias_index(action.index()),
        };
        theta[idx] += w;
    }
    for &(action, slot, w) in INSTRUCTION_EFFECTS {
        debug_assert!(slot < INSTRUCTION_DIM);
        theta[layout.index(action.index(), STATE_DIM + slot)] += w;
    }
    theta
}

pub fn prior_params() -> PolicyParams {
    PolicyParams::new(policy_layout(), prior_theta()).expect("prior matches layout")
}
