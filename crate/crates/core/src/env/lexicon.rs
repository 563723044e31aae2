//! Keyword lexicon bridging instruction text to policy features.
//!
//! The first `KEYWORD_FLAGS` feature entries are presence flags for fixed
//! phrases (case-insensitive substring match); the remaining
//! `STRATEGY_KNOBS` entries are continuous values in [-1, 1] with no textual
//! surface, set only by the mutation proposer or inherited from a parent.

use super::{INSTRUCTION_DIM, KEYWORD_FLAGS};

#[derive(Debug, Clone, Copy)]
pub struct Keyword {
    pub name: &'static str,
    /// Lower-case phrase whose presence sets the flag.
    pub phrase: &'static str,
    /// Sentence spliced into an instruction to turn the flag on.
    pub sentence: &'static str,
}

pub const KEYWORDS: [Keyword; KEYWORD_FLAGS] = [
    Keyword {
        name: "step_by_step",
        phrase: "step-by-step",
        sentence: "Create a step-by-step plan before acting.",
    },
    Keyword {
        name: "search_individually",
        phrase: "individually",
        sentence: "Look up each entity in the question individually.",
    },
    Keyword {
        name: "no_whole_question_search",
        phrase: "never search for the entire question",
        sentence: "Never search for the entire question.",
    },
    Keyword {
        name: "analyze_results",
        phrase: "analyze the results",
        sentence: "Read the returned documents and analyze the results before continuing.",
    },
    Keyword {
        name: "verify",
        phrase: "verif",
        sentence: "Verify every fact before you answer.",
    },
    Keyword {
        name: "answer_format",
        phrase: "exact format",
        sentence: "Give the final answer in the exact format requested.",
    },
    Keyword {
        name: "search_freely",
        phrase: "search as many times",
        sentence: "You can search as many times as you want.",
    },
    Keyword {
        name: "reassess_after_search",
        phrase: "after each search",
        sentence: "After each search, decide whether another lookup is needed.",
    },
];

/// The instruction every run starts from.
pub const SEED_INSTRUCTION: &str = "Answer the given question. You must conduct reasoning inside <think> and </think> first every time you get new information. After reasoning, if you find you lack some knowledge, you can call a search engine by <search> query </search> and it will return the top searched results between <information> and </information>. You can search as many times as your want. If you find no further external knowledge needed, you can directly provide the answer inside <answer> and </answer>, without detailed illustrations. For example, <answer> Beijing </answer>.";

pub fn keyword_flags(text: &str) -> [bool; KEYWORD_FLAGS] {
    let lower = text.to_lowercase();
    let mut flags = [false; KEYWORD_FLAGS];
    for (flag, kw) in flags.iter_mut().zip(KEYWORDS.iter()) {
        *flag = lower.contains(kw.phrase);
    }
    flags
}

/// Keyword flags from text; knob entries are zero.
pub fn instruction_features_from_text(text: &str) -> Vec<f64> {
    let mut features = vec![0.0; INSTRUCTION_DIM];
    for (slot, on) in features.iter_mut().zip(keyword_flags(text)) {
        *slot = if on { 1.0 } else { 0.0 };
    }
    features
}

/// Keyword flags from text, knobs copied from `knobs_from`.
pub fn features_with_knobs(text: &str, knobs_from: &[f64]) -> Vec<f64> {
    let mut features = instruction_features_from_text(text);
    features[KEYWORD_FLAGS..].copy_from_slice(&knobs_from[KEYWORD_FLAGS..INSTRUCTION_DIM]);
    features
}

pub fn flag_count(features: &[f64]) -> usize {
    features[..KEYWORD_FLAGS].iter().filter(|f| **f > 0.5).count()
}

/// Append the keyword's sentence unless its phrase is already present.
pub fn with_keyword(text: &str, index: usize) -> String {
    let kw = &KEYWORDS[index];
    if text.to_lowercase().contains(kw.phrase) {
        return text.to_string();
    }
    let trimmed = text.trim_end();
    if trimmed.is_empty() {
        kw.sentence.to_string()
    } else {
        format!("{trimmed} {}", kw.sentence)
    }
}

/// Remove the keyword's sentence, then any leftover occurrence of its phrase.
pub fn without_keyword(text: &str, index: usize) -> String {
    let kw = &KEYWORDS[index];
    let mut out = text.replace(&format!(" {}", kw.sentence), "").replace(kw.sentence, "");
    loop {
        let lower = out.to_lowercase();
        let Some(pos) = lower.find(kw.phrase) else { break };
        // Lowercasing can shift byte offsets for non-ASCII text; fall back to
        // a char-wise rebuild in that case.
        if lower.len() == out.len() {
            out.replace_range(pos..pos + kw.phrase.len(), "");
        } else {
            out = remove_case_insensitive(&out, kw.phrase);
        }
    }
    out
}

fn remove_case_insensitive(text: &str, phrase: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let target: Vec<char> = phrase.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let matches = i + target.len() <= chars.len()
            && chars[i..i + target.len()]
                .iter()
                .zip(&target)
                .all(|(a, b)| a.to_lowercase().eq(b.to_lowercase()));
        if matches {
            i += target.len();
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}
