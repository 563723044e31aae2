//! Prompt templates and candidate extraction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProposerKind;
use crate::error::{structural, Error, Result};
use crate::population::InstructionCandidate;

const PARAPHRASE: &str = include_str!("../../templates/paraphrase.txt");
const HISTORY: &str = include_str!("../../templates/history.txt");
const REFLECTION: &str = include_str!("../../templates/reflection.txt");

/// Template texts with `{instruction}`, `{history}`, `{examples}` and `{n}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub paraphrase: String,
    pub history: String,
    pub reflection: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            paraphrase: PARAPHRASE.to_string(),
            history: HISTORY.to_string(),
            reflection: REFLECTION.to_string(),
        }
    }
}

/// Optional per-kind template file overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    #[serde(default)]
    pub paraphrase: Option<String>,
    #[serde(default)]
    pub history: Option<String>,
    #[serde(default)]
    pub reflection: Option<String>,
}

impl Templates {
    pub fn load(paths: &TemplatePaths) -> Result<Self> {
        let mut t = Self::default();
        let read = |p: &str| std::fs::read_to_string(Path::new(p));
        if let Some(p) = &paths.paraphrase {
            t.paraphrase = read(p)?;
        }
        if let Some(p) = &paths.history {
            t.history = read(p)?;
        }
        if let Some(p) = &paths.reflection {
            t.reflection = read(p)?;
        }
        Ok(t)
    }
}

/// A failed rollout as shown to the reflection proposer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureExample {
    pub response: String,
    pub correct_answer: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    /// `(instruction text, weight in [0, 1])` pairs for the history proposer.
    pub history: Vec<(String, f64)>,
    pub failures: Vec<FailureExample>,
    /// Candidates requested per call.
    pub n: usize,
}

/// Single-pass placeholder substitution; slot values are never rescanned.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let slot = tail
            .find('}')
            .and_then(|close| slots.iter().find(|(name, _)| *name == &tail[..close]).map(|s| (close, s.1)));
        match slot {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

fn render_history(history: &[(String, f64)]) -> String {
    history
        .iter()
        .enumerate()
        .map(|(i, (text, weight))| {
            let k = i + 1;
            let score = (weight * 100.0).round() as i64;
            format!("<ins_{k}>\n{text}\n</ins_{k}>\n\n<score_{k}>\n{score}\n</score_{k}>")
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_examples(failures: &[FailureExample]) -> String {
    failures
        .iter()
        .map(|f| {
            format!(
                "<example>\n\nResponse: {}\n\nCorrect answer: {}\n\n</example>",
                f.response, f.correct_answer
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn build_prompt(
    templates: &Templates,
    kind: ProposerKind,
    parent: &InstructionCandidate,
    ctx: &PromptContext,
) -> Result<String> {
    let n = ctx.n.to_string();
    match kind {
        ProposerKind::Paraphrase => Ok(fill(
            &templates.paraphrase,
            &[("instruction", &parent.text), ("n", &n)],
        )),
        ProposerKind::History => {
            if ctx.history.is_empty() {
                return Err(structural("history prompt needs at least one scored instruction"));
            }
            Ok(fill(
                &templates.history,
                &[("history", &render_history(&ctx.history)), ("n", &n)],
            ))
        }
        ProposerKind::Reflection => {
            if ctx.failures.is_empty() {
                return Err(structural("reflection prompt needs at least one failure trajectory"));
            }
            Ok(fill(
                &templates.reflection,
                &[
                    ("instruction", &parent.text),
                    ("examples", &render_examples(&ctx.failures)),
                    ("n", &n),
                ],
            ))
        }
        ProposerKind::Mutation => Err(structural("the mutation proposer does not use a prompt")),
    }
}

/// Contents of `<ins_k>...</ins_k>` spans for k >= 1, in index order.
/// Spans without a matching close tag, and repeated indices, are skipped.
pub fn parse_candidates(raw: &str) -> Result<Vec<String>> {
    let mut found: Vec<(usize, String)> = Vec::new();
    let mut cursor = 0;
    while let Some(rel) = raw[cursor..].find("<ins_") {
        let open_start = cursor + rel;
        let after_prefix = open_start + "<ins_".len();
        let digits: String = raw[after_prefix..].chars().take_while(char::is_ascii_digit).collect();
        let tag_end = after_prefix + digits.len();
        if digits.is_empty() || !raw[tag_end..].starts_with('>') {
            cursor = after_prefix;
            continue;
        }
        let body_start = tag_end + 1;
        let index: usize = match digits.parse() {
            Ok(i) => i,
            Err(_) => {
                cursor = body_start;
                continue;
            }
        };
        let close = format!("</ins_{digits}>");
        let next_open = raw[body_start..].find("<ins_").map(|p| body_start + p);
        match raw[body_start..].find(&close).map(|p| body_start + p) {
            Some(close_at) if next_open.is_none_or(|o| o > close_at) => {
                let body = raw[body_start..close_at].trim();
                if index == 0 {
                    // echo of the original prompt
                } else if found.iter().any(|(i, _)| *i == index) {
                    log::warn!("duplicate candidate index <ins_{index}> skipped");
                } else if body.is_empty() {
                    log::warn!("empty candidate <ins_{index}> skipped");
                } else {
                    found.push((index, body.to_string()));
                }
                cursor = close_at + close.len();
            }
            _ => {
                log::warn!("candidate <ins_{index}> has no closing tag; skipped");
                cursor = body_start;
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Parse("no well-formed <ins_k> candidates in response".into()));
    }
    found.sort_by_key(|(i, _)| *i);
    Ok(found.into_iter().map(|(_, text)| text).collect())
}
