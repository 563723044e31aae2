//! Text generators behind the LLM-based proposers.
//!
//! `HttpGenerator` speaks the chat-completions wire format and appends every
//! request/response pair to an audit JSONL file. `ScriptedGenerator` is a
//! deterministic offline stand-in used by the ablation harness and tests.

use serde::{Deserialize, Serialize};

use crate::env::lexicon::{keyword_flags, with_keyword, without_keyword};
use crate::env::KEYWORD_FLAGS;
use crate::error::Result;
use crate::rng::stream_rng;

pub trait TextGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Decoding temperature for the optimizer model.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub audit_log: Option<String>,
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    3
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn user(model: &str, prompt: &str, temperature: f64) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature,
        }
    }
}

/// Pull `choices[0].message.content` out of a chat-completions response.
pub fn extract_content(body: &serde_json::Value) -> Option<String> {
    body.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

#[cfg(feature = "http")]
pub use http::HttpGenerator;

#[cfg(feature = "http")]
mod http {
    use std::fs::OpenOptions;
    use std::io::Write;
    use std::time::Duration;

    use serde_json::json;

    use super::{extract_content, ChatRequest, GeneratorConfig, TextGenerator};
    use crate::error::{Error, Result};

    pub struct HttpGenerator {
        config: GeneratorConfig,
        agent: ureq::Agent,
        token: Option<String>,
    }

    impl HttpGenerator {
        pub fn new(config: GeneratorConfig) -> Result<Self> {
            let token = match &config.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    Error::Generator(format!("environment variable {var} is not set"))
                })?),
                None => None,
            };
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
                .http_status_as_error(false)
                .build()
                .into();
            Ok(Self { config, agent, token })
        }

        fn audit(&self, entry: serde_json::Value) {
            let Some(path) = &self.config.audit_log else { return };
            let written = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{entry}"));
            if let Err(e) = written {
                log::error!("could not append to generator audit log {path}: {e}");
            }
        }

        fn attempt(&self, request: &ChatRequest) -> std::result::Result<(u16, String), String> {
            let mut req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
            if let Some(token) = &self.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let body = serde_json::to_string(request).map_err(|e| e.to_string())?;
            let mut resp = req.send(body.as_str()).map_err(|e| e.to_string())?;
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
            Ok((status, text))
        }
    }

    impl TextGenerator for HttpGenerator {
        fn generate(&mut self, prompt: &str) -> Result<String> {
            let request = ChatRequest::user(&self.config.model, prompt, self.config.temperature);
            let attempts = self.config.max_retries + 1;
            let mut last_error = String::new();
            for attempt in 0..attempts {
                if attempt > 0 {
                    std::thread::sleep(Duration::from_millis(250 * (1 << attempt.min(6))));
                }
                match self.attempt(&request) {
                    Ok((status, text)) => {
                        let parsed: Option<serde_json::Value> = serde_json::from_str(&text).ok();
                        self.audit(json!({
                            "attempt": attempt,
                            "request": &request,
                            "status": status,
                            "response": parsed.clone().unwrap_or(serde_json::Value::String(text.clone())),
                        }));
                        if (200..300).contains(&status) {
                            if let Some(content) = parsed.as_ref().and_then(extract_content) {
                                return Ok(content);
                            }
                            last_error = "response has no choices[0].message.content".into();
                        } else {
                            last_error = format!("HTTP {status}");
                            // client errors other than rate limiting will not improve on retry
                            if (400..500).contains(&status) && status != 429 {
                                break;
                            }
                        }
                    }
                    Err(e) => {
                        self.audit(json!({ "attempt": attempt, "request": &request, "error": &e }));
                        last_error = e;
                    }
                }
            }
            Err(Error::Generator(format!(
                "{} unreachable after {attempts} attempts: {last_error}",
                self.config.endpoint
            )))
        }
    }
}

/// Deterministic offline generator. It recognises which template produced a
/// prompt and answers with six `<ins_k>` candidates:
///
/// * reflection: the parent plus keyword sentences it lacks (flag superset);
/// * paraphrase: the parent with a neutral preamble (same flags);
/// * history: the best-scored instruction with one random flag toggled on or off.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    seed: u64,
    calls: u64,
    pub candidates_per_call: usize,
}

const PREAMBLES: [&str; 6] = [
    "Please read carefully.",
    "Think about the question first.",
    "Be precise.",
    "Stay focused on the question.",
    "Keep your reasoning short.",
    "Work carefully.",
];

impl ScriptedGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed, calls: 0, candidates_per_call: 6 }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    fn reflect(&self, parent: &str) -> Vec<String> {
        let flags = keyword_flags(parent);
        let missing: Vec<usize> = (0..KEYWORD_FLAGS).filter(|&k| !flags[k]).collect();
        if missing.is_empty() {
            return self.paraphrase(parent);
        }
        (0..self.candidates_per_call)
            .map(|i| {
                let first = missing[i % missing.len()];
                let mut text = with_keyword(parent, first);
                if i >= missing.len() && missing.len() > 1 {
                    text = with_keyword(&text, missing[(i + 1) % missing.len()]);
                }
                text
            })
            .collect()
    }

    fn paraphrase(&self, parent: &str) -> Vec<String> {
        (0..self.candidates_per_call)
            .map(|i| format!("{} {parent}", PREAMBLES[i % PREAMBLES.len()]))
            .collect()
    }

    fn history(&self, prompt: &str, best: &str) -> Vec<String> {
        use rand::Rng;
        let mut rng = stream_rng(self.seed, &[fnv1a(prompt.as_bytes())]);
        let flags = keyword_flags(best);
        (0..self.candidates_per_call)
            .map(|_| {
                let k = rng.random_range(0..KEYWORD_FLAGS);
                if flags[k] {
                    without_keyword(best, k)
                } else {
                    with_keyword(best, k)
                }
            })
            .collect()
    }
}

/// Stable 64-bit FNV-1a hash, so replies depend on the prompt and not on call order.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = text[start..].find(close)? + start;
    Some(text[start..end].trim())
}

/// Highest-scored `<ins_k>` entry of a rendered history block.
fn best_history_entry(prompt: &str) -> Option<String> {
    let mut best: Option<(i64, String)> = None;
    let mut k = 1;
    while let Some(text) = between(prompt, &format!("<ins_{k}>"), &format!("</ins_{k}>")) {
        let score = between(prompt, &format!("<score_{k}>"), &format!("</score_{k}>"))
            .and_then(|s| s.parse::<i64>().ok())
            .unwrap_or(0);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, text.to_string()));
        }
        k += 1;
    }
    best.map(|(_, t)| t)
}

impl TextGenerator for ScriptedGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String> {
        let candidates = if prompt.contains("<history>") {
            let best = best_history_entry(prompt).unwrap_or_default();
            self.history(prompt, &best)
        } else {
            let parent = between(prompt, "<ins_0>", "</ins_0>").unwrap_or_default();
            if prompt.contains("<example>") {
                self.reflect(parent)
            } else {
                self.paraphrase(parent)
            }
        };
        self.calls += 1;
        let mut out = String::from("Here are the revised candidates.\n");
        for (i, c) in candidates.iter().enumerate() {
            out.push_str(&format!("<ins_{}>\n{}\n</ins_{}>\n", i + 1, c, i + 1));
        }
        Ok(out)
    }
}
