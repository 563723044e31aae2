//! Deterministic knowledge-base and question generation, plus JSONL I/O.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{KnowledgeBase, Question, Triple, MAX_DEPTH};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const RELATIONS: [&str; 12] = [
    "founder", "capital", "author", "director", "birthplace", "spouse", "employer", "mentor",
    "rival", "successor", "headquarters", "inventor",
];

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
const CODAS: [&str; 6] = ["", "n", "r", "s", "l", "th"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthCounts {
    pub depth1: usize,
    pub depth2: usize,
    pub depth3: usize,
}

impl Default for DepthCounts {
    /// 40% single-hop, 40% two-hop, 20% three-hop.
    fn default() -> Self {
        Self { depth1: 400, depth2: 400, depth3: 200 }
    }
}

struct NameSource<R> {
    rng: R,
    used: HashSet<String>,
}

impl<R: Rng> NameSource<R> {
    fn fresh(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut name = String::new();
            for _ in 0..syllables {
                name.push_str(ONSETS.choose(&mut self.rng).expect("non-empty"));
                name.push_str(VOWELS.choose(&mut self.rng).expect("non-empty"));
            }
            name.push_str(CODAS.choose(&mut self.rng).expect("non-empty"));
            let mut chars = name.chars();
            let first = chars.next().expect("non-empty").to_ascii_uppercase();
            let name = std::iter::once(first).chain(chars).collect::<String>();
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

fn question_text(hops: &[(String, String)]) -> String {
    let mut text = String::from("What is the");
    for (i, (_, relation)) in hops.iter().enumerate().rev() {
        if i + 1 < hops.len() {
            text.push_str(" of the");
        }
        text.push(' ');
        text.push_str(relation);
    }
    text.push_str(" of ");
    text.push_str(&hops[0].0);
    text.push('?');
    text
}

/// Build a knowledge base and questions. Each question gets a fresh acyclic
/// chain of entities; every chain entity also gets one sibling fact with a
/// different relation, which is what a whole-question search surfaces and
/// what every hit shows alongside the real value.
pub fn generate_dataset(seed: u64, counts: DepthCounts) -> Result<(KnowledgeBase, Vec<Question>)> {
    let mut rng = stream_rng(seed, &[0xDA7A]);
    let mut names = NameSource { rng: stream_rng(seed, &[0x4A3E]), used: HashSet::new() };
    let mut kb = KnowledgeBase::default();
    let mut questions = Vec::with_capacity(counts.depth1 + counts.depth2 + counts.depth3);
    let plan = [(1usize, counts.depth1), (2, counts.depth2), (3, counts.depth3)];
    let mut next_id = 0u64;
    for (depth, count) in plan {
        debug_assert!(depth <= MAX_DEPTH);
        for _ in 0..count {
            let entities: Vec<String> = (0..=depth).map(|_| names.fresh()).collect();
            let mut hops = Vec::with_capacity(depth);
            for hop in 0..depth {
                let relation = *RELATIONS.choose(&mut rng).expect("non-empty");
                let sibling = loop {
                    let r = *RELATIONS.choose(&mut rng).expect("non-empty");
                    if r != relation {
                        break r;
                    }
                };
                kb.insert(&entities[hop], relation, &entities[hop + 1])?;
                kb.insert(&entities[hop], sibling, &names.fresh())?;
                hops.push((entities[hop].clone(), relation.to_string()));
            }
            questions.push(Question {
                id: next_id,
                text: question_text(&hops),
                hops,
                gold_answer: entities[depth].clone(),
            });
            next_id += 1;
        }
    }
    Ok((kb, questions))
}

pub fn write_kb_jsonl<W: Write>(kb: &KnowledgeBase, mut w: W) -> Result<()> {
    for t in kb.triples() {
        serde_json::to_writer(&mut w, &t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_kb_jsonl<R: BufRead>(r: R) -> Result<KnowledgeBase> {
    let mut kb = KnowledgeBase::default();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Triple = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("knowledge base line {}: {e}", n + 1)))?;
        kb.insert(&t.entity, &t.relation, &t.value)?;
    }
    Ok(kb)
}

pub fn write_questions_jsonl<W: Write>(questions: &[Question], mut w: W) -> Result<()> {
    for q in questions {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_questions_jsonl<R: BufRead>(r: R) -> Result<Vec<Question>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("question line {}: {e}", n + 1)))?;
        out.push(q);
    }
    Ok(out)
}
