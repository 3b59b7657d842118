//! Free-response to multiple-choice conversion with model-proposed
//! distractors.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::normalize::{harmonize_display, normalize_answer};
use super::table::{linearize_table, TableError, TableSpec};
use super::{Letter, Question};
use crate::agents::{AgentEnv, AgentError};
use crate::gateway::{AgentKind, CallTag, ChatMessage};

/// A free-response source item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeResponseItem {
    pub id: String,
    pub topic: String,
    /// Lead-in text, shown before the table.
    pub stem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableSpec>,
    /// The question sentence, shown after the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

impl FreeResponseItem {
    /// Stem with any table linearized into bullets.
    pub fn full_stem(&self) -> Result<String, TableError> {
        let mut parts = vec![self.stem.trim().to_string()];
        if let Some(t) = &self.table {
            parts.push(linearize_table(t)?);
        }
        if let Some(p) = self.prompt.as_deref().map(str::trim).filter(|p| !p.is_empty()) {
            parts.push(p.to_string());
        }
        parts.retain(|p| !p.is_empty());
        Ok(match (&self.table, parts.len()) {
            // lead-in and bullets read as one block
            (Some(_), n) if n >= 2 => {
                let mut s = format!("{}\n{}", parts[0], parts[1]);
                for p in &parts[2..] {
                    s.push_str("\n\n");
                    s.push_str(p);
                }
                s
            }
            _ => parts.join("\n\n"),
        })
    }
}

#[derive(Debug, Error)]
pub enum ConversionError {
    #[error("item {id}: correct answer is empty")]
    EmptyAnswer { id: String },
    #[error("item {id}: expected 3 numbered distractors, got {reply:?}")]
    MalformedDistractors { id: String, reply: String },
    #[error("item {id}: distractors collide after retry: {detail}")]
    DistractorCollision { id: String, detail: String },
    #[error("item {id}: {source}")]
    Table { id: String, source: TableError },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("free-response file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Provenance of one converted item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionRecord {
    pub id: String,
    pub seed: u64,
    pub model: String,
    pub attempts: u32,
    pub replies: Vec<String>,
    pub distractors: Vec<String>,
    pub answer_source: String,
    pub answer_display: String,
    pub ground_truth: Letter,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub converted: Vec<ConversionRecord>,
    /// Item id → error message.
    pub failed: BTreeMap<String, String>,
}

fn numbered_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\(?(\d+)[.):]\s*(.+?)\s*$").expect("numbered pattern"))
}

/// Exactly three numbered lines, in order.
pub fn parse_distractors(reply: &str) -> Option<[String; 3]> {
    let items: Vec<String> = reply
        .lines()
        .filter_map(|l| numbered_re().captures(l))
        .map(|c| c[2].trim_matches('*').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    <[String; 3]>::try_from(items).ok()
}

fn collision(answer: &str, distractors: &[String; 3]) -> Option<String> {
    let mut seen: Vec<(String, &str)> = vec![(normalize_answer(answer), answer)];
    for d in distractors {
        let n = normalize_answer(d);
        if let Some((_, other)) = seen.iter().find(|(k, _)| *k == n) {
            return Some(format!("{d:?} matches {other:?}"));
        }
        seen.push((n, d));
    }
    None
}

/// Per-item RNG seed: the run seed mixed with the item id so items in one
/// run get independent permutations.
fn item_seed(seed: u64, id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(head)
}

/// Convert one item: one distractor call (plus one retry on collision), then
/// a seeded shuffle of the four options.
pub fn convert_to_mcq(
    env: &AgentEnv<'_>,
    item: &FreeResponseItem,
    seed: u64,
) -> Result<(Question, ConversionRecord), ConversionError> {
    if item.answer.trim().is_empty() {
        return Err(ConversionError::EmptyAnswer { id: item.id.clone() });
    }
    let stem = item.full_stem().map_err(|source| ConversionError::Table { id: item.id.clone(), source })?;
    let body = env
        .templates
        .distractors
        .render(&[("stem", &stem), ("answer", item.answer.trim())])
        .map_err(AgentError::from)?;
    let mut replies = Vec::new();
    let mut last_collision = String::new();
    for pass in 0..2u32 {
        let tag = CallTag::new(AgentKind::Converter, &item.id, pass);
        let request = env.gateway.request(vec![ChatMessage::user(body.trim_end())]).with_seed(env.seed);
        let reply = env.gateway.complete(&request, &tag).map_err(AgentError::from)?.content;
        replies.push(reply.clone());
        let distractors = parse_distractors(&reply)
            .ok_or_else(|| ConversionError::MalformedDistractors { id: item.id.clone(), reply: reply.clone() })?;
        if let Some(detail) = collision(&item.answer, &distractors) {
            log::warn!("item {}: distractor collision on attempt {}: {detail}", item.id, pass + 1);
            last_collision = detail;
            continue;
        }
        let display = harmonize_display(&item.answer, &distractors);
        let mut texts: Vec<String> = std::iter::once(display.clone()).chain(distractors.iter().cloned()).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(item_seed(seed, &item.id)));
        let shuffled: Vec<String> = order.iter().map(|&i| std::mem::take(&mut texts[i])).collect();
        let correct = order.iter().position(|&i| i == 0).expect("permutation contains 0");
        let ground_truth = Letter::from_index(correct).expect("four options");
        let question = Question {
            id: item.id.clone(),
            topic: item.topic.clone(),
            stem,
            options: Letter::ALL.into_iter().zip(shuffled).collect(),
            ground_truth,
            hint: item.hint.clone(),
            explanation: item.explanation.clone(),
            category: None,
        };
        let record = ConversionRecord {
            id: item.id.clone(),
            seed,
            model: env.gateway.profile().model.clone(),
            attempts: pass + 1,
            replies,
            distractors: distractors.to_vec(),
            answer_source: item.answer.clone(),
            answer_display: display,
            ground_truth,
        };
        return Ok((question, record));
    }
    Err(ConversionError::DistractorCollision { id: item.id.clone(), detail: last_collision })
}

pub fn load_free_response(path: &Path) -> Result<Vec<FreeResponseItem>, ConversionError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
