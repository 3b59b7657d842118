//! Fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use finqa_core::gateway::{AgentKind, ChatRole, LoggedCall};
use finqa_core::index::{EmbeddingProvider, IndexError, SourceDocument};
use finqa_core::questions::{Letter, Question, QuestionSet};
use finqa_core::roles::RoleRegistry;
use finqa_core::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn epoch() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

/// `n` questions whose topics are spread across the registry, ids `s00..`.
pub fn synthetic_questions(registry: &RoleRegistry, n: usize) -> QuestionSet {
    let entries = registry.entries();
    let questions = (0..n)
        .map(|i| {
            let entry = &entries[(i * 7) % entries.len()];
            let options: BTreeMap<Letter, String> =
                Letter::ALL.iter().map(|&l| (l, format!("{} choice {l} for item {i}", entry.topic))).collect();
            Question {
                id: format!("s{i:02}"),
                topic: entry.topic.clone(),
                stem: format!("Synthetic question {i} about {} and related cash flows.", entry.topic.to_lowercase()),
                options,
                ground_truth: Letter::ALL[i % 4],
                hint: Some(format!("HINT-{i}: recall the definition first.")),
                explanation: None,
                category: Some(entry.category),
            }
        })
        .collect();
    QuestionSet { name: "synthetic".into(), source: "fixture".into(), questions }
}

/// Text of every message in a logged request, joined.
pub fn request_text(call: &LoggedCall) -> String {
    call.request.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
}

pub fn system_text(call: &LoggedCall) -> Option<&str> {
    call.request.messages.iter().find(|m| m.role == ChatRole::System).map(|m| m.content.as_str())
}

pub fn agent_of(call: &LoggedCall) -> AgentKind {
    call.tag.agent
}

/// Embeds each text as a uniform random vector in [-1, 1]^dims seeded by its
/// SHA-256, so equal texts embed identically and distinct texts almost
/// surely differ.
#[derive(Debug, Clone)]
pub struct SeededEmbedder {
    pub dims: usize,
    id: String,
}

impl SeededEmbedder {
    pub fn new(dims: usize) -> Self {
        Self { dims, id: format!("seeded-{dims}") }
    }

    pub fn raw(&self, text: &str) -> Vec<f64> {
        let digest = Sha256::digest(text.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dims).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

impl<T: Scalar> EmbeddingProvider<T> for SeededEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<T>>, IndexError> {
        Ok(texts.iter().map(|t| self.raw(t).into_iter().map(|x| T::from(x).unwrap()).collect()).collect())
    }
}

/// Small finance corpus for end-to-end runs.
pub fn finance_docs() -> Vec<SourceDocument> {
    vec![
        SourceDocument::new(
            "dividends",
            "Dividend yield equals the annual dividend per share divided by the current share price. \
             A stock paying two dollars a year and trading at fifty dollars yields four percent.",
        ),
        SourceDocument::new(
            "bonds",
            "A bond's price is the present value of its coupons and face value discounted at the market yield. \
             When yields rise, bond prices fall, and longer maturities are more sensitive.",
        ),
        SourceDocument::new(
            "payroll",
            "Payroll taxes are withheld from wages. The employee share of FICA combines Social Security at 6.2 \
             percent and Medicare at 1.45 percent.",
        ),
        SourceDocument::new(
            "wacc",
            "The weighted average cost of capital weights the after-tax cost of debt and the cost of equity by \
             their market value shares of total capital.",
        ),
    ]
}

/// Deterministic random generator for fixtures.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
