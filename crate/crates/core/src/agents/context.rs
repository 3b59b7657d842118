use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AgentError;

/// The sentinel the retriever replies with when nothing supports the query.
pub const NO_EVIDENCE: &str = "[NO EVIDENCE]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedPassage {
    pub passage_id: String,
    pub score: f64,
}

/// Evidence Retriever output: hint plus passage summaries in relevance order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub hint: Option<String>,
    pub summaries: Vec<String>,
    pub no_evidence: bool,
    /// The reply was neither a list nor the sentinel and was kept whole.
    #[serde(default)]
    pub malformed: bool,
    #[serde(default)]
    pub passages: Vec<RetrievedPassage>,
}

impl EvidenceBundle {
    pub fn new(hint: Option<String>, summaries: Vec<String>) -> Self {
        Self { hint, summaries, no_evidence: false, malformed: false, passages: Vec::new() }
    }

    pub fn none(hint: Option<String>) -> Self {
        Self { no_evidence: true, ..Self::new(hint, Vec::new()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Critique {
    pub text: String,
    pub reviewer_topic: String,
    /// The reviewer replied with nothing and a placeholder was substituted.
    #[serde(default)]
    pub empty_reply: bool,
    /// The topic had no registered role and the generic role was used.
    #[serde(default)]
    pub role_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextPart {
    Hint,
    Evidence,
    Critique,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub rendered: String,
    pub parts: BTreeSet<ContextPart>,
}

/// Render hint, evidence summaries and critique, in that order, as labeled
/// sections. A sentinel bundle contributes its hint but no evidence section.
pub fn render_context(evidence: Option<&EvidenceBundle>, critique: Option<&Critique>) -> Result<ContextBlock, AgentError> {
    if evidence.is_none() && critique.is_none() {
        return Err(AgentError::BothAbsent);
    }
    let mut sections = Vec::new();
    let mut parts = BTreeSet::new();
    if let Some(bundle) = evidence {
        if let Some(hint) = bundle.hint.as_deref().map(str::trim).filter(|h| !h.is_empty()) {
            sections.push(format!("Hint:\n{hint}"));
            parts.insert(ContextPart::Hint);
        }
        if !bundle.no_evidence && !bundle.summaries.is_empty() {
            let list: Vec<String> =
                bundle.summaries.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s.trim())).collect();
            sections.push(format!("Evidence:\n{}", list.join("\n")));
            parts.insert(ContextPart::Evidence);
        }
    }
    if let Some(c) = critique {
        sections.push(format!("Expert critique:\n{}", c.text.trim()));
        parts.insert(ContextPart::Critique);
    }
    let rendered = sections.iter().map(|s| format!("{s}\n\n")).collect();
    Ok(ContextBlock { rendered, parts })
}
