//! The three agents as prompt assembly plus reply parsing.
//!
//! Agents are stateless. Each function issues exactly one chat call and
//! returns the parsed output together with the request and response.

mod answer;
mod context;
mod template;

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::gateway::{AgentKind, CallTag, ChatMessage, ChatRequest, ChatResponse, Gateway, GatewayError};
use crate::index::{embed, EmbeddingProvider, IndexError, RetrievalConfig, VectorIndex};
use crate::questions::Question;
use crate::roles::{apply_role, RoleRegistry};
use crate::scalar::Scalar;

pub use answer::{extract_answer, GeneratorOutput, Unparseable};
pub use context::{
    render_context, ContextBlock, ContextPart, Critique, EvidenceBundle, RetrievedPassage, NO_EVIDENCE,
};
pub use template::{PromptTemplate, TemplateError, TemplateSet};

/// Placeholder critique for an empty reviewer reply.
pub const NO_CRITIQUE: &str = "(no critique)";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("retrieval failed: {0}")]
    Index(#[from] IndexError),
    #[error("context block needs evidence or a critique")]
    BothAbsent,
}

impl AgentError {
    pub fn kind(&self) -> &'static str {
        match self {
            AgentError::Gateway(e) => e.kind(),
            AgentError::Template(_) => "template",
            AgentError::Index(_) => "retrieval",
            AgentError::BothAbsent => "both_absent",
        }
    }
}

/// One completed agent call.
#[derive(Debug, Clone)]
pub struct AgentCall<T> {
    pub output: T,
    pub tag: CallTag,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// What every agent needs to issue a call.
#[derive(Debug, Clone, Copy)]
pub struct AgentEnv<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub seed: Option<u64>,
}

impl<'a> AgentEnv<'a> {
    pub fn new(gateway: &'a Gateway, templates: &'a TemplateSet) -> Self {
        Self { gateway, templates, seed: None }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    fn call<T>(
        &self,
        tag: CallTag,
        messages: Vec<ChatMessage>,
        parse: impl FnOnce(&str) -> T,
    ) -> Result<AgentCall<T>, AgentError> {
        let request = self.gateway.request(messages).with_seed(self.seed);
        let response = self.gateway.complete(&request, &tag)?;
        Ok(AgentCall { output: parse(&response.content), tag, request, response })
    }

    /// System + user when the backend accepts system prompts, otherwise one
    /// user turn with the system text prepended.
    fn with_system(&self, system: &str, user: String) -> Vec<ChatMessage> {
        if self.gateway.profile().supports_system_prompt {
            vec![ChatMessage::system(system.trim_end()), ChatMessage::user(user)]
        } else {
            vec![ChatMessage::user(format!("{}\n\n{user}", system.trim_end()))]
        }
    }
}

/// Base Generator: zero-shot chain of thought over the question plus an
/// optional context block. Always a fresh single-turn conversation.
pub fn generate(
    env: &AgentEnv<'_>,
    question: &Question,
    context: Option<&ContextBlock>,
    pass_index: u32,
) -> Result<AgentCall<GeneratorOutput>, AgentError> {
    let options = question.format_options();
    let body = env.templates.generator.render(&[
        ("context", context.map_or("", |c| c.rendered.as_str())),
        ("stem", question.stem.trim()),
        ("options", &options),
    ])?;
    let tag = CallTag::new(AgentKind::Generator, &question.id, pass_index);
    env.call(tag, vec![ChatMessage::user(body.trim_end())], |reply| GeneratorOutput::parse(reply))
}

fn list_item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[-*•])\s+(.*)$").expect("list pattern"))
}

/// Parse a retriever reply into a bundle (hint and passages left empty).
pub fn parse_summaries(reply: &str) -> EvidenceBundle {
    let trimmed = reply.trim();
    if trimmed == NO_EVIDENCE {
        return EvidenceBundle::none(None);
    }
    let mut items: Vec<String> = Vec::new();
    for line in trimmed.lines() {
        if let Some(c) = list_item_re().captures(line) {
            items.push(c[1].trim().to_string());
        } else if let Some(last) = items.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                last.push(' ');
                last.push_str(extra);
            }
        }
    }
    items.retain(|s| !s.is_empty());
    if items.is_empty() {
        log::warn!("retriever reply is neither a list nor {NO_EVIDENCE}; keeping it as one summary");
        let summaries = if trimmed.is_empty() { Vec::new() } else { vec![trimmed.to_string()] };
        return EvidenceBundle { malformed: true, ..EvidenceBundle::new(None, summaries) };
    }
    EvidenceBundle::new(None, items)
}

/// Evidence Retriever: embed the stem, take the top-k passages and ask the
/// model to summarize them. The hint is attached from the question record and
/// never used for retrieval.
pub fn retrieve_and_summarize<T: Scalar>(
    env: &AgentEnv<'_>,
    question: &Question,
    index: &VectorIndex<T>,
    provider: &dyn EmbeddingProvider<T>,
    cfg: &RetrievalConfig,
) -> Result<AgentCall<EvidenceBundle>, AgentError> {
    let query = embed(provider, std::slice::from_ref(&question.stem))?.pop().ok_or(IndexError::EmptyIndex)?;
    let hits = index.search(&query, cfg.k)?;
    let chunks: Vec<String> = hits.iter().enumerate().map(|(i, h)| format!("[{}] {}", i + 1, h.passage.text)).collect();
    let passages: Vec<RetrievedPassage> = hits
        .iter()
        .map(|h| RetrievedPassage { passage_id: h.passage.passage_id.clone(), score: h.score.to_f64().unwrap_or(0.0) })
        .collect();
    let user = env
        .templates
        .retriever_user
        .render(&[("stem", question.stem.trim()), ("chunks", &chunks.join("\n\n"))])?;
    let messages = env.with_system(env.templates.retriever_system.body(), user.trim_end().to_string());
    let tag = CallTag::new(AgentKind::Retriever, &question.id, 0);
    let hint = question.hint.clone();
    env.call(tag, messages, move |reply| EvidenceBundle { hint, passages, ..parse_summaries(reply) })
}

/// Expert Reviewer: role-prompted critique of a draft, with evidence
/// summaries when given.
pub fn review(
    env: &AgentEnv<'_>,
    registry: &RoleRegistry,
    question: &Question,
    draft: &GeneratorOutput,
    evidence: Option<&EvidenceBundle>,
) -> Result<AgentCall<Critique>, AgentError> {
    let answer = match draft.answer {
        Some(l) => format!("{l}. {}", question.option(l)),
        None => "(no answer could be extracted)".to_string(),
    };
    let reasoning = if draft.reasoning.trim().is_empty() { draft.raw.trim() } else { draft.reasoning.trim() };
    let evidence_text = match evidence {
        Some(b) if !b.no_evidence && !b.summaries.is_empty() => {
            let list: Vec<String> = b.summaries.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s.trim())).collect();
            format!("\nEvidence summaries:\n{}", list.join("\n"))
        }
        _ => String::new(),
    };
    let options = question.format_options();
    let body = env.templates.reviewer.render(&[
        ("stem", question.stem.trim()),
        ("options", &options),
        ("answer", &answer),
        ("reasoning", reasoning),
        ("evidence", &evidence_text),
    ])?;
    let role = registry.resolve_role(&question.topic);
    let messages = apply_role(env.gateway.profile(), &role, body.trim_end());
    let tag = CallTag::new(AgentKind::Reviewer, &question.id, 0);
    let topic = role.topic.clone();
    env.call(tag, messages, move |reply| {
        let text = reply.trim();
        if text.is_empty() {
            log::warn!("reviewer returned an empty critique for topic {topic:?}");
        }
        Critique {
            text: if text.is_empty() { NO_CRITIQUE.to_string() } else { text.to_string() },
            reviewer_topic: topic,
            empty_reply: text.is_empty(),
            role_fallback: role.fallback,
        }
    })
}
