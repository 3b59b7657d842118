//! The four agent wirings and per-question traces.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{
    generate, render_context, retrieve_and_summarize, review, AgentCall, AgentEnv, AgentError, ContextBlock, Critique,
    EvidenceBundle, GeneratorOutput, TemplateSet,
};
use crate::digest::sha256_hex;
use crate::gateway::{wire_payload, AgentKind, Gateway, GatewayError};
use crate::index::{EmbeddingProvider, RetrievalConfig, VectorIndex};
use crate::questions::Question;
use crate::roles::RoleRegistry;
use crate::scalar::Scalar;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    M0,
    M1,
    M2,
    M3,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::M0, Mode::M1, Mode::M2, Mode::M3];

    pub fn expected_calls(self) -> usize {
        self.agents().len()
    }

    /// Agent sequence for this wiring.
    pub fn agents(self) -> &'static [AgentKind] {
        use AgentKind::{Generator as BG, Retriever as ER, Reviewer as XR};
        match self {
            Mode::M0 => &[BG],
            Mode::M1 => &[ER, BG],
            Mode::M2 => &[BG, XR, BG],
            Mode::M3 => &[ER, BG, XR, BG],
        }
    }

    pub fn uses_evidence(self) -> bool {
        matches!(self, Mode::M1 | Mode::M3)
    }

    pub fn uses_critique(self) -> bool {
        matches!(self, Mode::M2 | Mode::M3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::M0 => "M0",
            Mode::M1 => "M1",
            Mode::M2 => "M2",
            Mode::M3 => "M3",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::M0 => "M-0",
            Mode::M1 => "M-1",
            Mode::M2 => "M-2",
            Mode::M3 => "M-3",
        }
    }
}

/// Free function form of [`Mode::expected_calls`].
pub fn expected_calls(mode: Mode) -> usize {
    mode.expected_calls()
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode {0:?}; expected one of M0, M1, M2, M3")]
pub struct ParseModeError(pub String);

impl FromStr for Mode {
    type Err = ParseModeError;

    /// Accepts "M0", "m0" and "M-0".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "M0" => Ok(Mode::M0),
            "M1" => Ok(Mode::M1),
            "M2" => Ok(Mode::M2),
            "M3" => Ok(Mode::M3),
            _ => Err(ParseModeError(s.to_string())),
        }
    }
}

/// Accounting for one chat call. Digests are SHA-256 over the wire request
/// JSON and the reply text, so they can be recomputed from logged bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub agent: AgentKind,
    pub pass_index: u32,
    pub request_digest: String,
    pub response_digest: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    #[serde(default)]
    pub usage_missing: bool,
    /// Evidence summaries dropped to fit the context window.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub trimmed_summaries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_body: Option<String>,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

impl CallRecord {
    pub fn from_call<T>(call: &AgentCall<T>, include_bodies: bool) -> Self {
        let payload = wire_payload(&call.request);
        let request_bytes = serde_json::to_vec(&payload).expect("wire payload serializes");
        Self {
            agent: call.tag.agent,
            pass_index: call.tag.pass,
            request_digest: sha256_hex(&request_bytes),
            response_digest: sha256_hex(call.response.content.as_bytes()),
            prompt_tokens: call.response.prompt_tokens.into(),
            completion_tokens: call.response.completion_tokens.into(),
            latency_ms: call.response.latency_ms,
            usage_missing: call.response.usage_missing,
            trimmed_summaries: 0,
            request_body: include_bodies.then_some(payload),
            response_body: include_bodies.then(|| call.response.content.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub question_id: String,
    pub mode: Mode,
    pub calls: Vec<CallRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<GeneratorOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critique: Option<Critique>,
    #[serde(rename = "final")]
    pub final_output: GeneratorOutput,
    pub wall_ms: u64,
}

impl PipelineTrace {
    /// Build a trace, rejecting any that break the call-count, agent-order or
    /// field-presence rules of its mode.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        question_id: impl Into<String>,
        mode: Mode,
        calls: Vec<CallRecord>,
        evidence: Option<EvidenceBundle>,
        initial: Option<GeneratorOutput>,
        critique: Option<Critique>,
        final_output: GeneratorOutput,
        wall_ms: u64,
    ) -> Result<Self, PipelineError> {
        let trace =
            Self { question_id: question_id.into(), mode, calls, evidence, initial, critique, final_output, wall_ms };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::InvalidTrace(format!("{} {}: {m}", self.question_id, self.mode)));
        let agents: Vec<AgentKind> = self.calls.iter().map(|c| c.agent).collect();
        if agents.len() != self.mode.expected_calls() {
            return invalid(format!("{} calls, expected {}", agents.len(), self.mode.expected_calls()));
        }
        if agents != self.mode.agents() {
            return invalid(format!("agent order {agents:?}"));
        }
        if self.initial.is_some() != self.mode.uses_critique() {
            return invalid("initial draft presence does not match mode".into());
        }
        if self.critique.is_some() != self.mode.uses_critique() {
            return invalid("critique presence does not match mode".into());
        }
        if self.evidence.is_some() != self.mode.uses_evidence() {
            return invalid("evidence presence does not match mode".into());
        }
        Ok(())
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.calls.iter().map(|c| c.prompt_tokens).sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.calls.iter().map(|c| c.completion_tokens).sum()
    }

    pub fn usage_missing(&self) -> bool {
        self.calls.iter().any(|c| c.usage_missing)
    }

    /// Stable content reference: digest of every call digest plus the final
    /// reply. Independent of timing.
    pub fn content_ref(&self) -> String {
        trace_ref(&self.question_id, self.mode, &self.calls, Some(&self.final_output.raw))
    }
}

/// A run that stopped on an agent error, with the calls that completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErroredTrace {
    pub question_id: String,
    pub mode: Mode,
    pub calls: Vec<CallRecord>,
    pub error: String,
    pub error_kind: String,
    pub wall_ms: u64,
}

impl ErroredTrace {
    pub fn content_ref(&self) -> String {
        trace_ref(&self.question_id, self.mode, &self.calls, None)
    }
}

fn trace_ref(question_id: &str, mode: Mode, calls: &[CallRecord], final_raw: Option<&str>) -> String {
    let mut material = format!("{question_id}\n{mode}\n");
    for c in calls {
        material.push_str(&format!("{}:{}:{}:{}\n", c.agent, c.pass_index, c.request_digest, c.response_digest));
    }
    if let Some(raw) = final_raw {
        material.push_str(&sha256_hex(raw.as_bytes()));
    }
    sha256_hex(material.as_bytes())
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("mode {mode} needs {missing}")]
    MissingDependency { mode: Mode, missing: &'static str },
    #[error("{} {} failed after {} call(s): {source}", partial.question_id, partial.mode, partial.calls.len())]
    Agent {
        partial: Box<ErroredTrace>,
        #[source]
        source: AgentError,
    },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
}

/// Shared dependencies for running questions through any mode.
pub struct Pipeline<'a, T: Scalar> {
    gateway: &'a Gateway,
    registry: &'a RoleRegistry,
    templates: &'a TemplateSet,
    index: Option<&'a VectorIndex<T>>,
    provider: Option<&'a dyn EmbeddingProvider<T>>,
    retrieval: RetrievalConfig,
    seed: Option<u64>,
}

impl<'a, T: Scalar> Pipeline<'a, T> {
    pub fn new(gateway: &'a Gateway, registry: &'a RoleRegistry, templates: &'a TemplateSet) -> Self {
        Self {
            gateway,
            registry,
            templates,
            index: None,
            provider: None,
            retrieval: RetrievalConfig::default(),
            seed: None,
        }
    }

    pub fn with_retrieval(mut self, index: &'a VectorIndex<T>, provider: &'a dyn EmbeddingProvider<T>) -> Self {
        self.index = Some(index);
        self.provider = Some(provider);
        self
    }

    pub fn with_retrieval_config(mut self, cfg: RetrievalConfig) -> Self {
        self.retrieval = cfg;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn gateway(&self) -> &Gateway {
        self.gateway
    }

    /// Fail fast when `mode` needs retrieval that was not configured.
    pub fn check(&self, mode: Mode) -> Result<(), PipelineError> {
        if mode.uses_evidence() {
            if self.index.is_none() {
                return Err(PipelineError::MissingDependency { mode, missing: "a vector index" });
            }
            if self.provider.is_none() {
                return Err(PipelineError::MissingDependency { mode, missing: "an embedding provider" });
            }
        }
        Ok(())
    }

    fn env(&self) -> AgentEnv<'a> {
        AgentEnv::new(self.gateway, self.templates).with_seed(self.seed)
    }

    pub fn run(&self, question: &Question, mode: Mode) -> Result<PipelineTrace, PipelineError> {
        self.check(mode)?;
        let started = Instant::now();
        let mut run = Run { env: self.env(), question, mode, calls: Vec::new(), bodies: self.gateway.trace_io(), started };

        let evidence = if mode.uses_evidence() {
            let (index, provider) = (self.index.expect("checked"), self.provider.expect("checked"));
            let call = retrieve_and_summarize(&run.env, question, index, provider, &self.retrieval);
            Some(run.record(call)?)
        } else {
            None
        };

        let first = run.generate(evidence.as_ref(), None, 0)?;
        let (initial, critique, final_output) = if mode.uses_critique() {
            let call = review(&run.env, self.registry, question, &first, evidence.as_ref());
            let critique = run.record(call)?;
            let second = run.generate(evidence.as_ref(), Some(&critique), 1)?;
            (Some(first), Some(critique), second)
        } else {
            (None, None, first)
        };
        let wall_ms = run.elapsed();
        PipelineTrace::new(&question.id, mode, run.calls, evidence, initial, critique, final_output, wall_ms)
    }
}

struct Run<'q, 'a> {
    env: AgentEnv<'a>,
    question: &'q Question,
    mode: Mode,
    calls: Vec<CallRecord>,
    bodies: bool,
    started: Instant,
}

impl Run<'_, '_> {
    fn elapsed(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn fail(&mut self, source: AgentError) -> PipelineError {
        let partial = ErroredTrace {
            question_id: self.question.id.clone(),
            mode: self.mode,
            calls: std::mem::take(&mut self.calls),
            error: source.to_string(),
            error_kind: source.kind().to_string(),
            wall_ms: self.elapsed(),
        };
        PipelineError::Agent { partial: Box::new(partial), source }
    }

    fn record<O>(&mut self, call: Result<AgentCall<O>, AgentError>) -> Result<O, PipelineError> {
        match call {
            Ok(call) => {
                self.calls.push(CallRecord::from_call(&call, self.bodies));
                Ok(call.output)
            }
            Err(e) => Err(self.fail(e)),
        }
    }

    /// Base Generator pass with context; on a context overflow, evidence
    /// summaries are dropped last-first and the call retried. The critique is
    /// never dropped.
    fn generate(
        &mut self,
        evidence: Option<&EvidenceBundle>,
        critique: Option<&Critique>,
        pass: u32,
    ) -> Result<GeneratorOutput, PipelineError> {
        let mut bundle = evidence.cloned();
        let mut trimmed = 0u32;
        loop {
            let context: Option<ContextBlock> = match (bundle.as_ref(), critique) {
                (None, None) => None,
                (b, c) => Some(render_context(b, c).map_err(|e| self.fail(e))?),
            };
            let context = context.filter(|c| !c.parts.is_empty());
            match generate(&self.env, self.question, context.as_ref(), pass) {
                Err(AgentError::Gateway(GatewayError::ContextOverflow(msg)))
                    if bundle.as_ref().is_some_and(|b| !b.summaries.is_empty()) =>
                {
                    let b = bundle.as_mut().expect("checked");
                    b.summaries.pop();
                    trimmed += 1;
                    log::warn!(
                        "{} {} pass {pass}: context overflow ({msg}); dropped evidence summary {}",
                        self.question.id,
                        self.mode,
                        b.summaries.len() + 1
                    );
                }
                other => {
                    let out = self.record(other)?;
                    if let Some(last) = self.calls.last_mut() {
                        last.trimmed_summaries = trimmed;
                    }
                    return Ok(out);
                }
            }
        }
    }
}
