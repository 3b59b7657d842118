//! Backend-agnostic chat-completion client.
//!
//! Every agent talks to a model through [`Gateway::complete`]. The gateway
//! validates the request, applies the rate limit and the retry policy, and
//! hands the request to a [`ChatBackend`]: either the OpenAI-compatible HTTP
//! client in [`http`] or the deterministic [`ScriptedBackend`] used in tests.

mod http;
mod retry;
mod scripted;

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::http::{wire_payload, OpenAiCompatibleBackend};
pub use self::retry::RetryPolicy;
pub use self::scripted::{scripted_backend, LoggedCall, ScriptedBackend};

/// Sampling temperature applied when a request does not override it.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
/// Completion token cap applied when a request does not override it.
pub const DEFAULT_MAX_TOKENS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

/// A single chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// A request with the default temperature and token cap.
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |msg: &str| Err(GatewayError::InvalidRequest(msg.to_string()));
        if self.messages.is_empty() {
            return invalid("request has no messages");
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return invalid("message content is empty");
        }
        let systems = self.messages.iter().filter(|m| m.role == ChatRole::System).count();
        if systems > 1 {
            return invalid("more than one system message");
        }
        if systems == 1 && self.messages[0].role != ChatRole::System {
            return invalid("system message must come first");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return invalid("temperature outside [0, 2]");
        }
        if self.max_tokens == 0 {
            return invalid("max_tokens must be positive");
        }
        Ok(())
    }

    /// Whitespace word count across all message bodies.
    pub fn word_count(&self) -> usize {
        self.messages.iter().map(|m| m.content.split_whitespace().count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub latency_ms: u64,
    /// The backend did not report usage; token counts are zero, not estimates.
    #[serde(default)]
    pub usage_missing: bool,
}

/// Connection settings for one chat backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub name: String,
    pub endpoint: String,
    /// Environment variable holding the API key. The key itself never lives
    /// in a config file.
    #[serde(default)]
    pub auth_env_var: Option<String>,
    pub model: String,
    #[serde(default = "default_true")]
    pub supports_system_prompt: bool,
    /// Optional client-side request rate cap.
    #[serde(default)]
    pub requests_per_second: Option<f64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_true() -> bool {
    true
}

fn default_timeout_secs() -> u64 {
    120
}

impl BackendProfile {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint: endpoint.into(),
            auth_env_var: None,
            model: model.into(),
            supports_system_prompt: true,
            requests_per_second: None,
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let uri: ureq::http::Uri = self
            .endpoint
            .parse()
            .map_err(|e| GatewayError::Config(format!("backend {}: bad endpoint: {e}", self.name)))?;
        let scheme_ok = matches!(uri.scheme_str(), Some("http") | Some("https") | Some("scripted"));
        if !scheme_ok || uri.host().is_none() {
            return Err(GatewayError::Config(format!(
                "backend {}: endpoint must be an http(s) URL, got {:?}",
                self.name, self.endpoint
            )));
        }
        if self.model.trim().is_empty() {
            return Err(GatewayError::Config(format!("backend {}: model is empty", self.name)));
        }
        if let Some(rps) = self.requests_per_second {
            if rps.is_nan() || rps <= 0.0 {
                return Err(GatewayError::Config(format!(
                    "backend {}: requests_per_second must be positive",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Which agent issued a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    /// Base Generator.
    #[serde(rename = "BG")]
    Generator,
    /// Evidence Retriever.
    #[serde(rename = "ER")]
    Retriever,
    /// Expert Reviewer.
    #[serde(rename = "XR")]
    Reviewer,
    /// Distractor generation during question conversion.
    #[serde(rename = "MC")]
    Converter,
}

impl AgentKind {
    pub fn code(self) -> &'static str {
        match self {
            AgentKind::Generator => "BG",
            AgentKind::Retriever => "ER",
            AgentKind::Reviewer => "XR",
            AgentKind::Converter => "MC",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Identifies a call: agent, question id and pass index. Rendered `BG:q17:0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallTag {
    pub agent: AgentKind,
    pub item: String,
    pub pass: u32,
}

impl CallTag {
    pub fn new(agent: AgentKind, item: impl Into<String>, pass: u32) -> Self {
        Self { agent, item: item.into(), pass }
    }

    /// Script keys from most to least specific.
    pub fn lookup_keys(&self) -> [String; 3] {
        [
            format!("{}:{}:{}", self.agent, self.item, self.pass),
            format!("{}:{}", self.agent, self.item),
            self.agent.code().to_string(),
        ]
    }
}

impl fmt::Display for CallTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.agent, self.item, self.pass)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication rejected (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("prompt exceeds the backend context limit: {0}")]
    ContextOverflow(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no scripted response for tag {0}")]
    ScriptMiss(String),
    #[error("backend rejected request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Transient failures that the retry policy may repeat.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Network(_) | GatewayError::RateLimited(_))
    }

    /// Errors that mean the reply could not be used as an answer.
    pub fn is_malformed(&self) -> bool {
        matches!(self, GatewayError::MalformedResponse(_) | GatewayError::ScriptMiss(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Network(_) => "network",
            GatewayError::Auth { .. } => "auth",
            GatewayError::MissingCredential(_) => "missing_credential",
            GatewayError::RateLimited(_) => "rate_limited",
            GatewayError::ContextOverflow(_) => "context_overflow",
            GatewayError::MalformedResponse(_) => "malformed_response",
            GatewayError::ScriptMiss(_) => "script_miss",
            GatewayError::Rejected { .. } => "rejected",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::Config(_) => "config",
        }
    }
}

/// A chat-completion transport. One attempt per call; retries live in
/// [`Gateway`].
pub trait ChatBackend: Send + Sync {
    fn profile(&self) -> &BackendProfile;
    fn send(&self, request: &ChatRequest, tag: &CallTag) -> Result<ChatResponse, GatewayError>;
}

/// Spaces request starts at least `interval` apart.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(requests_per_second: f64) -> Self {
        Self {
            interval: Duration::from_secs_f64(1.0 / requests_per_second),
            next_slot: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + self.interval);
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Shared entry point for every chat call.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    trace_io: bool,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.profile().name)
            .field("retry", &self.retry)
            .field("trace_io", &self.trace_io)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        let limiter = backend
            .profile()
            .requests_per_second
            .map(|rps| Arc::new(RateLimiter::new(rps)));
        Self { backend, retry: RetryPolicy::default(), limiter, trace_io: false }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Keep full request and response bodies in call records.
    pub fn with_trace_io(mut self, trace_io: bool) -> Self {
        self.trace_io = trace_io;
        self
    }

    pub fn trace_io(&self) -> bool {
        self.trace_io
    }

    pub fn profile(&self) -> &BackendProfile {
        self.backend.profile()
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    /// A request for this backend's model with default sampling settings.
    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest::new(self.profile().model.clone(), messages)
    }

    /// Send `request`, retrying transient failures per the retry policy.
    /// The request is never modified.
    pub fn complete(&self, request: &ChatRequest, tag: &CallTag) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        if self.trace_io {
            log::debug!(target: "finqa::io", "{tag} request {}", wire_payload(request));
        }
        let mut attempt = 0u32;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.backend.send(request, tag) {
                Ok(response) => {
                    if self.trace_io {
                        log::debug!(target: "finqa::io", "{tag} response {:?}", response.content);
                    }
                    return Ok(response);
                }
                Err(err) if err.is_retryable() && attempt < self.retry.max_retries => {
                    let delay = self.retry.delay_before_retry(attempt);
                    log::warn!("{tag}: {err}; retry {} in {:?}", attempt + 1, delay);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::system("s"), ChatMessage::user("u")])
    }

    #[test]
    fn defaults_are_applied() {
        let req = ChatRequest::new("m", vec![ChatMessage::user("hi")]);
        assert_eq!(req.temperature, 0.1);
        assert_eq!(req.max_tokens, 1000);
    }

    #[test]
    fn system_message_must_be_first_and_unique() {
        assert!(valid().validate().is_ok());
        let late = ChatRequest::new("m", vec![ChatMessage::user("u"), ChatMessage::system("s")]);
        assert!(matches!(late.validate(), Err(GatewayError::InvalidRequest(_))));
        let twice = ChatRequest::new(
            "m",
            vec![ChatMessage::system("a"), ChatMessage::system("b"), ChatMessage::user("u")],
        );
        assert!(twice.validate().is_err());
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(ChatRequest::new("m", vec![]).validate().is_err());
        assert!(ChatRequest::new("m", vec![ChatMessage::user("")]).validate().is_err());
        assert!(valid().with_temperature(2.5).validate().is_err());
        assert!(valid().with_max_tokens(0).validate().is_err());
        assert!(valid().with_temperature(0.0).validate().is_ok());
    }

    #[test]
    fn profile_endpoint_must_be_http() {
        let mut p = BackendProfile::new("x", "https://api.example.com/v1", "gpt");
        assert!(p.validate().is_ok());
        p.endpoint = "not a url".into();
        assert!(p.validate().is_err());
        p.endpoint = "ftp://host/x".into();
        assert!(p.validate().is_err());
    }

    #[test]
    fn tag_keys_go_from_specific_to_general() {
        let tag = CallTag::new(AgentKind::Generator, "q17", 1);
        assert_eq!(tag.to_string(), "BG:q17:1");
        assert_eq!(tag.lookup_keys(), ["BG:q17:1".to_string(), "BG:q17".into(), "BG".into()]);
    }
}
