//! OpenAI-compatible `/chat/completions` client.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};
use ureq::Agent;

use super::{BackendProfile, CallTag, ChatBackend, ChatRequest, ChatResponse, GatewayError};

/// The JSON body sent for `request`.
pub fn wire_payload(request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "messages": request.messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u32>,
    #[serde(default)]
    completion_tokens: Option<u32>,
}

/// Blocking client for any endpoint speaking the chat-completions shape.
#[derive(Debug)]
pub struct OpenAiCompatibleBackend {
    profile: BackendProfile,
    agent: Agent,
}

impl OpenAiCompatibleBackend {
    pub fn new(profile: BackendProfile) -> Result<Self, GatewayError> {
        profile.validate()?;
        let agent = Agent::new_with_config(
            Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(profile.timeout_secs)))
                .build(),
        );
        Ok(Self { profile, agent })
    }

    fn url(&self) -> String {
        let base = self.profile.endpoint.trim_end_matches('/');
        if base.ends_with("chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        match &self.profile.auth_env_var {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .ok()
                .filter(|k| !k.is_empty())
                .map(Some)
                .ok_or_else(|| GatewayError::MissingCredential(var.clone())),
        }
    }
}

/// Map a non-success status to a gateway error.
fn classify_status(status: u16, body: &str) -> GatewayError {
    let message = error_message(body);
    let lower = body.to_ascii_lowercase();
    match status {
        401 | 403 => GatewayError::Auth { status, message },
        429 => GatewayError::RateLimited(message),
        400 | 413
            if lower.contains("context_length_exceeded")
                || lower.contains("maximum context length")
                || lower.contains("too many tokens") =>
        {
            GatewayError::ContextOverflow(message)
        }
        500..=599 => GatewayError::Network(format!("HTTP {status}: {message}")),
        _ => GatewayError::Rejected { status, message },
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.chars().take(300).collect())
}

fn parse_reply(body: &str, latency_ms: u64) -> Result<ChatResponse, GatewayError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let content = wire
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| GatewayError::MalformedResponse("no choices[0].message.content".into()))?;
    let (prompt_tokens, completion_tokens, usage_missing) = match wire.usage {
        Some(WireUsage { prompt_tokens: Some(p), completion_tokens: Some(c) }) => (p, c, false),
        _ => (0, 0, true),
    };
    Ok(ChatResponse { content, prompt_tokens, completion_tokens, latency_ms, usage_missing })
}

impl ChatBackend for OpenAiCompatibleBackend {
    fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    fn send(&self, request: &ChatRequest, _tag: &CallTag) -> Result<ChatResponse, GatewayError> {
        let mut call = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = self.api_key()? {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let started = Instant::now();
        let mut response = call
            .send_json(wire_payload(request))
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &body));
        }
        parse_reply(&body, latency_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    #[test]
    fn payload_carries_default_sampling() {
        let req = ChatRequest::new("gpt-4o-mini", vec![ChatMessage::user("hi")]);
        let body = wire_payload(&req);
        assert_eq!(body["temperature"], json!(0.1));
        assert_eq!(body["max_tokens"], json!(1000));
        assert_eq!(body["messages"][0]["role"], json!("user"));
        assert!(body.get("seed").is_none());
    }

    #[test]
    fn usage_absent_is_flagged_not_estimated() {
        let r = parse_reply(r#"{"choices":[{"message":{"content":"Final Answer: A"}}]}"#, 5).unwrap();
        assert_eq!((r.prompt_tokens, r.completion_tokens, r.usage_missing), (0, 0, true));
        let r = parse_reply(
            r#"{"choices":[{"message":{"content":"x"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#,
            5,
        )
        .unwrap();
        assert_eq!((r.prompt_tokens, r.completion_tokens, r.usage_missing), (12, 3, false));
    }

    #[test]
    fn missing_content_is_malformed() {
        assert!(matches!(parse_reply(r#"{"choices":[]}"#, 0), Err(GatewayError::MalformedResponse(_))));
        assert!(matches!(parse_reply("<html>", 0), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn statuses_map_to_error_classes() {
        assert!(matches!(classify_status(401, "{}"), GatewayError::Auth { .. }));
        assert!(matches!(classify_status(403, "{}"), GatewayError::Auth { .. }));
        assert!(matches!(classify_status(429, "{}"), GatewayError::RateLimited(_)));
        assert!(matches!(
            classify_status(400, r#"{"error":{"code":"context_length_exceeded","message":"too long"}}"#),
            GatewayError::ContextOverflow(m) if m == "too long"
        ));
        assert!(matches!(classify_status(503, ""), GatewayError::Network(_)));
        assert!(matches!(classify_status(404, ""), GatewayError::Rejected { status: 404, .. }));
    }
}
