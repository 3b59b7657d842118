use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

use super::{BackendProfile, CallTag, ChatBackend, ChatRequest, ChatResponse, GatewayError};

/// One request seen by a [`ScriptedBackend`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoggedCall {
    pub tag: CallTag,
    pub request: ChatRequest,
}

/// Deterministic backend that answers from a fixed script.
///
/// Script keys are matched against the call tag from most to least specific:
/// `BG:q17:1`, then `BG:q17`, then `BG`. Every request is recorded verbatim.
/// Reported usage is the whitespace word count of the prompt and the reply.
#[derive(Debug)]
pub struct ScriptedBackend {
    profile: BackendProfile,
    script: BTreeMap<String, String>,
    context_limit_words: Option<usize>,
    log: Mutex<Vec<LoggedCall>>,
}

/// Build a scripted backend from `(key, reply)` pairs.
pub fn scripted_backend<K, V>(script: impl IntoIterator<Item = (K, V)>) -> ScriptedBackend
where
    K: Into<String>,
    V: Into<String>,
{
    ScriptedBackend::new(script.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
}

impl ScriptedBackend {
    pub fn new(script: BTreeMap<String, String>) -> Self {
        let mut profile = BackendProfile::new("scripted", "scripted://local", "scripted");
        profile.supports_system_prompt = true;
        Self { profile, script, context_limit_words: None, log: Mutex::new(Vec::new()) }
    }

    /// Load a script from a JSON object of `key -> reply`.
    pub fn from_json_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let script: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn with_system_prompt_support(mut self, supported: bool) -> Self {
        self.profile.supports_system_prompt = supported;
        self
    }

    /// Reject prompts longer than `words` with [`GatewayError::ContextOverflow`].
    pub fn with_context_limit(mut self, words: usize) -> Self {
        self.context_limit_words = Some(words);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.profile.name = name.into();
        self
    }

    /// All requests received so far, in arrival order.
    pub fn calls(&self) -> Vec<LoggedCall> {
        self.log.lock().expect("call log poisoned").clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().expect("call log poisoned").clear();
    }

    fn lookup(&self, tag: &CallTag) -> Option<&String> {
        tag.lookup_keys().iter().find_map(|k| self.script.get(k))
    }
}

impl ChatBackend for ScriptedBackend {
    fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    fn send(&self, request: &ChatRequest, tag: &CallTag) -> Result<ChatResponse, GatewayError> {
        self.log
            .lock()
            .expect("call log poisoned")
            .push(LoggedCall { tag: tag.clone(), request: request.clone() });
        let prompt_words = request.word_count();
        if let Some(limit) = self.context_limit_words {
            if prompt_words > limit {
                return Err(GatewayError::ContextOverflow(format!(
                    "{prompt_words} words exceeds limit of {limit}"
                )));
            }
        }
        let content = self.lookup(tag).ok_or_else(|| GatewayError::ScriptMiss(tag.to_string()))?;
        Ok(ChatResponse {
            content: content.clone(),
            prompt_tokens: prompt_words as u32,
            completion_tokens: content.split_whitespace().count() as u32,
            latency_ms: 0,
            usage_missing: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::{AgentKind, ChatMessage, Gateway};

    fn ask(gw: &Gateway, tag: CallTag) -> Result<ChatResponse, GatewayError> {
        let req = gw.request(vec![ChatMessage::user("question")]);
        gw.complete(&req, &tag)
    }

    #[test]
    fn replies_by_tag_and_logs_every_call() {
        let backend = Arc::new(scripted_backend([("BG", "x")]));
        let gw = Gateway::new(backend.clone());
        for _ in 0..2 {
            let r = ask(&gw, CallTag::new(AgentKind::Generator, "q1", 0)).unwrap();
            assert_eq!(r.content, "x");
        }
        assert_eq!(backend.calls().len(), 2);
    }

    #[test]
    fn specific_keys_win() {
        let backend = Arc::new(scripted_backend([
            ("BG", "generic"),
            ("BG:q17", "…Final Answer: B"),
            ("BG:q17:1", "second pass"),
        ]));
        let gw = Gateway::new(backend);
        assert_eq!(ask(&gw, CallTag::new(AgentKind::Generator, "q17", 0)).unwrap().content, "…Final Answer: B");
        assert_eq!(ask(&gw, CallTag::new(AgentKind::Generator, "q17", 1)).unwrap().content, "second pass");
        assert_eq!(ask(&gw, CallTag::new(AgentKind::Generator, "q3", 0)).unwrap().content, "generic");
    }

    #[test]
    fn empty_script_is_a_miss() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::new(BTreeMap::new())));
        let err = ask(&gw, CallTag::new(AgentKind::Reviewer, "q1", 0)).unwrap_err();
        assert_eq!(err, GatewayError::ScriptMiss("XR:q1:0".into()));
        assert!(err.is_malformed());
    }

    #[test]
    fn same_script_same_output() {
        let run = || {
            let gw = Gateway::new(Arc::new(scripted_backend([("ER", "1. a\n2. b")])));
            ask(&gw, CallTag::new(AgentKind::Retriever, "q9", 0)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn context_limit_overflows() {
        let gw = Gateway::new(Arc::new(scripted_backend([("BG", "x")]).with_context_limit(0)));
        let err = ask(&gw, CallTag::new(AgentKind::Generator, "q", 0)).unwrap_err();
        assert!(matches!(err, GatewayError::ContextOverflow(_)));
    }

    #[test]
    fn loads_script_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, r#"{"XR": "looks fine"}"#).unwrap();
        let gw = Gateway::new(Arc::new(ScriptedBackend::from_json_file(&path).unwrap()));
        assert_eq!(ask(&gw, CallTag::new(AgentKind::Reviewer, "q", 0)).unwrap().content, "looks fine");
    }
}
