//! Run configuration file: backend profiles, embedding endpoint and defaults.
//!
//! Secrets never appear here; profiles name the environment variable that
//! holds each key. Unknown keys are rejected so a pasted `api_key` fails
//! loudly instead of being ignored.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendProfile, RetryPolicy};
use crate::index::{EmbeddingProfile, RetrievalConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("no backend named {0:?} in the configuration")]
    UnknownBackend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub backend: Option<String>,
    pub concurrency: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub chunk_size: Option<usize>,
    pub overlap: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendProfile>,
    #[serde(default)]
    pub embedding: Option<EmbeddingProfile>,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default)]
    pub retry: Option<RetryPolicy>,
    /// Directory of prompt template overrides.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    /// Alternative role registry file.
    #[serde(default)]
    pub roles: Option<PathBuf>,
}

impl AppConfig {
    /// TOML, or JSON for a `.json` extension. Relative paths inside the file
    /// resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let parse_err = |message: String| ConfigError::Parse { path: path.display().to_string(), message };
        let mut cfg: AppConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
        };
        if let Some(base) = path.parent() {
            for p in [&mut cfg.templates_dir, &mut cfg.roles].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: AppConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: "<string>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names = HashSet::new();
        for b in &self.backends {
            b.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !names.insert(b.name.as_str()) {
                return Err(ConfigError::Invalid(format!("backend {:?} is defined twice", b.name)));
            }
        }
        if let Some(name) = &self.defaults.backend {
            if !names.contains(name.as_str()) {
                return Err(ConfigError::UnknownBackend(name.clone()));
            }
        }
        if self.defaults.concurrency == Some(0) {
            return Err(ConfigError::Invalid("defaults.concurrency must be at least 1".into()));
        }
        self.retrieval(None, None, None).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Profile by name, or the default (or only) profile when `name` is None.
    pub fn backend(&self, name: Option<&str>) -> Result<&BackendProfile, ConfigError> {
        let wanted = name.or(self.defaults.backend.as_deref());
        match wanted {
            Some(n) => self.backends.iter().find(|b| b.name == n).ok_or_else(|| ConfigError::UnknownBackend(n.into())),
            None if self.backends.len() == 1 => Ok(&self.backends[0]),
            None if self.backends.is_empty() => Err(ConfigError::Invalid("no backend profiles configured".into())),
            None => Err(ConfigError::Invalid("several backends configured; choose one with --backend".into())),
        }
    }

    /// Retrieval settings: flags win over file defaults, which win over
    /// built-in defaults.
    pub fn retrieval(&self, k: Option<usize>, chunk_size: Option<usize>, overlap: Option<usize>) -> RetrievalConfig {
        let base = RetrievalConfig::default();
        RetrievalConfig {
            k: k.or(self.defaults.k).unwrap_or(base.k),
            chunk_size_words: chunk_size.or(self.defaults.chunk_size).unwrap_or(base.chunk_size_words),
            overlap_words: overlap.or(self.defaults.overlap).unwrap_or(base.overlap_words),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        [defaults]
        backend = "mini"
        concurrency = 2
        k = 5

        [[backend]]
        name = "mini"
        endpoint = "https://api.openai.com/v1"
        model = "gpt-4o-mini"
        auth_env_var = "OPENAI_API_KEY"

        [[backend]]
        name = "local"
        endpoint = "http://localhost:8000/v1"
        model = "llama"
        supports_system_prompt = false
        requests_per_second = 2.0

        [embedding]
        endpoint = "http://localhost:8001/v1"

        [retry]
        max_retries = 2
        initial_delay = 10
        factor = 3.0
    "#;

    #[test]
    fn parses_profiles_and_defaults() {
        let cfg = AppConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.backend(None).unwrap().model, "gpt-4o-mini");
        assert!(!cfg.backend(Some("local")).unwrap().supports_system_prompt);
        assert_eq!(cfg.embedding.as_ref().unwrap().model, "all-MiniLM-L6-v2");
        assert_eq!(cfg.retrieval(None, None, None).k, 5);
        assert_eq!(cfg.retrieval(Some(2), None, None).k, 2);
        assert_eq!(cfg.retry.as_ref().unwrap().max_retries, 2);
        assert!(matches!(cfg.backend(Some("nope")), Err(ConfigError::UnknownBackend(_))));
    }

    #[test]
    fn secrets_and_duplicates_are_rejected() {
        let with_key = SAMPLE.replace("auth_env_var = \"OPENAI_API_KEY\"", "api_key = \"sk-123\"");
        assert!(matches!(AppConfig::from_toml_str(&with_key), Err(ConfigError::Parse { .. })));
        let dup = SAMPLE.replace("name = \"local\"", "name = \"mini\"");
        assert!(matches!(AppConfig::from_toml_str(&dup), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn relative_paths_resolve_against_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("finqa.toml");
        std::fs::write(&path, "templates_dir = \"prompts\"\n").unwrap();
        let cfg = AppConfig::load(&path).unwrap();
        assert_eq!(cfg.templates_dir.unwrap(), dir.path().join("prompts"));
    }
}
