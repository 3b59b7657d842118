use finqa_core::agents::{AgentError, TemplateError};
use finqa_core::config::ConfigError;
use finqa_core::gateway::GatewayError;
use finqa_core::harness::HarnessError;
use finqa_core::index::IndexError;
use finqa_core::pipeline::PipelineError;
use finqa_core::questions::{ConversionError, QuestionError};
use finqa_core::roles::RoleError;
use serde_json::json;
use thiserror::Error;

/// Failure classes and their exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// Bad flags or arguments.
    Usage = 1,
    /// Missing or invalid configuration, inputs or external dependencies.
    Dependency = 2,
    /// Failure while doing the work.
    Runtime = 3,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub class: ExitClass,
    pub kind: &'static str,
    pub message: String,
    pub locator: Option<String>,
}

impl CliError {
    pub fn new(class: ExitClass, kind: &'static str, message: impl Into<String>) -> Self {
        Self { class, kind, message: message.into(), locator: None }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitClass::Usage, "usage", message)
    }

    pub fn dependency(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(ExitClass::Dependency, kind, message)
    }

    pub fn runtime(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(ExitClass::Runtime, kind, message)
    }

    fn at(mut self, locator: Option<&str>) -> Self {
        self.locator = locator.map(str::to_string);
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.class as i32
    }

    pub fn to_json(&self) -> String {
        let mut err = json!({ "code": self.exit_code(), "kind": self.kind, "message": self.message });
        if let Some(l) = &self.locator {
            err["locator"] = json!(l);
        }
        json!({ "error": err }).to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime("io", e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::dependency("config", e.to_string())
    }
}

impl From<RoleError> for CliError {
    fn from(e: RoleError) -> Self {
        let kind = match e {
            RoleError::UnknownTopic(_) => "unknown_topic",
            _ => "registry",
        };
        CliError::dependency(kind, e.to_string())
    }
}

impl From<QuestionError> for CliError {
    fn from(e: QuestionError) -> Self {
        let locator = e.pointer().map(str::to_string);
        CliError::dependency("question_set", e.to_string()).at(locator.as_deref())
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        CliError::dependency("template", e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Io(_) | IndexError::Format(_) | IndexError::EmptyCorpus | IndexError::EmptyDocument(_) => {
                CliError::dependency("index", e.to_string())
            }
            IndexError::Provider(_) => CliError::dependency("embedding_provider", e.to_string()),
            _ => CliError::runtime("index", e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::MissingCredential(_) | GatewayError::Auth { .. } | GatewayError::Config(_) => {
                CliError::dependency(e.kind(), e.to_string())
            }
            _ => CliError::runtime(e.kind(), e.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Gateway(g) => g.into(),
            AgentError::Index(i) => i.into(),
            AgentError::Template(t) => t.into(),
            AgentError::BothAbsent => CliError::runtime("agent", e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::MissingDependency { .. } => CliError::dependency("missing_dependency", e.to_string()),
            PipelineError::Agent { source, partial } => {
                let inner = CliError::from(source);
                CliError { message: format!("{} {}: {}", partial.question_id, partial.mode, inner.message), ..inner }
            }
            PipelineError::InvalidTrace(_) => CliError::runtime("invalid_trace", e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Dependency(p) => p.into(),
            HarnessError::Config(_) => CliError::usage(e.to_string()),
            HarnessError::Schema { line, .. } => {
                CliError::dependency("results_schema", e.to_string()).at(Some(&format!("line {line}")))
            }
            HarnessError::ResumeMismatch(_) => CliError::dependency("resume_mismatch", e.to_string()),
            HarnessError::UnsupportedFormat(_) => CliError::usage(e.to_string()),
            HarnessError::Io(_) => CliError::runtime("io", e.to_string()),
        }
    }
}

impl From<ConversionError> for CliError {
    fn from(e: ConversionError) -> Self {
        match e {
            ConversionError::Agent(a) => a.into(),
            ConversionError::Json(_) | ConversionError::Io(_) | ConversionError::Table { .. } => {
                CliError::dependency("free_response", e.to_string())
            }
            _ => CliError::runtime("conversion", e.to_string()),
        }
    }
}
