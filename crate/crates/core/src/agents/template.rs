use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {template}: slot {{{{{slot}}}}} has no value")]
    UnresolvedSlot { template: String, slot: String },
    #[error("template {template}: value given for unknown slot {slot:?}")]
    UnknownSlot { template: String, slot: String },
    #[error("template {name}: {source}")]
    Io { name: String, source: std::io::Error },
}

fn slot_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}").expect("slot pattern"))
}

/// A named prompt body with `{{slot}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        Self { name: name.into(), body: body.into() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn slots(&self) -> BTreeSet<&str> {
        slot_re().captures_iter(&self.body).map(|c| c.get(1).expect("group").as_str()).collect()
    }

    /// Fill every slot in one pass. Substituted values are not rescanned, so
    /// braces inside values are safe.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let slots = self.slots();
        if let Some((slot, _)) = values.iter().find(|(k, _)| !slots.contains(k)) {
            return Err(TemplateError::UnknownSlot { template: self.name.clone(), slot: slot.to_string() });
        }
        if let Some(slot) = slots.iter().find(|s| !values.iter().any(|(k, _)| k == *s)) {
            return Err(TemplateError::UnresolvedSlot { template: self.name.clone(), slot: slot.to_string() });
        }
        let rendered = slot_re().replace_all(&self.body, |c: &Captures<'_>| {
            let key = &c[1];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string()).unwrap_or_default()
        });
        Ok(rendered.into_owned())
    }
}

/// The prompt bodies used by the agents and the question converter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub generator: PromptTemplate,
    pub retriever_system: PromptTemplate,
    pub retriever_user: PromptTemplate,
    pub reviewer: PromptTemplate,
    pub distractors: PromptTemplate,
}

const FILES: [&str; 5] = ["generator", "retriever_system", "retriever_user", "reviewer", "distractors"];

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            generator: PromptTemplate::new("generator", include_str!("../../templates/generator.txt")),
            retriever_system: PromptTemplate::new(
                "retriever_system",
                include_str!("../../templates/retriever_system.txt"),
            ),
            retriever_user: PromptTemplate::new("retriever_user", include_str!("../../templates/retriever_user.txt")),
            reviewer: PromptTemplate::new("reviewer", include_str!("../../templates/reviewer.txt")),
            distractors: PromptTemplate::new("distractors", include_str!("../../templates/distractors.txt")),
        }
    }
}

impl TemplateSet {
    /// Defaults overridden by any `<name>.txt` present in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for name in FILES {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path)
                .map_err(|source| TemplateError::Io { name: name.to_string(), source })?;
            *set.slot_mut(name) = PromptTemplate::new(name, body);
        }
        Ok(set)
    }

    fn slot_mut(&mut self, name: &str) -> &mut PromptTemplate {
        match name {
            "generator" => &mut self.generator,
            "retriever_system" => &mut self.retriever_system,
            "retriever_user" => &mut self.retriever_user,
            "reviewer" => &mut self.reviewer,
            _ => &mut self.distractors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_checks_slots() {
        let t = PromptTemplate::new("t", "Q: {{stem}} / {{stem}} [{{x}}]");
        assert_eq!(t.render(&[("stem", "{{x}}"), ("x", "1")]).unwrap(), "Q: {{x}} / {{x}} [1]");
        assert!(matches!(t.render(&[("stem", "s")]), Err(TemplateError::UnresolvedSlot { ref slot, .. }) if slot == "x"));
        assert!(matches!(
            t.render(&[("stem", "s"), ("x", "1"), ("y", "2")]),
            Err(TemplateError::UnknownSlot { .. })
        ));
    }

    #[test]
    fn default_slots() {
        let set = TemplateSet::default();
        assert_eq!(set.generator.slots(), BTreeSet::from(["context", "options", "stem"]));
        assert!(set.retriever_system.slots().is_empty());
        assert_eq!(set.retriever_user.slots(), BTreeSet::from(["chunks", "stem"]));
        assert_eq!(set.reviewer.slots(), BTreeSet::from(["answer", "evidence", "options", "reasoning", "stem"]));
        assert_eq!(set.distractors.slots(), BTreeSet::from(["answer", "stem"]));
    }

    #[test]
    fn directory_overrides_single_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("reviewer.txt"), "Review {{stem}}").unwrap();
        let set = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.reviewer.body(), "Review {{stem}}");
        assert_eq!(set.generator, TemplateSet::default().generator);
    }
}
