//! Topic → category → expert role prompt registry.
//!
//! Role prompts are persona sentences of the form "You are a(n) … expert"
//! followed by one or two responsibilities. They are applied only when
//! building Expert Reviewer requests.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendProfile, ChatMessage};

/// Role used when a topic has no registered prompt.
pub const FALLBACK_ROLE: &str =
    "You are a finance expert skilled in quantitative reasoning and financial analysis.";

const BUILTIN_REGISTRY: &str = include_str!("../data/roles.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "Investments & Valuation")]
    InvestmentsValuation,
    #[serde(rename = "Income & Interest")]
    IncomeInterest,
    #[serde(rename = "Financial Statements & Analysis")]
    FinancialStatements,
    #[serde(rename = "Derivatives & Risk Management")]
    DerivativesRisk,
    #[serde(rename = "Corporate Finance & Capital Management")]
    CorporateFinance,
    #[serde(rename = "Taxation & Payroll")]
    TaxationPayroll,
    #[serde(rename = "Budgeting & Personal Finance")]
    BudgetingPersonal,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::InvestmentsValuation,
        Category::IncomeInterest,
        Category::FinancialStatements,
        Category::DerivativesRisk,
        Category::CorporateFinance,
        Category::TaxationPayroll,
        Category::BudgetingPersonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::InvestmentsValuation => "Investments & Valuation",
            Category::IncomeInterest => "Income & Interest",
            Category::FinancialStatements => "Financial Statements & Analysis",
            Category::DerivativesRisk => "Derivatives & Risk Management",
            Category::CorporateFinance => "Corporate Finance & Capital Management",
            Category::TaxationPayroll => "Taxation & Payroll",
            Category::BudgetingPersonal => "Budgeting & Personal Finance",
        }
    }

    /// Abbreviated label for chart axes.
    pub fn short_label(self) -> &'static str {
        match self {
            Category::InvestmentsValuation => "Invest. & Val",
            Category::IncomeInterest => "Income & Interest",
            Category::FinancialStatements => "Fin. Stmts. & Analysis",
            Category::DerivativesRisk => "Deriv. & Risk Mgmt",
            Category::CorporateFinance => "Corp. Fin. & Cap. Mgmt",
            Category::TaxationPayroll => "Tax & Payroll",
            Category::BudgetingPersonal => "Budgeting & Pers. Finance",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(name.trim()))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub topic: String,
    pub category: Category,
    pub role_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RolePrompt {
    pub topic: String,
    pub text: String,
    /// The topic was not registered and a generic role was substituted.
    pub fallback: bool,
}

#[derive(Debug, Error)]
pub enum RoleError {
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("registry entry {index} ({topic:?}): {message}")]
    Schema { index: usize, topic: String, message: String },
    #[error("registry file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize)]
struct RegistryFile {
    role: Vec<TopicEntry>,
}

fn role_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"^You are an? [^.]*?\b(?:expert|analyst|specialist|manager|strategist)\b[,]?\s+(\S+(?:\s+\S+){2,})")
            .expect("role pattern")
    })
}

/// Persona opener plus at least a three-word responsibility clause.
pub fn conforms_to_role_pattern(text: &str) -> bool {
    role_pattern().is_match(text.trim())
}

fn key(topic: &str) -> String {
    topic.trim().to_lowercase()
}

/// Immutable topic registry.
#[derive(Debug, Clone)]
pub struct RoleRegistry {
    entries: Vec<TopicEntry>,
    lookup: HashMap<String, usize>,
    strict: bool,
}

impl RoleRegistry {
    /// The shipped registry of 82 topics.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_REGISTRY).expect("built-in role registry is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RoleError> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| RoleError::Parse(e.to_string()))?;
        Self::from_entries(file.role)
    }

    /// JSON form: an array of entries, or an object with a `role` array.
    pub fn from_json_str(text: &str) -> Result<Self, RoleError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| RoleError::Parse(e.to_string()))?;
        let entries = match value {
            serde_json::Value::Object(mut map) if map.contains_key("role") => map.remove("role").unwrap_or_default(),
            other => other,
        };
        let entries: Vec<TopicEntry> = serde_json::from_value(entries).map_err(|e| RoleError::Parse(e.to_string()))?;
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self, RoleError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn from_entries(entries: Vec<TopicEntry>) -> Result<Self, RoleError> {
        let mut lookup = HashMap::new();
        for (index, entry) in entries.iter().enumerate() {
            let fail = |message: String| RoleError::Schema { index, topic: entry.topic.clone(), message };
            if entry.topic.trim().is_empty() {
                return Err(fail("topic is empty".into()));
            }
            if !conforms_to_role_pattern(&entry.role_text) {
                return Err(fail(format!("role_text does not follow the persona pattern: {:?}", entry.role_text)));
            }
            for name in std::iter::once(&entry.topic).chain(&entry.aliases) {
                if lookup.insert(key(name), index).is_some_and(|prev| prev != index) {
                    return Err(fail(format!("name {name:?} is registered twice")));
                }
            }
        }
        Ok(Self { entries, lookup, strict: false })
    }

    /// In strict mode unknown topics resolve to an empty role instead of the
    /// generic fallback.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn entries(&self) -> &[TopicEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, topic: &str) -> Option<&TopicEntry> {
        self.lookup.get(&key(topic)).map(|&i| &self.entries[i])
    }

    pub fn resolve_role(&self, topic: &str) -> RolePrompt {
        match self.get(topic) {
            Some(entry) => RolePrompt { topic: entry.topic.clone(), text: entry.role_text.clone(), fallback: false },
            None => {
                log::warn!("no role prompt for topic {topic:?}; using fallback");
                RolePrompt {
                    topic: topic.to_string(),
                    text: if self.strict { String::new() } else { FALLBACK_ROLE.to_string() },
                    fallback: true,
                }
            }
        }
    }

    pub fn category_of(&self, topic: &str) -> Result<Category, RoleError> {
        self.get(topic).map(|e| e.category).ok_or_else(|| RoleError::UnknownTopic(topic.to_string()))
    }

    pub fn counts_by_category(&self) -> BTreeMap<Category, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.category).or_insert(0) += 1;
        }
        counts
    }
}

/// Wrap `user_body` with the role for a backend: as a system message when
/// supported, otherwise prepended to the user turn.
pub fn apply_role(backend: &BackendProfile, role: &RolePrompt, user_body: &str) -> Vec<ChatMessage> {
    if role.text.is_empty() {
        return vec![ChatMessage::user(user_body)];
    }
    if backend.supports_system_prompt {
        vec![ChatMessage::system(role.text.clone()), ChatMessage::user(user_body)]
    } else {
        vec![ChatMessage::user(format!("{}\n\n{}", role.text, user_body))]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatRole;

    #[test]
    fn builtin_matches_table_counts() {
        let reg = RoleRegistry::builtin();
        assert_eq!(reg.len(), 82);
        let counts: Vec<usize> = Category::ALL.iter().map(|c| reg.counts_by_category()[c]).collect();
        assert_eq!(counts, vec![21, 14, 10, 10, 11, 7, 9]);
        assert!(reg.entries().iter().all(|e| conforms_to_role_pattern(&e.role_text)));
    }

    #[test]
    fn sample_prompts_resolve_verbatim() {
        let reg = RoleRegistry::builtin();
        assert_eq!(
            reg.resolve_role("Dividend").text,
            "You are a dividend-policy expert, proficient in dividend strategies and payout analysis."
        );
        assert_eq!(
            reg.resolve_role("Bonds").text,
            "You are a bond-market expert with deep knowledge of fixed-income valuation."
        );
        assert!(!reg.resolve_role("bonds").fallback);
    }

    #[test]
    fn unknown_topic_falls_back() {
        let reg = RoleRegistry::builtin();
        let role = reg.resolve_role("Quantum finance");
        assert!(role.fallback);
        assert_eq!(role.text, FALLBACK_ROLE);
        assert!(reg.clone().strict(true).resolve_role("Quantum finance").text.is_empty());
    }

    #[test]
    fn categories_follow_table() {
        let reg = RoleRegistry::builtin();
        assert_eq!(reg.category_of("Compound interest").unwrap(), Category::IncomeInterest);
        assert_eq!(reg.category_of("Payroll tax").unwrap(), Category::TaxationPayroll);
        assert_eq!(reg.category_of("Weighted average cost of capital").unwrap(), Category::CorporateFinance);
        assert!(matches!(reg.category_of("Astrology"), Err(RoleError::UnknownTopic(_))));
    }

    #[test]
    fn apply_role_respects_system_support() {
        let reg = RoleRegistry::builtin();
        let role = reg.resolve_role("Credit");
        let mut profile = BackendProfile::new("b", "https://x.test", "m");
        let msgs = apply_role(&profile, &role, "body");
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, ChatRole::System);
        assert_eq!(msgs[1].content, "body");

        profile.supports_system_prompt = false;
        let msgs = apply_role(&profile, &role, "body");
        assert_eq!(msgs.len(), 1);
        assert!(msgs[0].content.starts_with(&role.text));
        assert!(msgs[0].content.ends_with("\n\nbody"));
    }

    #[test]
    fn empty_role_passes_body_through() {
        let role = RolePrompt { topic: "x".into(), text: String::new(), fallback: true };
        let msgs = apply_role(&BackendProfile::new("b", "https://x.test", "m"), &role, "body");
        assert_eq!(msgs, vec![ChatMessage::user("body")]);
    }

    #[test]
    fn schema_errors_name_the_entry() {
        let bad = r#"
            [[role]]
            topic = "Loan"
            category = "Income & Interest"
            role_text = "Loans are great."
        "#;
        assert!(matches!(RoleRegistry::from_toml_str(bad), Err(RoleError::Schema { index: 0, .. })));
        let bad_cat = r#"
            [[role]]
            topic = "Loan"
            category = "Astrology"
            role_text = "You are a lending specialist who structures loans."
        "#;
        assert!(matches!(RoleRegistry::from_toml_str(bad_cat), Err(RoleError::Parse(_))));
        let json = r#"[{"topic":"Loan","category":"Income & Interest","role_text":"You are a lending specialist who structures loans and payments."}]"#;
        assert_eq!(RoleRegistry::from_json_str(json).unwrap().len(), 1);
    }
}
