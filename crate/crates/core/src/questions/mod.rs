//! Multiple-choice question sets: schema, loading, table linearization and
//! free-response conversion.

mod convert;
mod normalize;
mod table;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::roles::{Category, RoleRegistry};

pub use convert::{
    convert_to_mcq, load_free_response, parse_distractors, ConversionError, ConversionRecord, ConversionReport,
    FreeResponseItem,
};
pub use normalize::{harmonize_display, normalize_answer};
pub use table::{linearize_table, TableError, TableSpec};

/// An option label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn as_char(self) -> char {
        match self {
            Letter::A => 'A',
            Letter::B => 'B',
            Letter::C => 'C',
            Letter::D => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Letter {
    type Err = QuestionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next().and_then(Letter::from_char), chars.next()) {
            (Some(l), None) => Ok(l),
            _ => Err(QuestionError::schema("", format!("{s:?} is not one of A, B, C, D"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("duplicate question id {id:?} at {pointer}")]
    DuplicateId { id: String, pointer: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QuestionError {
    fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        QuestionError::Schema { pointer: pointer.into(), message: message.into() }
    }

    /// JSON-pointer locator of the offending value, when known.
    pub fn pointer(&self) -> Option<&str> {
        match self {
            QuestionError::Schema { pointer, .. } | QuestionError::DuplicateId { pointer, .. } => Some(pointer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub topic: String,
    pub stem: String,
    pub options: BTreeMap<Letter, String>,
    pub ground_truth: Letter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    /// Filled from the role registry at load time. `None` flags an
    /// unregistered topic.
    #[serde(skip)]
    pub category: Option<Category>,
}

impl Question {
    pub fn option(&self, letter: Letter) -> &str {
        self.options.get(&letter).map(String::as_str).unwrap_or("")
    }

    /// "A. …" lines in label order.
    pub fn format_options(&self) -> String {
        self.options.iter().map(|(l, t)| format!("{l}. {t}")).collect::<Vec<_>>().join("\n")
    }

    pub fn is_correct(&self, predicted: Option<Letter>) -> bool {
        predicted == Some(self.ground_truth)
    }

    /// Check the in-memory invariants; `at` prefixes error pointers.
    pub fn validate(&self, at: &str) -> Result<(), QuestionError> {
        if self.id.trim().is_empty() {
            return Err(QuestionError::schema(format!("{at}/id"), "id is empty"));
        }
        let ctx = |field: &str, msg: String| QuestionError::schema(format!("{at}/{field}"), format!("question {:?}: {msg}", self.id));
        if self.topic.trim().is_empty() {
            return Err(ctx("topic", "topic is empty".into()));
        }
        if self.stem.trim().is_empty() {
            return Err(ctx("stem", "stem is empty".into()));
        }
        if self.options.len() != 4 {
            return Err(ctx("options", format!("expected exactly 4 options, found {}", self.options.len())));
        }
        let mut seen = HashSet::new();
        for (letter, text) in &self.options {
            if text.trim().is_empty() {
                return Err(ctx(&format!("options/{letter}"), "option text is empty".into()));
            }
            if !seen.insert(text.trim()) {
                return Err(ctx(&format!("options/{letter}"), format!("option text {text:?} repeats another option")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionSet {
    pub name: String,
    pub source: String,
    pub questions: Vec<Question>,
}

impl QuestionSet {
    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Questions whose topic the registry does not know.
    pub fn unregistered(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter().filter(|q| q.category.is_none())
    }
}

const FIELDS: [&str; 7] = ["id", "topic", "stem", "options", "ground_truth", "hint", "explanation"];

fn required_str<'a>(obj: &'a serde_json::Map<String, Value>, at: &str, field: &str) -> Result<&'a str, QuestionError> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
        Some(Value::String(_)) => Err(QuestionError::schema(format!("{at}/{field}"), format!("{field} is empty"))),
        Some(_) => Err(QuestionError::schema(format!("{at}/{field}"), format!("{field} must be a string"))),
        None => Err(QuestionError::schema(format!("{at}/{field}"), format!("missing field {field}"))),
    }
}

fn optional_str(obj: &serde_json::Map<String, Value>, at: &str, field: &str) -> Result<Option<String>, QuestionError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(QuestionError::schema(format!("{at}/{field}"), format!("{field} must be a string"))),
    }
}

fn parse_question(value: &Value, at: &str) -> Result<Question, QuestionError> {
    let obj = value
        .as_object()
        .ok_or_else(|| QuestionError::schema(at, "question must be an object"))?;
    if let Some(unknown) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(QuestionError::schema(format!("{at}/{unknown}"), format!("unknown field {unknown}")));
    }
    let id = required_str(obj, at, "id")?.to_string();
    let label = format!("question {id:?}");
    let with_id = |e: QuestionError| match e {
        QuestionError::Schema { pointer, message } => {
            QuestionError::Schema { pointer, message: format!("{label}: {message}") }
        }
        other => other,
    };
    let topic = required_str(obj, at, "topic").map_err(with_id)?.to_string();
    let stem = required_str(obj, at, "stem").map_err(with_id)?.to_string();
    let options_value = obj
        .get("options")
        .and_then(Value::as_object)
        .ok_or_else(|| with_id(QuestionError::schema(format!("{at}/options"), "options must be an object keyed A-D")))?;
    let mut options = BTreeMap::new();
    for (key, text) in options_value {
        let letter: Letter = key
            .parse()
            .map_err(|_| with_id(QuestionError::schema(format!("{at}/options"), format!("unexpected option key {key:?}"))))?;
        let text = text.as_str().ok_or_else(|| {
            with_id(QuestionError::schema(format!("{at}/options/{key}"), "option text must be a string"))
        })?;
        options.insert(letter, text.to_string());
    }
    let ground_truth: Letter = required_str(obj, at, "ground_truth")
        .map_err(with_id)?
        .parse()
        .map_err(|e: QuestionError| match e {
            QuestionError::Schema { message, .. } => {
                with_id(QuestionError::schema(format!("{at}/ground_truth"), message))
            }
            other => other,
        })?;
    let question = Question {
        id,
        topic,
        stem,
        options,
        ground_truth,
        hint: optional_str(obj, at, "hint").map_err(with_id)?,
        explanation: optional_str(obj, at, "explanation").map_err(with_id)?,
        category: None,
    };
    question.validate(at)?;
    Ok(question)
}

/// Parse and validate a question set from JSON text.
///
/// Categories are filled from `registry`; unregistered topics are kept but
/// flagged with `category: None`.
pub fn parse_question_set(
    text: &str,
    name: impl Into<String>,
    source: impl Into<String>,
    registry: &RoleRegistry,
) -> Result<QuestionSet, QuestionError> {
    let value: Value = serde_json::from_str(text)?;
    let items = value
        .as_array()
        .ok_or_else(|| QuestionError::schema("", "question set must be a JSON array"))?;
    let mut seen = HashSet::new();
    let mut questions = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let at = format!("/{i}");
        let mut q = parse_question(item, &at)?;
        if !seen.insert(q.id.clone()) {
            return Err(QuestionError::DuplicateId { id: q.id, pointer: format!("{at}/id") });
        }
        q.category = registry.category_of(&q.topic).ok();
        if q.category.is_none() {
            log::warn!("question {:?}: topic {:?} is not registered", q.id, q.topic);
        }
        questions.push(q);
    }
    Ok(QuestionSet { name: name.into(), source: source.into(), questions })
}

pub fn load_question_set(path: &Path, registry: &RoleRegistry) -> Result<QuestionSet, QuestionError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_question_set(&text, name, path.display().to_string(), registry)
}

/// The bundled demo set.
pub fn sample_question_set(registry: &RoleRegistry) -> QuestionSet {
    parse_question_set(include_str!("../../data/sample_questions.json"), "sample", "bundled", registry)
        .expect("bundled sample set is valid")
}

/// Serialize questions in the on-disk format.
pub fn questions_to_json(questions: &[Question]) -> String {
    serde_json::to_string_pretty(questions).expect("questions serialize")
}
