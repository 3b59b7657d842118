//! Results JSONL schema: one header line, then one line per
//! (question, mode) pair.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::pipeline::Mode;
use crate::questions::Letter;
use crate::roles::Category;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsHeader {
    pub schema_version: u32,
    pub started_at: String,
    pub set: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

/// A scored prediction: a letter, or `invalid` when none could be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Predicted {
    Letter(Letter),
    Invalid,
}

impl From<Predicted> for String {
    fn from(p: Predicted) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Predicted {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "invalid" {
            return Ok(Predicted::Invalid);
        }
        s.parse::<Letter>().map(Predicted::Letter).map_err(|_| format!("bad prediction {s:?}"))
    }
}

impl fmt::Display for Predicted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicted::Letter(l) => write!(f, "{l}"),
            Predicted::Invalid => f.write_str("invalid"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultStatus {
    Ok,
    Invalid,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub mode: Mode,
    pub category: Option<Category>,
    pub ground_truth: Letter,
    /// `None` for errored runs.
    pub predicted: Option<Predicted>,
    pub correct: bool,
    pub status: ResultStatus,
    pub calls: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub usage_missing: bool,
    pub trace_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QuestionResult {
    /// Check internal consistency of a line read from disk.
    pub fn validate(&self) -> Result<(), String> {
        let expected_status = match self.predicted {
            None => ResultStatus::Errored,
            Some(Predicted::Invalid) => ResultStatus::Invalid,
            Some(Predicted::Letter(_)) => ResultStatus::Ok,
        };
        if self.status != expected_status {
            return Err(format!("status {:?} does not match prediction {:?}", self.status, self.predicted));
        }
        if self.correct != (self.predicted == Some(Predicted::Letter(self.ground_truth))) {
            return Err("correct flag disagrees with prediction and ground truth".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ResultLine {
    Header(ResultsHeader),
    Result(QuestionResult),
}

impl ResultLine {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("result line serializes");
        s.push('\n');
        s
    }
}

/// A parsed results file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultsFile {
    pub header: ResultsHeader,
    pub results: Vec<QuestionResult>,
}

/// Parse results text. With `tolerate_partial`, an unterminated last line is
/// ignored (an interrupted writer); otherwise every line must parse.
pub fn parse_results(text: &str, tolerate_partial: bool) -> Result<ResultsFile, HarnessError> {
    let body = match (tolerate_partial, text.rfind('\n')) {
        (true, Some(i)) => &text[..=i],
        (true, None) => "",
        (false, _) => text,
    };
    let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let schema = |line: usize, message: String| HarnessError::Schema { line, message };
    let (n, first) = lines.next().ok_or_else(|| schema(1, "results file is empty".into()))?;
    let header = match serde_json::from_str::<ResultLine>(first).map_err(|e| schema(n + 1, e.to_string()))? {
        ResultLine::Header(h) => h,
        ResultLine::Result(_) => return Err(schema(n + 1, "first line must be the header".into())),
    };
    if header.schema_version != RESULTS_SCHEMA_VERSION {
        return Err(schema(n + 1, format!("unsupported schema version {}", header.schema_version)));
    }
    let mut results = Vec::new();
    for (n, line) in lines {
        match serde_json::from_str::<ResultLine>(line).map_err(|e| schema(n + 1, e.to_string()))? {
            ResultLine::Result(r) => {
                r.validate().map_err(|m| schema(n + 1, m))?;
                results.push(r);
            }
            ResultLine::Header(_) => return Err(schema(n + 1, "unexpected second header".into())),
        }
    }
    Ok(ResultsFile { header, results })
}

pub fn read_results(path: &Path) -> Result<ResultsFile, HarnessError> {
    parse_results(&std::fs::read_to_string(path)?, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        ResultLine::Header(ResultsHeader {
            schema_version: 1,
            started_at: "2026-01-01T00:00:00Z".into(),
            set: "s".into(),
            seed: 1,
            backend: None,
            model: None,
        })
        .to_json_line()
    }

    fn result(predicted: Option<Predicted>) -> QuestionResult {
        let status = match predicted {
            None => ResultStatus::Errored,
            Some(Predicted::Invalid) => ResultStatus::Invalid,
            _ => ResultStatus::Ok,
        };
        QuestionResult {
            question_id: "q".into(),
            mode: Mode::M0,
            category: Some(Category::TaxationPayroll),
            ground_truth: Letter::B,
            predicted,
            correct: predicted == Some(Predicted::Letter(Letter::B)),
            status,
            calls: 1,
            prompt_tokens: 10,
            completion_tokens: 2,
            usage_missing: false,
            trace_ref: "abc".into(),
            error: None,
        }
    }

    #[test]
    fn line_shapes() {
        let line = ResultLine::Result(result(Some(Predicted::Invalid))).to_json_line();
        assert!(line.starts_with("{\"type\":\"result\",\"question_id\":\"q\",\"mode\":\"M0\""));
        assert!(line.contains("\"predicted\":\"invalid\""));
        assert!(line.contains("\"category\":\"Taxation & Payroll\""));
        let errored = ResultLine::Result(result(None)).to_json_line();
        assert!(errored.contains("\"predicted\":null"));
        assert!(header().starts_with("{\"type\":\"header\",\"schema_version\":1"));
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let text = format!("{}{}", header(), ResultLine::Result(result(Some(Predicted::Letter(Letter::B)))).to_json_line());
        let file = parse_results(&text, false).unwrap();
        assert_eq!(file.results.len(), 1);
        assert!(file.results[0].correct);

        assert!(matches!(parse_results("", false), Err(HarnessError::Schema { .. })));
        let partial = format!("{}{{\"type\":\"res", header());
        assert!(parse_results(&partial, false).is_err());
        assert_eq!(parse_results(&partial, true).unwrap().results.len(), 0);

        let mut bad = result(Some(Predicted::Letter(Letter::A)));
        bad.correct = true;
        let text = format!("{}{}", header(), ResultLine::Result(bad).to_json_line());
        assert!(matches!(parse_results(&text, false), Err(HarnessError::Schema { line: 2, .. })));
    }
}
