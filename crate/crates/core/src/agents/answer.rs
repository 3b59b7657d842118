use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::questions::Letter;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no answer letter could be extracted")]
pub struct Unparseable;

fn sentinel_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i:final\s+answer)[\s:*\-–—=]*(?i:option\s*)?\(?([A-D])").expect("sentinel pattern")
    })
}

fn paren_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([A-D])\)").expect("paren pattern"))
}

fn line_start_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*([A-D])\.(?:\s|$)").expect("line pattern"))
}

fn at_boundary(raw: &str, end: usize) -> bool {
    raw[end..].chars().next().is_none_or(|c| !c.is_alphanumeric())
}

/// Location of the last valid sentinel match: (match start, letter).
fn last_sentinel(raw: &str) -> Option<(usize, Letter)> {
    sentinel_re()
        .captures_iter(raw)
        .filter_map(|c| {
            let m = c.get(1)?;
            if !at_boundary(raw, m.end()) {
                return None;
            }
            Some((c.get(0)?.start(), Letter::from_char(m.as_str().chars().next()?)?))
        })
        .last()
}

fn last_fallback(raw: &str) -> Option<Letter> {
    let paren = paren_re().captures_iter(raw).filter_map(|c| c.get(1)).last();
    let line = line_start_re().captures_iter(raw).filter_map(|c| c.get(1)).last();
    let m = match (paren, line) {
        (Some(a), Some(b)) => {
            if a.start() > b.start() {
                a
            } else {
                b
            }
        }
        (a, b) => a.or(b)?,
    };
    Letter::from_char(m.as_str().chars().next()?)
}

/// Pull the chosen option out of a model reply.
///
/// The last "Final Answer" sentinel followed by a letter wins. Without one,
/// the last standalone "(X)" or line-leading "X." is used.
pub fn extract_answer(raw: &str) -> Result<Letter, Unparseable> {
    last_sentinel(raw).map(|(_, l)| l).or_else(|| last_fallback(raw)).ok_or(Unparseable)
}

/// A parsed Base Generator reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorOutput {
    /// `None` when the reply was unparseable; such answers score incorrect.
    pub answer: Option<Letter>,
    pub reasoning: String,
    pub raw: String,
}

impl GeneratorOutput {
    pub fn parse(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let answer = extract_answer(&raw).ok();
        let reasoning = match last_sentinel(&raw) {
            Some((start, _)) => {
                let line_end = raw[start..].find('\n').map_or(raw.len(), |i| start + i);
                let mut text = raw[..start].trim_end().to_string();
                let rest = raw[line_end..].trim();
                if !rest.is_empty() {
                    text.push('\n');
                    text.push_str(rest);
                }
                text
            }
            None => raw.trim().to_string(),
        };
        Self { answer, reasoning, raw }
    }

    pub fn letter(&self) -> Result<Letter, Unparseable> {
        self.answer.ok_or(Unparseable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_and_reasoning() {
        let out = GeneratorOutput::parse("Compute 140+35-60-18+12.\ntherefore 109. Final Answer: B");
        assert_eq!(out.answer, Some(Letter::B));
        assert_eq!(out.reasoning, "Compute 140+35-60-18+12.\ntherefore 109.");
        let out = GeneratorOutput::parse("Work.\nFinal Answer: C\n");
        assert_eq!(out.reasoning, "Work.");
    }

    #[test]
    fn last_sentinel_wins() {
        assert_eq!(extract_answer("Final Answer: A … wait, Final Answer: C"), Ok(Letter::C));
    }

    #[test]
    fn fallback_patterns() {
        assert_eq!(extract_answer("The answer is definitely option (D)"), Ok(Letter::D));
        assert_eq!(extract_answer("Reasoning...\nB. $109,000 is right"), Ok(Letter::B));
        assert_eq!(extract_answer("no letter here"), Err(Unparseable));
        assert_eq!(GeneratorOutput::parse("no letter").answer, None);
    }
}
