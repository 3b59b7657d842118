//! Answer-text normalization for collision checks between options.

use std::sync::OnceLock;

use regex::Regex;

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(-?)(\d+)(?:\.(\d+))?$").expect("number pattern"))
}

fn unit_shift(word: &str) -> Option<usize> {
    match word {
        "thousand" => Some(3),
        "million" => Some(6),
        "billion" => Some(9),
        _ => None,
    }
}

/// Canonical decimal string for `sign int . frac` scaled by 10^shift.
/// Shifting the digit string keeps the result exact.
fn canonical_number(sign: &str, int: &str, frac: &str, shift: usize) -> String {
    let mut digits = format!("{int}{frac}");
    let mut point = int.len() + shift;
    while digits.len() < point {
        digits.push('0');
    }
    let (i, f) = digits.split_at(point);
    let i = i.trim_start_matches('0');
    let f = f.trim_end_matches('0');
    point = i.len();
    let body = match (point, f.is_empty()) {
        (0, true) => return "0".to_string(),
        (0, false) => format!("0.{f}"),
        (_, true) => i.to_string(),
        (_, false) => format!("{i}.{f}"),
    };
    format!("{sign}{body}")
}

fn parse_number(token: &str) -> Option<(String, String, String)> {
    let caps = number_re().captures(token)?;
    Some((
        caps[1].to_string(),
        caps[2].to_string(),
        caps.get(3).map_or(String::new(), |m| m.as_str().to_string()),
    ))
}

/// Collision-check form of an answer: trimmed, case-folded, `$` and `,`
/// removed, whitespace collapsed, numbers canonicalized and unit words
/// folded into the preceding number ("109 thousand" → "109000").
///
/// Never used for display.
pub fn normalize_answer(s: &str) -> String {
    let folded: String = s.to_lowercase().chars().filter(|c| *c != '$' && *c != ',').collect();
    let mut out: Vec<String> = Vec::new();
    for token in folded.split_whitespace() {
        if let (Some(shift), Some(prev)) = (unit_shift(token), out.last()) {
            if let Some((sign, int, frac)) = parse_number(prev) {
                let n = canonical_number(&sign, &int, &frac, shift);
                *out.last_mut().expect("checked") = n;
                continue;
            }
        }
        match parse_number(token) {
            Some((sign, int, frac)) => out.push(canonical_number(&sign, &int, &frac, 0)),
            None => out.push(token.to_string()),
        }
    }
    out.join(" ")
}

/// Display form of the correct answer matched to its distractors: when the
/// answer uses a unit word and the distractors do not, it is rewritten in
/// the distractors' digit style ("$109 thousand" → "$109,000").
pub fn harmonize_display(answer: &str, distractors: &[String]) -> String {
    let has_unit = |s: &str| s.split_whitespace().any(|w| unit_shift(&w.to_lowercase()).is_some());
    if !has_unit(answer) || distractors.iter().any(|d| has_unit(d)) {
        return answer.trim().to_string();
    }
    let grouped = distractors.iter().any(|d| d.contains(','));
    let dollar = answer.contains('$') || distractors.iter().all(|d| d.contains('$'));
    let normalized = normalize_answer(answer);
    let mut words = normalized.split(' ');
    let Some(first) = words.next() else {
        return answer.trim().to_string();
    };
    let Some((sign, int, frac)) = parse_number(first) else {
        return answer.trim().to_string();
    };
    let int = if grouped { group_thousands(&int) } else { int };
    let mut text = format!("{sign}{}{int}", if dollar { "$" } else { "" });
    if !frac.is_empty() {
        text.push('.');
        text.push_str(&frac);
    }
    for w in words {
        text.push(' ');
        text.push_str(w);
    }
    text
}

fn group_thousands(int: &str) -> String {
    let mut out = String::with_capacity(int.len() + int.len() / 3);
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
