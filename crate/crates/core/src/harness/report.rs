//! Accuracy aggregation and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::results::{read_results, QuestionResult, ResultStatus, ResultsFile};
use super::HarnessError;
use crate::pipeline::Mode;
use crate::roles::Category;

/// Counts for one cell of the accuracy matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    /// Non-errored results, the accuracy denominator.
    pub scored: u64,
    pub correct: u64,
}

impl Tally {
    pub fn accuracy(&self) -> Option<f64> {
        (self.scored > 0).then(|| self.correct as f64 / self.scored as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub attempted: u64,
    pub scored: u64,
    pub correct: u64,
    pub accuracy: Option<f64>,
    pub invalid: u64,
    pub errored: u64,
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub usage_missing: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    /// `None` collects questions whose topic is not registered.
    pub category: Option<Category>,
    pub cells: BTreeMap<Mode, Tally>,
}

impl CategoryRow {
    pub fn name(&self) -> &'static str {
        self.category.map_or("Uncategorized", Category::name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub set: String,
    pub seed: u64,
    pub modes: Vec<ModeSummary>,
    /// The seven categories in canonical order, then an uncategorized row
    /// when any result lacks a category.
    pub categories: Vec<CategoryRow>,
    /// M3 accuracy minus M0 accuracy.
    pub gain: Option<f64>,
    /// Set when the gain could not be computed.
    pub incomplete: bool,
}

impl EvalReport {
    pub fn mode(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn accuracy(&self, mode: Mode) -> Option<f64> {
        self.mode(mode).and_then(|m| m.accuracy)
    }

    pub fn category_accuracy(&self, category: Category, mode: Mode) -> Option<f64> {
        self.categories
            .iter()
            .find(|r| r.category == Some(category))
            .and_then(|r| r.cells.get(&mode))
            .and_then(Tally::accuracy)
    }
}

/// Aggregate results. Errored results are excluded from accuracy
/// denominators; invalid predictions count as incorrect.
pub fn aggregate(file: &ResultsFile) -> Result<EvalReport, HarnessError> {
    if file.results.is_empty() {
        return Err(HarnessError::Schema { line: 1, message: "results file has no result lines".into() });
    }
    let mut modes: BTreeMap<Mode, ModeSummary> = BTreeMap::new();
    let mut matrix: BTreeMap<Option<Category>, BTreeMap<Mode, Tally>> = BTreeMap::new();
    for r in &file.results {
        let m = modes.entry(r.mode).or_insert_with(|| ModeSummary {
            mode: r.mode,
            attempted: 0,
            scored: 0,
            correct: 0,
            accuracy: None,
            invalid: 0,
            errored: 0,
            calls: 0,
            prompt_tokens: 0,
            completion_tokens: 0,
            usage_missing: 0,
        });
        m.attempted += 1;
        m.calls += u64::from(r.calls);
        m.prompt_tokens += r.prompt_tokens;
        m.completion_tokens += r.completion_tokens;
        m.usage_missing += u64::from(r.usage_missing);
        match r.status {
            ResultStatus::Errored => {
                m.errored += 1;
                continue;
            }
            ResultStatus::Invalid => m.invalid += 1,
            ResultStatus::Ok => {}
        }
        m.scored += 1;
        m.correct += u64::from(r.correct);
        let cell = matrix.entry(r.category).or_default().entry(r.mode).or_default();
        cell.scored += 1;
        cell.correct += u64::from(r.correct);
    }
    for m in modes.values_mut() {
        m.accuracy = Tally { scored: m.scored, correct: m.correct }.accuracy();
    }
    let mut categories: Vec<CategoryRow> = Category::ALL
        .iter()
        .map(|c| CategoryRow { category: Some(*c), cells: matrix.remove(&Some(*c)).unwrap_or_default() })
        .collect();
    if let Some(cells) = matrix.remove(&None) {
        categories.push(CategoryRow { category: None, cells });
    }
    let acc = |mode| modes.get(&mode).and_then(|m| m.accuracy);
    let gain = match (acc(Mode::M0), acc(Mode::M3)) {
        (Some(a0), Some(a3)) => Some(a3 - a0),
        _ => None,
    };
    Ok(EvalReport {
        set: file.header.set.clone(),
        seed: file.header.seed,
        modes: modes.into_values().collect(),
        categories,
        gain,
        incomplete: gain.is_none(),
    })
}

pub fn aggregate_file(path: &Path) -> Result<EvalReport, HarnessError> {
    aggregate(&read_results(path)?)
}

/// Aggregate results without a header, for callers holding them in memory.
pub fn aggregate_results(set: &str, seed: u64, results: &[QuestionResult]) -> Result<EvalReport, HarnessError> {
    let header = super::results::ResultsHeader {
        schema_version: super::results::RESULTS_SCHEMA_VERSION,
        started_at: String::new(),
        set: set.to_string(),
        seed,
        backend: None,
        model: None,
    };
    aggregate(&ResultsFile { header, results: results.to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Svg,
    Json,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            "json" => Ok(ReportFormat::Json),
            other => Err(HarnessError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Accuracy as a percentage with two decimals.
pub fn percent(acc: Option<f64>) -> String {
    acc.map_or_else(|| "-".to_string(), |a| format!("{:.2}", a * 100.0))
}

/// Gain in percentage points with an explicit sign.
pub fn signed_points(gain: f64) -> String {
    let points = gain * 100.0;
    // avoid printing "-0.00"
    let points = if (points * 100.0).round() == 0.0 { 0.0 } else { points };
    format!("{points:+.2}")
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Svg => render_svg(report),
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    }
}

fn modes_of(report: &EvalReport) -> Vec<Mode> {
    report.modes.iter().map(|m| m.mode).collect()
}

fn render_text(report: &EvalReport) -> String {
    let modes = modes_of(report);
    let mut out = String::new();
    let _ = writeln!(out, "Set: {}  (seed {})", report.set, report.seed);
    let _ = writeln!(out);
    let _ = writeln!(out, "Accuracy (%)");
    let mut head = format!("{:<40}", "");
    for m in &modes {
        let _ = write!(head, "{:>8}", m.label());
    }
    head.push_str(&format!("{:>8}", "Gain"));
    let _ = writeln!(out, "{}", head.trim_end());
    let mut row = format!("{:<40}", "Overall");
    for m in &report.modes {
        let _ = write!(row, "{:>8}", percent(m.accuracy));
    }
    let _ = write!(row, "{:>8}", report.gain.map_or_else(|| "n/a".to_string(), signed_points));
    let _ = writeln!(out, "{row}");
    for c in &report.categories {
        let mut row = format!("{:<40}", c.name());
        for m in &modes {
            let _ = write!(row, "{:>8}", percent(c.cells.get(m).and_then(Tally::accuracy)));
        }
        let _ = writeln!(out, "{}", row.trim_end());
    }
    if report.incomplete {
        let _ = writeln!(out, "\nGain (M-3 - M-0): incomplete, both modes are required");
    } else if let Some(g) = report.gain {
        let _ = writeln!(out, "\nGain (M-3 - M-0): {}", signed_points(g));
    }
    let _ = writeln!(out, "\nCalls and tokens");
    let _ = writeln!(
        out,
        "{:<6}{:>10}{:>10}{:>9}{:>9}{:>9}{:>15}{:>19}",
        "Mode", "attempted", "scored", "invalid", "errored", "calls", "prompt_tokens", "completion_tokens"
    );
    for m in &report.modes {
        let _ = writeln!(
            out,
            "{:<6}{:>10}{:>10}{:>9}{:>9}{:>9}{:>15}{:>19}",
            m.mode.label(),
            m.attempted,
            m.scored,
            m.invalid,
            m.errored,
            m.calls,
            m.prompt_tokens,
            m.completion_tokens
        );
    }
    let missing: u64 = report.modes.iter().map(|m| m.usage_missing).sum();
    if missing > 0 {
        let _ = writeln!(out, "\n{missing} result(s) had no usage data; their tokens count as 0");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(report: &EvalReport) -> String {
    let modes = modes_of(report);
    let mut out = String::from("category");
    for m in &modes {
        out.push(',');
        out.push_str(m.as_str());
    }
    out.push('\n');
    for c in &report.categories {
        out.push_str(&csv_field(c.name()));
        for m in &modes {
            out.push(',');
            if let Some(a) = c.cells.get(m).and_then(Tally::accuracy) {
                out.push_str(&percent(Some(a)));
            }
        }
        out.push('\n');
    }
    out.push_str("Overall");
    for m in &report.modes {
        out.push(',');
        if m.accuracy.is_some() {
            out.push_str(&percent(m.accuracy));
        }
    }
    out.push('\n');
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 4] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759"];

fn render_svg(report: &EvalReport) -> String {
    let modes = modes_of(report);
    let rows: Vec<&CategoryRow> = report.categories.iter().filter(|c| c.category.is_some()).collect();
    let (left, top, plot_h, group_w, bar_w) = (60.0, 40.0, 260.0, 120.0, 22.0);
    let width = left + group_w * rows.len() as f64 + 20.0;
    let height = top + plot_h + 90.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<title>Accuracy by category and mode</title>"#);
    for tick in (0..=100).step_by(20) {
        let y = top + plot_h * (1.0 - tick as f64 / 100.0);
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{tick}</text>"##,
            width - 20.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (i, row) in rows.iter().enumerate() {
        let x0 = left + group_w * i as f64 + (group_w - bar_w * modes.len() as f64) / 2.0;
        let _ = writeln!(out, r#"<g class="category" data-category="{}">"#, xml_escape(row.name()));
        for (j, m) in modes.iter().enumerate() {
            let acc = row.cells.get(m).and_then(Tally::accuracy).unwrap_or(0.0);
            let h = plot_h * acc;
            let _ = writeln!(
                out,
                r#"<rect class="bar" data-mode="{m}" x="{:.1}" y="{:.1}" width="{bar_w}" height="{:.1}" fill="{}"><title>{} {}: {}%</title></rect>"#,
                x0 + bar_w * j as f64,
                top + plot_h - h,
                h,
                PALETTE[j % PALETTE.len()],
                xml_escape(row.name()),
                m.label(),
                percent(Some(acc))
            );
        }
        let label_x = left + group_w * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{label_x}" y="{}" text-anchor="middle">{}</text>"#,
            top + plot_h + 16.0,
            xml_escape(row.category.map_or("Uncategorized", Category::short_label))
        );
        let _ = writeln!(out, "</g>");
    }
    for (j, m) in modes.iter().enumerate() {
        let x = left + 90.0 * j as f64;
        let y = top + plot_h + 50.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{y}">{}</text>"#,
            y - 10.0,
            PALETTE[j % PALETTE.len()],
            x + 16.0,
            m.label()
        );
    }
    let _ = writeln!(out, r#"<text x="{left}" y="20" font-size="13">Accuracy (%) by category</text>"#);
    out.push_str("</svg>\n");
    out
}
