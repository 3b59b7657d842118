//! Batch evaluation over question sets, with resumable JSONL results.

mod report;
mod results;

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Mode, Pipeline, PipelineError};
use crate::questions::{Question, QuestionSet};
use crate::scalar::Scalar;

pub use report::{
    aggregate, aggregate_file, aggregate_results, percent, render_report, signed_points, CategoryRow, EvalReport,
    ModeSummary, ReportFormat, Tally,
};
pub use results::{
    parse_results, read_results, Predicted, QuestionResult, ResultLine, ResultStatus, ResultsFile, ResultsHeader,
    RESULTS_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dependency(#[from] PipelineError),
    #[error("results line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("cannot resume: {0}")]
    ResumeMismatch(String),
    #[error("unsupported report format {0:?}; expected text, csv, svg or json")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub modes: Vec<Mode>,
    pub backend: String,
    pub concurrency: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Continue an existing results file instead of replacing it.
    #[serde(default = "yes")]
    pub resume: bool,
    /// Stop after this many new (question, mode) pairs.
    #[serde(default)]
    pub limit: Option<usize>,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(modes: Vec<Mode>, output: impl Into<PathBuf>) -> Self {
        Self { modes, backend: String::new(), concurrency: 4, seed: 0, output: output.into(), resume: true, limit: None }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.concurrency == 0 {
            return Err(HarnessError::Config("concurrency must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(HarnessError::Config("no modes requested".into()));
        }
        Ok(())
    }

    /// Requested modes, deduplicated, in M0..M3 order.
    pub fn ordered_modes(&self) -> Vec<Mode> {
        let mut modes = self.modes.clone();
        modes.sort();
        modes.dedup();
        modes
    }

    pub fn traces_path(&self) -> PathBuf {
        traces_path(&self.output)
    }
}

/// Trace stream written beside a results file.
pub fn traces_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".traces.jsonl");
    results.with_file_name(name)
}

/// Outcome of one (question, mode) pair: the result line and the full trace.
fn run_one<T: Scalar>(pipeline: &Pipeline<'_, T>, q: &Question, mode: Mode) -> (QuestionResult, serde_json::Value) {
    let base = |predicted, calls: u32, pt, ct, missing, trace_ref, error| {
        let correct = predicted == Some(Predicted::Letter(q.ground_truth));
        let status = match predicted {
            None => ResultStatus::Errored,
            Some(Predicted::Invalid) => ResultStatus::Invalid,
            Some(Predicted::Letter(_)) => ResultStatus::Ok,
        };
        QuestionResult {
            question_id: q.id.clone(),
            mode,
            category: q.category,
            ground_truth: q.ground_truth,
            predicted,
            correct,
            status,
            calls,
            prompt_tokens: pt,
            completion_tokens: ct,
            usage_missing: missing,
            trace_ref,
            error,
        }
    };
    match pipeline.run(q, mode) {
        Ok(trace) => {
            let predicted = Some(trace.final_output.answer.map_or(Predicted::Invalid, Predicted::Letter));
            let result = base(
                predicted,
                trace.calls.len() as u32,
                trace.prompt_tokens(),
                trace.completion_tokens(),
                trace.usage_missing(),
                trace.content_ref(),
                None,
            );
            (result, serde_json::json!({ "type": "trace", "trace": trace }))
        }
        Err(PipelineError::Agent { partial, source }) => {
            log::warn!("{} {}: {source}", q.id, mode);
            let result = base(
                None,
                partial.calls.len() as u32,
                partial.calls.iter().map(|c| c.prompt_tokens).sum(),
                partial.calls.iter().map(|c| c.completion_tokens).sum(),
                partial.calls.iter().any(|c| c.usage_missing),
                partial.content_ref(),
                Some(format!("{}: {source}", partial.error_kind)),
            );
            (result, serde_json::json!({ "type": "errored", "trace": partial }))
        }
        Err(other) => {
            log::warn!("{} {}: {other}", q.id, mode);
            let result = base(None, 0, 0, 0, false, String::new(), Some(other.to_string()));
            (result, serde_json::json!({ "type": "errored", "question_id": q.id, "mode": mode, "error": other.to_string() }))
        }
    }
}

/// Read an existing results file for resumption, truncating an unterminated
/// last line. Returns the completed pairs.
fn prepare_resume(path: &Path, header: &ResultsHeader) -> Result<HashSet<(String, Mode)>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let file = parse_results(&text, true)?;
    if file.header.set != header.set || file.header.seed != header.seed {
        return Err(HarnessError::ResumeMismatch(format!(
            "{} holds set {:?} seed {}, this run is set {:?} seed {}",
            path.display(),
            file.header.set,
            file.header.seed,
            header.set,
            header.seed
        )));
    }
    let keep = text.rfind('\n').map_or(0, |i| i + 1);
    if keep < text.len() {
        log::warn!("dropping a partial trailing line from {}", path.display());
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(file.results.into_iter().map(|r| (r.question_id, r.mode)).collect())
}

/// Run every question through every requested mode and report accuracy.
///
/// Work is spread over `concurrency` workers. Lines are written in canonical
/// (question, mode) order through a reorder buffer, so output is identical
/// regardless of scheduling, and an interrupted file is always a prefix of a
/// complete one. Errored pairs are recorded and count as done on resume.
pub fn evaluate<T: Scalar>(
    set: &QuestionSet,
    config: &RunConfig,
    pipeline: &Pipeline<'_, T>,
) -> Result<EvalReport, HarnessError> {
    config.validate()?;
    let modes = config.ordered_modes();
    for &mode in &modes {
        pipeline.check(mode)?;
    }
    let profile = pipeline.gateway().profile();
    let header = ResultsHeader {
        schema_version: RESULTS_SCHEMA_VERSION,
        started_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        set: set.name.clone(),
        seed: config.seed,
        backend: Some(if config.backend.is_empty() { profile.name.clone() } else { config.backend.clone() }),
        model: Some(profile.model.clone()),
    };

    let resuming = config.resume && config.output.exists() && std::fs::metadata(&config.output)?.len() > 0;
    let done = if resuming { prepare_resume(&config.output, &header)? } else { HashSet::new() };
    let mut out = OpenOptions::new()
        .create(true)
        .append(resuming)
        .write(true)
        .truncate(!resuming)
        .open(&config.output)?;
    let mut traces = OpenOptions::new()
        .create(true)
        .append(resuming)
        .write(true)
        .truncate(!resuming)
        .open(config.traces_path())?;
    if !resuming {
        out.write_all(ResultLine::Header(header).to_json_line().as_bytes())?;
    }

    let mut work: Vec<(&Question, Mode)> = set
        .questions
        .iter()
        .flat_map(|q| modes.iter().map(move |&m| (q, m)))
        .filter(|(q, m)| !done.contains(&(q.id.clone(), *m)))
        .collect();
    if let Some(limit) = config.limit {
        work.truncate(limit);
    }
    log::info!("{} pair(s) to run, {} already recorded", work.len(), done.len());

    let next = AtomicUsize::new(0);
    let workers = config.concurrency.min(work.len().max(1));
    let write_result: Result<(), HarnessError> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, QuestionResult, serde_json::Value)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (work, next) = (&work, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(q, mode)) = work.get(i) else { break };
                let (result, trace) = run_one(pipeline, q, mode);
                if tx.send((i, result, trace)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, (QuestionResult, serde_json::Value)> = BTreeMap::new();
        let mut cursor = 0;
        for (i, result, trace) in rx {
            pending.insert(i, (result, trace));
            while let Some((result, trace)) = pending.remove(&cursor) {
                out.write_all(ResultLine::Result(result).to_json_line().as_bytes())?;
                out.flush()?;
                let mut line = serde_json::to_string(&trace).expect("trace serializes");
                line.push('\n');
                traces.write_all(line.as_bytes())?;
                cursor += 1;
            }
        }
        Ok(())
    });
    write_result?;
    aggregate_file(&config.output)
}
