mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use finqa_core::agents::{AgentEnv, TemplateSet};
use finqa_core::config::AppConfig;
use finqa_core::gateway::{ChatBackend, Gateway, OpenAiCompatibleBackend, ScriptedBackend};
use finqa_core::harness::{aggregate_file, evaluate, render_report, ReportFormat, RunConfig};
use finqa_core::index::{
    build_index, load_corpus_dir, EmbeddingProvider, HashEmbedder, HttpEmbedder, VectorIndex, DEFAULT_PROVIDER_ID,
};
use finqa_core::pipeline::{Mode, Pipeline};
use finqa_core::questions::{
    convert_to_mcq, load_free_response, load_question_set, questions_to_json, sample_question_set, ConversionReport,
    QuestionSet,
};
use finqa_core::roles::{Category, RoleRegistry};
use finqa_core::Scalar;

use crate::error::{CliError, ExitClass};

/// Role-aware multi-agent question answering over finance multiple-choice sets.
#[derive(Debug, Parser)]
#[command(name = "finqa", version, about, propagate_version = true)]
struct Cli {
    /// Configuration file (TOML, or JSON by extension). Flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Print failures as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Log full request and response bodies and keep them in traces.
    #[arg(long, global = true)]
    trace_io: bool,

    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk and embed a corpus directory into an index file.
    Index(IndexArgs),
    /// Run one question through one mode and print the answer letter.
    Ask(AskArgs),
    /// Evaluate a question set over one or more modes.
    Eval(EvalArgs),
    /// Render a report from a results file.
    Report(ReportArgs),
    /// Convert free-response items into multiple-choice questions.
    Convert(ConvertArgs),
    /// Inspect the topic and role prompt registry.
    Roles(RolesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// Directory of UTF-8 text documents.
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Index file to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Words per passage.
    #[arg(long, value_name = "N")]
    chunk_size: Option<usize>,
    /// Words shared by consecutive passages.
    #[arg(long, value_name = "N")]
    overlap: Option<usize>,
    /// Embedding provider: `hash-<dims>` for the offline hashing embedder, or
    /// a model served by the configured embedding endpoint.
    #[arg(long, value_name = "NAME", default_value = DEFAULT_PROVIDER_ID)]
    provider: String,
    /// Stored vector precision.
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
    /// Build timestamp to record (RFC 3339); defaults to now.
    #[arg(long, value_name = "TIME")]
    built_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// Backend profile name from the config, or `scripted`.
    #[arg(long, value_name = "NAME")]
    backend: Option<String>,
    /// Reply script (JSON object of call key to reply) for the scripted backend.
    #[arg(long, value_name = "FILE")]
    script: Option<PathBuf>,
    /// Treat the scripted backend as lacking system-prompt support.
    #[arg(long)]
    no_system_prompt: bool,
}

#[derive(Debug, Args)]
struct RetrievalArgs {
    /// Index file, required for M1 and M3.
    #[arg(long, value_name = "FILE")]
    index: Option<PathBuf>,
    /// Passages retrieved per question.
    #[arg(long, value_name = "N")]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct AskArgs {
    /// Question set file; defaults to the bundled sample set.
    #[arg(long = "questions", visible_alias = "question", value_name = "FILE")]
    questions: Option<PathBuf>,
    /// Question id within the set.
    #[arg(long, value_name = "ID")]
    id: Option<String>,
    /// Agent wiring: M0, M1, M2 or M3.
    #[arg(long, value_name = "MODE")]
    mode: Mode,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// Sampling seed forwarded to the backend.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Where to write the trace JSON; defaults to trace-<id>-<mode>.json.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Question set file; defaults to the bundled sample set.
    #[arg(long, value_name = "FILE")]
    questions: Option<PathBuf>,
    /// Comma-separated modes to run.
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "M0,M1,M2,M3")]
    modes: Vec<Mode>,
    /// Results JSONL file; traces go to <FILE>.traces.jsonl.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// Concurrent workers.
    #[arg(long, value_name = "N")]
    concurrency: Option<usize>,
    /// Run seed, recorded in the results header and forwarded to the backend.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Replace an existing results file instead of resuming it.
    #[arg(long)]
    fresh: bool,
    /// Stop after this many new (question, mode) pairs.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
    /// Report format printed when the run finishes.
    #[arg(long, value_name = "FORMAT", default_value = "text")]
    format: String,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Results JSONL file written by `eval`.
    #[arg(long, value_name = "FILE")]
    results: PathBuf,
    /// text, csv, svg or json.
    #[arg(long, value_name = "FORMAT", default_value = "text")]
    format: String,
    /// Write to a file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Free-response JSON file.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Multiple-choice question set to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Conversion report; defaults to <OUT>.report.json.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Shuffle seed.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
struct RolesArgs {
    /// Print the role prompt and category for one topic.
    #[arg(long, value_name = "TOPIC", conflicts_with = "category")]
    topic: Option<String>,
    /// List the topics in one category.
    #[arg(long, value_name = "NAME")]
    category: Option<String>,
    /// List every topic with its category.
    #[arg(long, conflicts_with_all = ["topic", "category"])]
    list: bool,
}

struct Context {
    config: AppConfig,
    trace_io: bool,
}

impl Context {
    fn registry(&self) -> Result<RoleRegistry, CliError> {
        Ok(match &self.config.roles {
            Some(path) => RoleRegistry::load(path)?,
            None => RoleRegistry::builtin(),
        })
    }

    fn templates(&self) -> Result<TemplateSet, CliError> {
        Ok(match &self.config.templates_dir {
            Some(dir) => TemplateSet::from_dir(dir)?,
            None => TemplateSet::default(),
        })
    }

    fn gateway(&self, args: &BackendArgs) -> Result<Gateway, CliError> {
        let scripted = args.script.is_some() || args.backend.as_deref() == Some("scripted");
        let backend: Arc<dyn ChatBackend> = if scripted {
            let path = args
                .script
                .as_deref()
                .ok_or_else(|| CliError::usage("--backend scripted needs --script FILE"))?;
            Arc::new(ScriptedBackend::from_json_file(path)?.with_system_prompt_support(!args.no_system_prompt))
        } else {
            let profile = self.config.backend(args.backend.as_deref())?.clone();
            Arc::new(OpenAiCompatibleBackend::new(profile)?)
        };
        Ok(Gateway::new(backend)
            .with_retry(self.config.retry.clone().unwrap_or_default())
            .with_trace_io(self.trace_io))
    }

    fn provider<T: Scalar>(&self, name: &str) -> Result<Box<dyn EmbeddingProvider<T>>, CliError> {
        if let Some(hash) = HashEmbedder::from_provider_id(name) {
            return Ok(Box::new(hash));
        }
        let mut profile = self.config.embedding.clone().ok_or_else(|| {
            CliError::dependency(
                "embedding_provider",
                format!("provider {name:?} needs an [embedding] endpoint in the config, or use hash-<dims>"),
            )
        })?;
        profile.model = name.to_string();
        Ok(Box::new(HttpEmbedder::new(profile)))
    }

    fn question_set(&self, path: Option<&Path>, registry: &RoleRegistry) -> Result<QuestionSet, CliError> {
        Ok(match path {
            Some(p) => load_question_set(p, registry)?,
            None => sample_question_set(registry),
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::runtime("io", format!("{}: {e}", path.display())))
}

fn cmd_index(ctx: &Context, args: &IndexArgs) -> Result<(), CliError> {
    fn build<T: Scalar>(ctx: &Context, args: &IndexArgs) -> Result<(usize, usize, usize, String), CliError> {
        let docs = load_corpus_dir(&args.corpus)?;
        let cfg = ctx.config.retrieval(None, args.chunk_size, args.overlap);
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        let provider = ctx.provider::<T>(&args.provider)?;
        let index: VectorIndex<T> = build_index(&docs, provider.as_ref(), &cfg, args.built_at.unwrap_or_else(Utc::now))?;
        index.save(&args.out).map_err(|e| CliError::runtime("io", e.to_string()))?;
        Ok((index.len(), docs.len(), index.dims(), index.provider_id().to_string()))
    }
    let (passages, docs, dims, provider) = match args.precision {
        Precision::F32 => build::<f32>(ctx, args)?,
        Precision::F64 => build::<f64>(ctx, args)?,
    };
    println!(
        "indexed {passages} passages from {docs} documents (dims {dims}, provider {provider}) -> {}",
        args.out.display()
    );
    Ok(())
}

struct Retrieval {
    index: VectorIndex<f32>,
    provider: Box<dyn EmbeddingProvider<f32>>,
}

fn load_retrieval(ctx: &Context, args: &RetrievalArgs) -> Result<Option<Retrieval>, CliError> {
    let Some(path) = &args.index else { return Ok(None) };
    let index = VectorIndex::<f32>::load(path).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })?;
    let provider = ctx.provider::<f32>(index.provider_id())?;
    Ok(Some(Retrieval { index, provider }))
}

fn cmd_ask(ctx: &Context, args: &AskArgs) -> Result<(), CliError> {
    let registry = ctx.registry()?;
    let templates = ctx.templates()?;
    let set = ctx.question_set(args.questions.as_deref(), &registry)?;
    let question = match (&args.id, set.questions.as_slice()) {
        (Some(id), _) => set
            .get(id)
            .ok_or_else(|| CliError::dependency("unknown_question", format!("no question {id:?} in {}", set.source)))?,
        (None, [only]) => only,
        (None, _) => return Err(CliError::usage("the question set has several questions; pick one with --id")),
    };
    let gateway = ctx.gateway(&args.backend)?;
    let retrieval = load_retrieval(ctx, &args.retrieval)?;
    let mut pipeline = Pipeline::new(&gateway, &registry, &templates)
        .with_retrieval_config(ctx.config.retrieval(args.retrieval.k, None, None))
        .with_seed(args.seed.or(ctx.config.defaults.seed));
    if let Some(r) = &retrieval {
        pipeline = pipeline.with_retrieval(&r.index, r.provider.as_ref());
    }
    let trace = pipeline.run(question, args.mode)?;
    let trace_path =
        args.trace.clone().unwrap_or_else(|| PathBuf::from(format!("trace-{}-{}.json", question.id, args.mode)));
    let json = serde_json::to_string_pretty(&trace).expect("trace serializes");
    write_file(&trace_path, &(json + "\n"))?;
    match trace.final_output.answer {
        Some(letter) => println!("{letter}"),
        None => println!("invalid"),
    }
    eprintln!("trace written to {}", trace_path.display());
    Ok(())
}

fn cmd_eval(ctx: &Context, args: &EvalArgs) -> Result<(), CliError> {
    let format: ReportFormat = args.format.parse()?;
    let registry = ctx.registry()?;
    let templates = ctx.templates()?;
    let set = ctx.question_set(args.questions.as_deref(), &registry)?;
    let gateway = ctx.gateway(&args.backend)?;
    let retrieval = load_retrieval(ctx, &args.retrieval)?;
    let seed = args.seed.or(ctx.config.defaults.seed);
    let mut pipeline = Pipeline::new(&gateway, &registry, &templates)
        .with_retrieval_config(ctx.config.retrieval(args.retrieval.k, None, None))
        .with_seed(seed);
    if let Some(r) = &retrieval {
        pipeline = pipeline.with_retrieval(&r.index, r.provider.as_ref());
    }
    let config = RunConfig {
        modes: args.modes.clone(),
        backend: gateway.profile().name.clone(),
        concurrency: args.concurrency.or(ctx.config.defaults.concurrency).unwrap_or(4),
        seed: seed.unwrap_or(0),
        output: args.out.clone(),
        resume: !args.fresh,
        limit: args.limit,
    };
    let report = evaluate(&set, &config, &pipeline)?;
    print!("{}", render_report(&report, format));
    eprintln!("results written to {}", args.out.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let format: ReportFormat = args.format.parse()?;
    let report = aggregate_file(&args.results)?;
    let rendered = render_report(&report, format);
    match &args.out {
        Some(path) => write_file(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_convert(ctx: &Context, args: &ConvertArgs) -> Result<(), CliError> {
    let registry = ctx.registry()?;
    let templates = ctx.templates()?;
    let items = load_free_response(&args.input)?;
    let gateway = ctx.gateway(&args.backend)?;
    let env = AgentEnv::new(&gateway, &templates);
    let mut questions = Vec::new();
    let mut report = ConversionReport::default();
    for item in &items {
        match convert_to_mcq(&env, item, args.seed) {
            Ok((mut q, record)) => {
                q.category = registry.category_of(&q.topic).ok();
                if q.category.is_none() {
                    log::warn!("item {}: topic {:?} is not registered", q.id, q.topic);
                }
                questions.push(q);
                report.converted.push(record);
            }
            Err(e) => {
                log::warn!("{e}");
                report.failed.insert(item.id.clone(), e.to_string());
            }
        }
    }
    write_file(&args.out, &(questions_to_json(&questions) + "\n"))?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut name = args.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".report.json");
        args.out.with_file_name(name)
    });
    write_file(&report_path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    println!("converted {} of {} items -> {}", questions.len(), items.len(), args.out.display());
    if !report.failed.is_empty() {
        return Err(CliError::runtime(
            "conversion",
            format!("{} item(s) failed; see {}", report.failed.len(), report_path.display()),
        ));
    }
    Ok(())
}

fn cmd_roles(ctx: &Context, args: &RolesArgs) -> Result<(), CliError> {
    let registry = ctx.registry()?;
    if let Some(topic) = &args.topic {
        let entry = registry.get(topic).ok_or_else(|| {
            CliError::dependency("unknown_topic", format!("unknown topic {topic:?}; `finqa roles --list` shows all"))
        })?;
        println!("{}", entry.role_text);
        eprintln!("topic: {} | category: {}", entry.topic, entry.category);
        return Ok(());
    }
    if let Some(name) = &args.category {
        let category = Category::from_name(name)
            .ok_or_else(|| CliError::usage(format!("unknown category {name:?}")))?;
        for e in registry.entries().iter().filter(|e| e.category == category) {
            println!("{}", e.topic);
        }
        return Ok(());
    }
    if args.list {
        for e in registry.entries() {
            println!("{}\t{}", e.category, e.topic);
        }
        return Ok(());
    }
    let counts = registry.counts_by_category();
    for c in Category::ALL {
        println!("{:<40}{:>4}", c.name(), counts.get(&c).copied().unwrap_or(0));
    }
    println!("{:<40}{:>4}", "Total", registry.len());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    let ctx = Context { config, trace_io: cli.trace_io };
    match &cli.command {
        Command::Index(a) => cmd_index(&ctx, a),
        Command::Ask(a) => cmd_ask(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Report(a) => cmd_report(a),
        Command::Convert(a) => cmd_convert(&ctx, a),
        Command::Roles(a) => cmd_roles(&ctx, a),
    }
}

fn report_error(err: &CliError, json: bool) {
    let mut stderr = std::io::stderr().lock();
    let _ = if json {
        writeln!(stderr, "{}", err.to_json())
    } else {
        match &err.locator {
            Some(l) => writeln!(stderr, "error: {} (at {l})", err.message),
            None => writeln!(stderr, "error: {}", err.message),
        }
    };
}

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if json_errors {
                report_error(&CliError::usage(e.kind().to_string() + ": " + e.render().to_string().trim()), true);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(ExitClass::Usage as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = if cli.trace_io { format!("{level},finqa::io=debug") } else { level.to_string() };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter))
        .format_timestamp(None)
        .init();
    let json = cli.json_errors;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e, json);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn modes_parse_from_flags() {
        let cli = Cli::try_parse_from(["finqa", "eval", "--out", "r.jsonl", "--modes", "M0,M-3"]).unwrap();
        match cli.command {
            Command::Eval(a) => assert_eq!(a.modes, vec![Mode::M0, Mode::M3]),
            other => panic!("parsed {other:?}"),
        }
        assert!(Cli::try_parse_from(["finqa", "ask", "--mode", "M9"]).is_err());
    }
}
