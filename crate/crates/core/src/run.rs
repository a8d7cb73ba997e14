//! End-to-end evaluation runs: config, demonstration selection, dispatch,
//! scoring and the results directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    self, ClassLabel, CorpusError, EmbeddingMap, Example, LanguageTag, Payload, TaskKind,
};
use crate::llm::{
    open_backend, BackendSpec, ClientError, CompletionBackend, CompletionRequest, LiveConfig,
};
use crate::metrics::{
    parse_cls_output, parse_seqlab_detailed, ClassPrediction, MetricError, MetricReport,
    PredictionPayload,
};
use crate::prompt::{build_prompt, PromptError, PromptMode, RenderedPrompt, TemplateSet};
use crate::romanizer::{detect_script, load_tables, FallbackPolicy, RomanizerConfig, TableError};
use crate::selector::{select, Seed, SelectError, SelectionPolicy};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("query {id}: {source}")]
    Select { id: String, source: SelectError },
    #[error("query {id}: {source}")]
    Backend { id: String, source: ClientError },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl RunError {
    /// 1 for scoring failures, 2 for config and I/O problems, 3 for backend
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Metric(_) => 1,
            RunError::Backend { .. } => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// On-disk form of a run config. Every field is optional here so that
/// validation can report all problems at once.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    task: Option<String>,
    language: Option<String>,
    mode: Option<String>,
    seed: Option<u64>,
    queries: Option<PathBuf>,
    demos: Option<PathBuf>,
    labels: Option<Vec<String>>,
    embeddings: Option<PathBuf>,
    tables: Option<PathBuf>,
    templates: Option<PathBuf>,
    backend: Option<String>,
    model: Option<String>,
    concurrency: Option<usize>,
    max_new_tokens: Option<u32>,
    fallback: Option<String>,
    lowercase: Option<bool>,
    out: Option<PathBuf>,
    policy: Option<toml::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskKind,
    pub language: LanguageTag,
    pub mode: PromptMode,
    pub policy: SelectionPolicy,
    pub seed: Seed,
    pub queries: PathBuf,
    pub demos: PathBuf,
    pub labels: Vec<ClassLabel>,
    pub embeddings: Option<PathBuf>,
    pub tables: PathBuf,
    pub templates: Option<PathBuf>,
    pub backend: BackendSpec,
    pub model: Option<String>,
    pub concurrency: usize,
    pub max_new_tokens: Option<u32>,
    pub fallback: FallbackPolicy,
    pub lowercase: bool,
    pub out: PathBuf,
}

/// Command-line values that replace config-file fields. Relative paths are
/// taken relative to the working directory.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<PromptMode>,
    pub seed: Option<u64>,
    pub backend: Option<BackendSpec>,
    pub tables: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = base.join(p);
    std::path::absolute(&joined).unwrap_or(joined)
}

fn absolute_backend(base: &Path, spec: BackendSpec) -> BackendSpec {
    match spec {
        BackendSpec::Live { url } => BackendSpec::Live { url },
        BackendSpec::Replay { cassette } => BackendSpec::Replay {
            cassette: absolute(base, &cassette),
        },
        BackendSpec::Record { cassette, url } => BackendSpec::Record {
            cassette: absolute(base, &cassette),
            url,
        },
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Parses and validates a config whose relative paths are anchored at
    /// `base`. Every violated field is reported.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, RunError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| RunError::Config(vec![e.message().to_string()]))?;
        let cwd = Path::new(".");
        let mut errors = Vec::new();
        let mut need = |field: &str, present: bool| {
            if !present {
                errors.push(format!("{field}: missing"));
            }
            present
        };
        need("task", file.task.is_some());
        need("language", file.language.is_some());
        need("mode", file.mode.is_some() || overrides.mode.is_some());
        need("queries", file.queries.is_some());
        need("demos", file.demos.is_some());
        need(
            "tables",
            file.tables.is_some() || overrides.tables.is_some(),
        );
        need(
            "backend",
            file.backend.is_some() || overrides.backend.is_some(),
        );
        need("policy", file.policy.is_some());

        let task = file.task.as_deref().and_then(|s| {
            s.parse::<TaskKind>()
                .map_err(|e| errors.push(format!("task: {e}")))
                .ok()
        });
        let language = file.language.as_deref().and_then(|s| {
            s.parse::<LanguageTag>()
                .map_err(|e| errors.push(format!("language: {e}")))
                .ok()
        });
        let mode = match overrides.mode {
            Some(m) => Some(m),
            None => file.mode.as_deref().and_then(|s| {
                s.parse::<PromptMode>()
                    .map_err(|e| errors.push(format!("mode: {e}")))
                    .ok()
            }),
        };
        let policy = file
            .policy
            .clone()
            .and_then(|v| match v.try_into::<SelectionPolicy>() {
                Ok(p) => match p.validate() {
                    Ok(()) => Some(p),
                    Err(e) => {
                        errors.push(format!("policy: {e}"));
                        None
                    }
                },
                Err(e) => {
                    errors.push(format!("policy: {}", e.message()));
                    None
                }
            });
        let backend = match overrides.backend.clone() {
            Some(b) => Some(absolute_backend(cwd, b)),
            None => file.backend.as_deref().and_then(|s| {
                s.parse::<BackendSpec>()
                    .map(|b| absolute_backend(base, b))
                    .map_err(|e| errors.push(format!("backend: {e}")))
                    .ok()
            }),
        };
        let fallback = match file.fallback.as_deref() {
            None => FallbackPolicy::default(),
            Some(s) => s.parse().unwrap_or_else(|e| {
                errors.push(format!("fallback: {e}"));
                FallbackPolicy::default()
            }),
        };
        let concurrency = file.concurrency.unwrap_or(1);
        if concurrency == 0 {
            errors.push("concurrency: must be at least 1".to_string());
        }
        if file.max_new_tokens == Some(0) {
            errors.push("max_new_tokens: must be at least 1".to_string());
        }

        let mut check_file = |field: &str, p: Option<PathBuf>, dir: bool| {
            let p = p?;
            let ok = if dir { p.is_dir() } else { p.is_file() };
            if !ok {
                let what = if dir { "directory" } else { "file" };
                errors.push(format!("{field}: no such {what}: {}", p.display()));
            }
            Some(p)
        };
        let queries = check_file(
            "queries",
            file.queries.as_ref().map(|p| absolute(base, p)),
            false,
        );
        let demos = check_file(
            "demos",
            file.demos.as_ref().map(|p| absolute(base, p)),
            false,
        );
        let embeddings = check_file(
            "embeddings",
            file.embeddings.as_ref().map(|p| absolute(base, p)),
            false,
        );
        let tables = match &overrides.tables {
            Some(t) => Some(absolute(cwd, t)),
            None => file.tables.as_ref().map(|p| absolute(base, p)),
        };
        let tables = check_file("tables", tables, true);
        let templates = check_file(
            "templates",
            file.templates.as_ref().map(|p| absolute(base, p)),
            true,
        );

        if matches!(policy, Some(SelectionPolicy::Retrieve { .. })) && embeddings.is_none() {
            errors.push("embeddings: required by the retrieve policy".to_string());
        }
        let labels: Vec<ClassLabel> = file
            .labels
            .clone()
            .unwrap_or_default()
            .into_iter()
            .map(ClassLabel)
            .collect();
        match task {
            Some(TaskKind::Cls) => {
                if labels.is_empty() {
                    errors.push("labels: classification needs a non-empty label set".to_string());
                }
                let distinct: HashSet<_> = labels.iter().collect();
                if distinct.len() != labels.len() {
                    errors.push("labels: duplicate label".to_string());
                }
            }
            Some(TaskKind::SeqLab) if !labels.is_empty() => {
                errors.push(
                    "labels: not used by sequence labeling (the tag set is fixed)".to_string(),
                );
            }
            _ => {}
        }

        if !errors.is_empty() {
            return Err(RunError::Config(errors));
        }
        let (task, language, mode) = (task.unwrap(), language.unwrap(), mode.unwrap());
        let out = match &overrides.out {
            Some(o) => absolute(cwd, o),
            None => match &file.out {
                Some(o) => absolute(base, o),
                None => absolute(
                    base,
                    Path::new(&format!("results/{task}-{language}-{}", mode.as_str())),
                ),
            },
        };
        Ok(RunConfig {
            task,
            language,
            mode,
            policy: policy.unwrap(),
            seed: Seed(overrides.seed.or(file.seed).unwrap_or(0)),
            queries: queries.unwrap(),
            demos: demos.unwrap(),
            labels,
            embeddings,
            tables: tables.unwrap(),
            templates,
            backend: backend.unwrap(),
            model: file.model,
            concurrency,
            max_new_tokens: file.max_new_tokens,
            fallback,
            lowercase: file.lowercase.unwrap_or(false),
            out,
        })
    }

    /// TOML for the effective config, with absolute paths, that loads back to
    /// an equal `RunConfig`.
    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            task: Some(self.task.to_string()),
            language: Some(self.language.to_string()),
            mode: Some(self.mode.as_str().to_string()),
            seed: Some(self.seed.0),
            queries: Some(self.queries.clone()),
            demos: Some(self.demos.clone()),
            labels: (!self.labels.is_empty())
                .then(|| self.labels.iter().map(|l| l.0.clone()).collect()),
            embeddings: self.embeddings.clone(),
            tables: Some(self.tables.clone()),
            templates: self.templates.clone(),
            backend: Some(self.backend.to_string()),
            model: self.model.clone(),
            concurrency: Some(self.concurrency),
            max_new_tokens: self.max_new_tokens,
            fallback: Some(self.fallback.to_string()),
            lowercase: Some(self.lowercase),
            out: Some(self.out.clone()),
            policy: Some(toml::Value::try_from(&self.policy).expect("policy is a table")),
        };
        toml::to_string(&file).expect("config serializes")
    }
}

/// Everything loaded from disk that a run needs before dispatch.
pub struct RunInputs {
    pub romanizer: RomanizerConfig,
    pub templates: TemplateSet,
    pub queries: Vec<Example>,
    pub demos: Vec<Example>,
    pub embeddings: Option<EmbeddingMap>,
}

impl RunInputs {
    pub fn load(config: &RunConfig) -> Result<Self, RunError> {
        let romanizer = load_tables(&config.tables)?
            .with_fallback(config.fallback)
            .with_lowercase(config.lowercase);
        let (queries, demos, templates) = match config.task {
            TaskKind::SeqLab => (
                corpus::load_seqlab(&config.queries)?,
                corpus::load_seqlab(&config.demos)?,
                TemplateSet::default_seqlab(),
            ),
            TaskKind::Cls => (
                corpus::load_cls(&config.queries, &config.labels)?,
                corpus::load_cls(&config.demos, &config.labels)?,
                TemplateSet::default_cls(&config.labels),
            ),
        };
        let templates = match &config.templates {
            Some(dir) => templates.load_overrides(dir)?,
            None => templates,
        };
        let embeddings = config
            .embeddings
            .as_deref()
            .map(corpus::load_embeddings)
            .transpose()?;
        if let SelectionPolicy::Fixed { ids } = &config.policy {
            let pool: HashSet<&str> = demos.iter().map(|d| d.id.as_str()).collect();
            let missing: Vec<String> = ids
                .iter()
                .filter(|id| !pool.contains(id.as_str()))
                .map(|id| format!("policy.ids: {id:?} is not in the demo pool"))
                .collect();
            if !missing.is_empty() {
                return Err(RunError::Config(missing));
            }
        }
        Ok(RunInputs {
            romanizer,
            templates,
            queries,
            demos,
            embeddings,
        })
    }

    /// Notes about likely misconfiguration that do not stop a run.
    pub fn warnings(&self, config: &RunConfig) -> Vec<String> {
        let mut out = Vec::new();
        let script = config.language.script();
        let text: String = self
            .queries
            .iter()
            .map(|q| q.surface_text() + " ")
            .collect();
        let detected = detect_script(&text);
        if detected != script && !text.trim().is_empty() {
            out.push(format!(
                "{} declares script {script} but the queries are mostly {detected}",
                config.language
            ));
        }
        if config.mode != PromptMode::Orig && self.romanizer.table(script).is_none() {
            out.push(format!(
                "no romanization table for {script}; unmapped text falls back to {}",
                self.romanizer.fallback()
            ));
        }
        out
    }
}

/// One query with its demonstrations, prompt and backend request.
#[derive(Debug, Clone)]
pub struct PlannedQuery {
    pub query: Example,
    pub demo_ids: Vec<String>,
    pub prompt: RenderedPrompt,
    pub request: CompletionRequest,
}

fn request_for(config: &RunConfig, prompt: &RenderedPrompt) -> CompletionRequest {
    let (default_tokens, stop) = match prompt.query_token_count {
        Some(n) => (8 * n as u32, "\n\n"),
        None => (16, "\n"),
    };
    CompletionRequest::new(
        prompt.text.clone(),
        config.max_new_tokens.unwrap_or(default_tokens),
    )
    .with_stop([stop])
}

/// Selects demonstrations and renders prompts for every query, in id order.
pub fn plan(config: &RunConfig, inputs: &RunInputs) -> Result<Vec<PlannedQuery>, RunError> {
    let mut queries: Vec<&Example> = inputs.queries.iter().collect();
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut planned = Vec::with_capacity(queries.len());
    for query in queries {
        let candidates: Vec<Example> = inputs
            .demos
            .iter()
            .filter(|d| d.id != query.id)
            .cloned()
            .collect();
        let demos = select(
            &config.policy,
            &query.id,
            &candidates,
            inputs.embeddings.as_ref(),
            config.seed,
        )
        .map_err(|source| RunError::Select {
            id: query.id.clone(),
            source,
        })?;
        let prompt = build_prompt(
            &inputs.templates,
            config.mode,
            &demos,
            query,
            &inputs.romanizer,
        )?;
        planned.push(PlannedQuery {
            query: query.clone(),
            demo_ids: demos.iter().map(|d| d.id.clone()).collect(),
            request: request_for(config, &prompt),
            prompt,
        });
    }
    Ok(planned)
}

/// Sends every request with at most `concurrency` in flight. Results come back
/// in input order; on failure the error of the earliest failing query is
/// returned.
pub fn dispatch(
    backend: &dyn CompletionBackend,
    planned: &[PlannedQuery],
    concurrency: usize,
) -> Result<Vec<String>, RunError> {
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<String, ClientError>>>> =
        Mutex::new((0..planned.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..concurrency.max(1).min(planned.len().max(1)) {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = planned.get(i) else { break };
                let r = backend.complete(&p.request).map(|c| c.text);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap();
    let mut texts = Vec::with_capacity(planned.len());
    for (p, r) in planned.iter().zip(results) {
        match r {
            Some(Ok(t)) => texts.push(t),
            Some(Err(source)) => {
                return Err(RunError::Backend {
                    id: p.query.id.clone(),
                    source,
                })
            }
            None => {}
        }
    }
    if texts.len() != planned.len() {
        unreachable!("a worker stopped without recording an error");
    }
    Ok(texts)
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub example_id: String,
    pub demo_ids: Vec<String>,
    pub prompt_hash: String,
    pub request_hash: String,
    pub completion: String,
    pub prediction: PredictionPayload,
    pub gold: PredictionPayload,
}

fn gold_payload(ex: &Example) -> PredictionPayload {
    match &ex.payload {
        Payload::SeqLab { tags, .. } => PredictionPayload::Tags(tags.clone()),
        Payload::Cls { label, .. } => {
            PredictionPayload::Class(ClassPrediction::Label(label.clone()))
        }
    }
}

/// Parses completions and scores them. `planned` and `completions` are
/// parallel and already in id order.
pub fn score(
    config: &RunConfig,
    inputs: &RunInputs,
    planned: &[PlannedQuery],
    completions: &[String],
) -> Result<(Vec<EvalRecord>, MetricReport), RunError> {
    let verbalizers: BTreeMap<String, String> = inputs
        .templates
        .verbalized_labels()
        .into_iter()
        .map(|(l, v)| (l.to_string(), v.to_string()))
        .collect();
    let mut records = Vec::with_capacity(planned.len());
    let mut unparsed = 0;
    for (p, text) in planned.iter().zip(completions) {
        let prediction = match &p.query.payload {
            Payload::SeqLab { tokens, .. } => {
                let (tags, ok) = parse_seqlab_detailed(text, tokens.len());
                if !ok {
                    unparsed += 1;
                }
                PredictionPayload::Tags(tags)
            }
            Payload::Cls { .. } => {
                PredictionPayload::Class(parse_cls_output(text, &config.labels, &verbalizers))
            }
        };
        records.push(EvalRecord {
            example_id: p.query.id.clone(),
            demo_ids: p.demo_ids.clone(),
            prompt_hash: hex::encode(Sha256::digest(p.prompt.text.as_bytes())),
            request_hash: p.request.hash(),
            completion: text.clone(),
            prediction,
            gold: gold_payload(&p.query),
        });
    }
    let report = match config.task {
        TaskKind::SeqLab => {
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for r in &records {
                if let (PredictionPayload::Tags(g), PredictionPayload::Tags(p)) =
                    (&r.gold, &r.prediction)
                {
                    gold.push(g.clone());
                    pred.push(p.clone());
                }
            }
            MetricReport::seqlab(config.language, config.mode, &gold, &pred, unparsed)?
        }
        TaskKind::Cls => {
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for r in &records {
                if let (
                    PredictionPayload::Class(ClassPrediction::Label(g)),
                    PredictionPayload::Class(p),
                ) = (&r.gold, &r.prediction)
                {
                    gold.push(g.clone());
                    pred.push(p.clone());
                }
            }
            MetricReport::cls(config.language, config.mode, &gold, &pred)?
        }
    };
    Ok((records, report))
}

pub struct RunSummary {
    pub out_dir: PathBuf,
    pub report: MetricReport,
    pub warnings: Vec<String>,
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const SNAPSHOT_FILE: &str = "config.snapshot";

/// Runs a full evaluation and writes `records.jsonl`, `metrics.json` and
/// `config.snapshot` into `config.out`.
pub fn run(config: &RunConfig) -> Result<RunSummary, RunError> {
    let inputs = RunInputs::load(config)?;
    let warnings = inputs.warnings(config);
    let planned = plan(config, &inputs)?;
    let live = LiveConfig {
        model: config.model.clone(),
        max_in_flight: config.concurrency,
        ..LiveConfig::new("")
    };
    let backend = open_backend(&config.backend, &live).map_err(|source| RunError::Backend {
        id: "-".to_string(),
        source,
    })?;
    let completions = dispatch(backend.as_ref(), &planned, config.concurrency)?;
    let (records, report) = score(config, &inputs, &planned, &completions)?;

    let out = &config.out;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r).expect("record serializes"));
        lines.push('\n');
    }
    let write = |name: &str, contents: &str| {
        let path = out.join(name);
        fs::write(&path, contents).map_err(io_err(&path))
    };
    write(RECORDS_FILE, &lines)?;
    write(
        METRICS_FILE,
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    write(SNAPSHOT_FILE, &config.to_toml())?;
    Ok(RunSummary {
        out_dir: out.clone(),
        report,
        warnings,
    })
}

/// Reads metric reports from run directories. A path may be a run directory
/// (`metrics.json`), a directory of run directories, a `metrics.json` file, or
/// a `.jsonl` file with one report per line.
pub fn collect_reports(paths: &[PathBuf]) -> Result<Vec<MetricReport>, RunError> {
    let mut out = Vec::new();
    for p in paths {
        collect_one(p, true, &mut out)?;
    }
    Ok(out)
}

fn read_report_file(path: &Path, out: &mut Vec<MetricReport>) -> Result<(), RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, e: serde_json::Error| {
        RunError::Config(vec![format!("{}:{line}: {e}", path.display())])
    };
    if path.extension().is_some_and(|e| e == "jsonl") {
        for (i, line) in text.lines().enumerate() {
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(line).map_err(|e| bad(i + 1, e))?);
            }
        }
    } else {
        out.push(serde_json::from_str(&text).map_err(|e| bad(1, e))?);
    }
    Ok(())
}

fn collect_one(path: &Path, top: bool, out: &mut Vec<MetricReport>) -> Result<(), RunError> {
    if path.is_file() {
        return read_report_file(path, out);
    }
    let metrics = path.join(METRICS_FILE);
    if metrics.is_file() {
        return read_report_file(&metrics, out);
    }
    if !path.is_dir() {
        return Err(RunError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        });
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let before = out.len();
    for e in entries {
        if e.is_dir() && e.join(METRICS_FILE).is_file() {
            read_report_file(&e.join(METRICS_FILE), out)?;
        } else if top && e.extension().is_some_and(|x| x == "jsonl") {
            read_report_file(&e, out)?;
        }
    }
    if out.len() == before {
        return Err(RunError::Config(vec![format!(
            "{}: no metrics.json found",
            path.display()
        )]));
    }
    Ok(())
}
