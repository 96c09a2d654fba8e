//! Benchmark orchestration: run configuration, backend construction, the
//! append-only JSONL run log with resume, bounded-concurrency execution,
//! and log-level reporting (scores, stability, cross-metric correlation).

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendError, CompletionOptions, HttpBackend, HttpEndpointConfig, ModelBackend,
    ScriptedBackend,
};
use crate::codec::{self, OutputFormat, RawOutput};
use crate::dataset::{
    self, ApiCatalog, GroundTruth, Question,
};
use crate::scoring::{self, NamePolicy, Report, ScoreRecord};
use crate::stability::{self, StabilityRun};
use crate::strategies::{self, FormatConfig, TraceTurn};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Scoring(#[from] scoring::ScoringError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad config {path}: {source}")]
    Config {
        path: String,
        source: serde_json::Error,
    },
    #[error("bad log line {line} in {path}: {source}")]
    LogParse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("strategy {0:?} needs a router backend")]
    MissingRouter(String),
    #[error("unknown metric {0:?} (expected routing, syntax, post_repair, structural, ast, or judge)")]
    UnknownMetric(String),
    #[error("log contains no scored records")]
    NoScoredRecords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    TwoStep,
    Backward,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Direct => write!(f, "direct"),
            Strategy::TwoStep => write!(f, "two_step"),
            Strategy::Backward => write!(f, "backward"),
        }
    }
}

/// Backend selection: a scripted replay file for offline runs, or an HTTP
/// chat endpoint. Credentials for HTTP backends come exclusively from the
/// environment variable named in the endpoint config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Scripted {
        /// JSON file mapping script keys to ordered response lists.
        script: PathBuf,
        #[serde(default)]
        loop_responses: bool,
        #[serde(default)]
        name: Option<String>,
    },
    Http(HttpEndpointConfig),
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn ModelBackend>, RunnerError> {
        match self {
            BackendConfig::Scripted { script, loop_responses, name } => {
                let text = std::fs::read_to_string(script).map_err(|source| RunnerError::Io {
                    path: script.display().to_string(),
                    source,
                })?;
                let map: std::collections::HashMap<String, Vec<String>> =
                    serde_json::from_str(&text).map_err(|source| RunnerError::Config {
                        path: script.display().to_string(),
                        source,
                    })?;
                let label = name.clone().unwrap_or_else(|| {
                    script
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "scripted".into())
                });
                let mut backend = ScriptedBackend::from_script(label, map);
                if *loop_responses {
                    backend = backend.looping();
                }
                Ok(Box::new(backend))
            }
            BackendConfig::Http(endpoint) => Ok(Box::new(HttpBackend::new(endpoint.clone())?)),
        }
    }
}

fn default_repetitions() -> usize {
    1
}

fn default_concurrency() -> usize {
    1
}

fn default_max_depth() -> usize {
    strategies::DEFAULT_MAX_DEPTH
}

/// One benchmark run: dataset, strategy, backends, formats, and execution
/// parameters. Serialized as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub catalog: PathBuf,
    pub questions: PathBuf,
    pub strategy: Strategy,
    /// Backend answering the main prompts.
    pub primary: BackendConfig,
    /// Step-1 backend for the two-step strategy; the primary is reused when
    /// absent.
    #[serde(default)]
    pub router: Option<BackendConfig>,
    #[serde(default)]
    pub judge: Option<BackendConfig>,
    /// Backend used for model-assisted repair of unparseable outputs.
    #[serde(default)]
    pub repair: Option<BackendConfig>,
    #[serde(default)]
    pub formats: FormatConfig,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default)]
    pub policy: NamePolicy,
    /// Promote catalog-validation diagnostics to errors before running.
    #[serde(default)]
    pub strict_validation: bool,
    #[serde(default)]
    pub temperature: f64,
    /// Directory holding `runlog.jsonl`. Re-running with the same directory
    /// resumes: finished (question, repetition) pairs are skipped.
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RunnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| RunnerError::Config {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn log_path(&self) -> PathBuf {
        self.output_dir.join("runlog.jsonl")
    }
}

/// One completed unit of work: a (question, repetition) pair. Appended to
/// the run log as a single JSON line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub repetition: usize,
    pub strategy: Strategy,
    pub raw_text: String,
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceTurn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreRecord>,
    /// Backend or strategy failure; the question is recorded, not retried.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock duration; excluded from log comparisons.
    pub elapsed_ms: u64,
}

/// Load every record of a JSONL run log.
pub fn load_log(path: impl AsRef<Path>) -> Result<Vec<RunRecord>, RunnerError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RunnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|source| RunnerError::LogParse {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(records)
}

pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    /// Number of (question, repetition) pairs skipped because the log
    /// already contained them.
    pub resumed: usize,
    pub failures: usize,
}

struct TaskContext<'a> {
    config: &'a RunConfig,
    catalog: &'a ApiCatalog,
    primary: &'a dyn ModelBackend,
    router: Option<&'a dyn ModelBackend>,
    judge: Option<&'a dyn ModelBackend>,
    repair: Option<&'a dyn ModelBackend>,
}

fn execute_task(
    ctx: &TaskContext<'_>,
    question: &Question,
    gt: &GroundTruth,
    repetition: usize,
) -> RunRecord {
    let start = std::time::Instant::now();
    let options = CompletionOptions {
        temperature: ctx.config.temperature,
        script_key: Some(question.id.clone()),
        ..Default::default()
    };
    let mut record = RunRecord {
        question_id: question.id.clone(),
        repetition,
        strategy: ctx.config.strategy,
        raw_text: String::new(),
        format: ctx.config.formats.output_format,
        route: None,
        trace: Vec::new(),
        diagnostics: Vec::new(),
        score: None,
        error: None,
        elapsed_ms: 0,
    };

    let raw = match ctx.config.strategy {
        Strategy::Direct => strategies::run_direct(
            ctx.primary,
            ctx.catalog,
            question,
            ctx.config.formats,
            &options,
        )
        .map(|outcome| {
            record.trace = outcome.trace;
            outcome.raw
        }),
        Strategy::TwoStep => strategies::run_two_step(
            ctx.router.unwrap_or(ctx.primary),
            ctx.primary,
            ctx.catalog,
            question,
            ctx.config.formats,
            &options,
        )
        .map(|outcome| {
            record.route = Some(outcome.route);
            record.trace = outcome.trace;
            record.diagnostics = outcome.diagnostics;
            outcome.raw
        }),
        Strategy::Backward => strategies::run_backward(
            ctx.primary,
            ctx.catalog,
            question,
            ctx.config.formats,
            &options,
            ctx.config.max_depth,
        )
        .map(|outcome| {
            record.trace = outcome.trace;
            record.diagnostics = outcome.diagnostics;
            // Backward builds the plan turn by turn; the loggable output is
            // its serialization in the requested format.
            RawOutput {
                text: codec::serialize_call_plan(&outcome.plan, ctx.config.formats.output_format),
                format_hint: ctx.config.formats.output_format,
            }
        }),
    };

    match raw {
        Ok(raw) => {
            record.raw_text = raw.text.clone();
            let evaluation = scoring::evaluate_one(
                &question.id,
                question.difficulty,
                &raw,
                gt,
                ctx.config.policy,
                ctx.repair,
            );
            let mut score = evaluation.record;
            if let Some(judge) = ctx.judge {
                let predicted = evaluation
                    .plan
                    .as_ref()
                    .map(|p| codec::serialize_call_plan(p, OutputFormat::Json))
                    .unwrap_or_else(|| raw.text.clone());
                match crate::backends::judge_score(judge, &predicted, gt, &options) {
                    Ok(outcome) => {
                        score.judge = Some(outcome.score);
                        if let Some(diag) = outcome.diagnostic {
                            record.diagnostics.push(diag);
                        }
                    }
                    Err(err) => {
                        record.diagnostics.push(format!("judge backend failed: {err}"));
                    }
                }
            }
            record.score = Some(score);
        }
        Err(err) => record.error = Some(err.to_string()),
    }
    record.elapsed_ms = start.elapsed().as_millis() as u64;
    record
}

/// Execute a run. Work units are (question, repetition) pairs; finished
/// units already present in the log are skipped, failed units are recorded
/// and never abort the run. Records are appended to the log in task order
/// regardless of the concurrency level.
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunnerError> {
    let catalog = dataset::load_catalog(&config.catalog)?;
    let questions = dataset::load_questions(&config.questions)?;
    for (q, gt) in &questions {
        dataset::validate_against_catalog(&q.id, gt, &catalog, config.strict_validation)?;
    }

    let primary = config.primary.build()?;
    let router = config.router.as_ref().map(|c| c.build()).transpose()?;
    let judge = config.judge.as_ref().map(|c| c.build()).transpose()?;
    let repair = config.repair.as_ref().map(|c| c.build()).transpose()?;
    let ctx = TaskContext {
        config,
        catalog: &catalog,
        primary: primary.as_ref(),
        router: router.as_deref(),
        judge: judge.as_deref(),
        repair: repair.as_deref(),
    };

    std::fs::create_dir_all(&config.output_dir).map_err(|source| RunnerError::Io {
        path: config.output_dir.display().to_string(),
        source,
    })?;
    let log_path = config.log_path();
    let mut existing = Vec::new();
    if log_path.exists() {
        existing = load_log(&log_path)?;
    }
    let done: HashSet<(String, usize)> = existing
        .iter()
        .map(|r| (r.question_id.clone(), r.repetition))
        .collect();

    let tasks: Vec<(usize, &(Question, GroundTruth), usize)> = questions
        .iter()
        .flat_map(|pair| (0..config.repetitions).map(move |rep| (pair, rep)))
        .filter(|(pair, rep)| !done.contains(&(pair.0.id.clone(), *rep)))
        .enumerate()
        .map(|(i, (pair, rep))| (i, pair, rep))
        .collect();
    let resumed = questions.len() * config.repetitions - tasks.len();

    let mut log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|source| RunnerError::Io { path: log_path.display().to_string(), source })?;
    let mut append = |record: &RunRecord| -> Result<(), RunnerError> {
        let line = serde_json::to_string(record).expect("run records serialize infallibly");
        writeln!(log_file, "{line}").map_err(|source| RunnerError::Io {
            path: log_path.display().to_string(),
            source,
        })
    };

    let mut fresh: Vec<RunRecord> = Vec::with_capacity(tasks.len());
    if config.concurrency <= 1 {
        for (_, (question, gt), rep) in &tasks {
            let record = execute_task(&ctx, question, gt, *rep);
            append(&record)?;
            fresh.push(record);
        }
    } else {
        let queue = Mutex::new(tasks.iter());
        let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
        std::thread::scope(|scope| {
            for _ in 0..config.concurrency {
                let tx = tx.clone();
                let queue = &queue;
                let ctx = &ctx;
                scope.spawn(move || loop {
                    let task = queue.lock().unwrap().next();
                    match task {
                        Some((index, (question, gt), rep)) => {
                            let record = execute_task(ctx, question, gt, *rep);
                            if tx.send((*index, record)).is_err() {
                                break;
                            }
                        }
                        None => break,
                    }
                });
            }
            drop(tx);
            // Re-order completions so the log is written in task order.
            let mut pending: BTreeMap<usize, RunRecord> = BTreeMap::new();
            let mut next = 0;
            for (index, record) in rx {
                pending.insert(index, record);
                while let Some(record) = pending.remove(&next) {
                    if let Err(err) = append(&record) {
                        return Err(err);
                    }
                    fresh.push(record);
                    next += 1;
                }
            }
            Ok(())
        })?;
    }

    let failures = fresh.iter().filter(|r| r.error.is_some()).count();
    let mut records = existing;
    records.extend(fresh);
    Ok(RunOutcome { records, resumed, failures })
}

// --- log-level reporting ---------------------------------------------------

/// Aggregate all scored records of a log into a metrics report.
pub fn score_log(records: &[RunRecord]) -> Result<Report, RunnerError> {
    let scores: Vec<ScoreRecord> = records.iter().filter_map(|r| r.score.clone()).collect();
    if scores.is_empty() {
        return Err(RunnerError::NoScoredRecords);
    }
    Ok(scoring::aggregate(&scores)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionStability {
    pub question_id: String,
    pub repetitions: usize,
    pub election: f64,
    /// Absent when the question has fewer than 2 repetitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levenshtein: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub per_question: Vec<QuestionStability>,
    pub election_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levenshtein_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

/// Stability scores per question over the log's repetitions, in first-seen
/// question order. Outputs are ordered by repetition index.
pub fn stability_log(records: &[RunRecord]) -> Result<StabilityReport, RunnerError> {
    let mut grouped: Vec<(String, Vec<(usize, String)>)> = Vec::new();
    for record in records {
        let output = record.raw_text.clone();
        match grouped.iter_mut().find(|(id, _)| *id == record.question_id) {
            Some((_, outputs)) => outputs.push((record.repetition, output)),
            None => grouped.push((record.question_id.clone(), vec![(record.repetition, output)])),
        }
    }
    if grouped.is_empty() {
        return Err(RunnerError::NoScoredRecords);
    }

    let mut per_question = Vec::new();
    let mut notices = Vec::new();
    for (question_id, mut outputs) in grouped {
        outputs.sort_by_key(|(rep, _)| *rep);
        let texts: Vec<String> = outputs.into_iter().map(|(_, text)| text).collect();
        let run = StabilityRun::from_raw(question_id.clone(), &texts);
        let election = stability::election_score(&run).expect("grouped runs are non-empty");
        let levenshtein = match stability::levenshtein_stability(&run) {
            Ok(v) => Some(v),
            Err(_) => {
                notices.push(format!(
                    "{question_id}: only {} repetition(s); levenshtein stability skipped",
                    texts.len()
                ));
                None
            }
        };
        per_question.push(QuestionStability {
            question_id,
            repetitions: texts.len(),
            election,
            levenshtein,
        });
    }

    let election_mean =
        per_question.iter().map(|q| q.election).sum::<f64>() / per_question.len() as f64;
    let lev: Vec<f64> = per_question.iter().filter_map(|q| q.levenshtein).collect();
    let levenshtein_mean = if lev.is_empty() {
        None
    } else {
        Some(lev.iter().sum::<f64>() / lev.len() as f64)
    };
    Ok(StabilityReport { per_question, election_mean, levenshtein_mean, notices })
}

fn record_metric(score: &ScoreRecord, metric: &str) -> Result<Option<f64>, RunnerError> {
    Ok(match metric {
        "routing" => Some(f64::from(score.routing_match)),
        "syntax" => Some(f64::from(score.syntax_valid)),
        "post_repair" => Some(f64::from(score.post_repair_valid)),
        "structural" => Some(f64::from(score.structural)),
        "ast" => Some(f64::from(score.ast_exact)),
        "judge" => score.judge.map(f64::from),
        other => return Err(RunnerError::UnknownMetric(other.to_string())),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Correlation {
    pub metric_a: String,
    pub metric_b: String,
    pub pairs: usize,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

/// Correlate two metrics across one or more run logs.
///
/// With a single log the pairing is per scored record; with several logs each
/// contributes one pair of all-average values, and a notice is emitted when
/// the logs do not cover the same question set.
pub fn correlate(
    logs: &[Vec<RunRecord>],
    metric_a: &str,
    metric_b: &str,
) -> Result<Correlation, RunnerError> {
    metric_key(metric_a)?;
    metric_key(metric_b)?;
    let mut notices = Vec::new();
    let (xs, ys) = if logs.len() == 1 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for record in &logs[0] {
            if let Some(score) = &record.score {
                if let (Some(a), Some(b)) =
                    (record_metric(score, metric_a)?, record_metric(score, metric_b)?)
                {
                    xs.push(a);
                    ys.push(b);
                }
            }
        }
        (xs, ys)
    } else {
        let question_sets: Vec<HashSet<&str>> = logs
            .iter()
            .map(|log| log.iter().map(|r| r.question_id.as_str()).collect())
            .collect();
        if question_sets.windows(2).any(|w| w[0] != w[1]) {
            notices.push(
                "logs cover different question sets; per-log averages are not directly comparable"
                    .to_string(),
            );
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for log in logs {
            let report = score_log(log)?;
            let a = report
                .metric(metric_key(metric_a)?)
                .ok_or_else(|| RunnerError::UnknownMetric(metric_a.to_string()))?;
            let b = report
                .metric(metric_key(metric_b)?)
                .ok_or_else(|| RunnerError::UnknownMetric(metric_b.to_string()))?;
            xs.push(a.all_avg);
            ys.push(b.all_avg);
        }
        (xs, ys)
    };
    let pairs = xs.len();
    let r = scoring::pearson_r(&xs, &ys)?;
    Ok(Correlation {
        metric_a: metric_a.to_string(),
        metric_b: metric_b.to_string(),
        pairs,
        r,
        notices,
    })
}

fn metric_key(name: &str) -> Result<&str, RunnerError> {
    match name {
        "routing" | "syntax" | "post_repair" | "structural" | "ast" | "judge" => Ok(name),
        other => Err(RunnerError::UnknownMetric(other.to_string())),
    }
}
