//! Prompting, model querying, answer parsing, scoring and reporting.

pub mod client;
pub mod parse;
pub mod prompt;
pub mod report;
pub mod score;

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::scenarios::{Manifest, ManifestRecord, ProbeVariant};
pub use client::{
    query_model, BiasedClient, ClientError, HttpClient, HttpClientConfig, ModelClient, OracleClient, PayloadStyle,
    QueryOutcome, QueryRequest, RateLimiter, RatePolicy, ScriptedClient,
};
pub use parse::{parse_answer, ParsedAnswer};
pub use prompt::{build_prompt, prompt_hash, PromptOverrides};
pub use report::render_report;
pub use score::{read_log, score, CategoryMetrics, Confusion, EvalRecord, MetricsReport, Ratio, UNPARSEABLE};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("response log is empty")]
    EmptyLog,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("{path}:{line}: {msg}")]
    Log { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Snake-case name of a probe variant as used in logs and paths.
pub fn probe_name(p: ProbeVariant) -> String {
    serde_json::to_value(p)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Identity of a log entry; resuming skips keys already present.
pub type RecordKey = (String, usize, String, Option<String>);

fn record_key(m: &ManifestRecord, model: &str) -> RecordKey {
    (m.scenario_id.clone(), m.frame_count, model.to_string(), m.probe.map(probe_name))
}

/// A failed query, written to the error log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub scenario_id: String,
    pub frame_count: usize,
    pub model: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
    /// Failures of kinds that stop every later request too.
    pub auth_failures: usize,
}

pub struct EvalJob<'a> {
    pub manifest: &'a Manifest,
    /// Directory the manifest paths are relative to.
    pub root: &'a Path,
    pub client: &'a dyn ModelClient,
    pub limiter: &'a RateLimiter,
    pub log_path: &'a Path,
    pub errors_path: &'a Path,
    /// Keep existing log lines and skip their keys; otherwise start fresh.
    pub resume: bool,
    pub overrides: &'a PromptOverrides,
    /// Worker threads for mock clients; live clients use the policy's
    /// in-flight bound.
    pub workers: usize,
}

enum Outcome {
    Done(Box<EvalRecord>),
    Failed(EvalFailure),
}

fn now_secs() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn run_one(job: &EvalJob<'_>, m: &ManifestRecord) -> Outcome {
    let model = job.client.tag().to_string();
    let fail = |e: ClientError| {
        Outcome::Failed(EvalFailure {
            scenario_id: m.scenario_id.clone(),
            frame_count: m.frame_count,
            model: model.clone(),
            kind: e.kind().to_string(),
            message: e.to_string(),
        })
    };
    let grid = job.root.join(&m.grid_path);
    let image_png = match std::fs::read(&grid) {
        Ok(b) => b,
        Err(e) => {
            return Outcome::Failed(EvalFailure {
                scenario_id: m.scenario_id.clone(),
                frame_count: m.frame_count,
                model,
                kind: "io".into(),
                message: format!("{}: {e}", grid.display()),
            })
        }
    };
    let prompt = build_prompt(m.category, m.frame_count, job.overrides);
    let req = QueryRequest {
        scenario_id: m.scenario_id.clone(),
        category: m.category,
        frame_count: m.frame_count,
        prompt: prompt.clone(),
        image_png,
        truth: Some(m.label.clone()),
    };
    match query_model(job.client, &req, job.limiter) {
        Ok(out) => Outcome::Done(Box::new(EvalRecord {
            scenario_id: m.scenario_id.clone(),
            category: m.category,
            frame_count: m.frame_count,
            model,
            prompt_hash: prompt_hash(&prompt),
            parsed: parse_answer(&out.raw, m.category),
            raw: out.raw,
            truth: m.label.clone(),
            level: m.level.clone(),
            probe: m.probe.map(probe_name),
            latency_secs: out.latency_secs,
            timestamp: now_secs(),
        })),
        Err(e) => fail(e),
    }
}

fn append_line<T: Serialize>(file: &mut std::fs::File, path: &Path, value: &T) -> Result<(), EvalError> {
    let mut line = serde_json::to_string(value).map_err(|e| EvalError::Report(e.to_string()))?;
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| EvalError::io(path, e))?;
    file.flush().map_err(|e| EvalError::io(path, e))
}

fn open_append(path: &Path, truncate: bool) -> Result<std::fs::File, EvalError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| EvalError::io(parent, e))?;
    }
    let mut opts = std::fs::OpenOptions::new();
    opts.create(true);
    if truncate {
        opts.write(true).truncate(true);
    } else {
        opts.append(true);
    }
    opts.open(path).map_err(|e| EvalError::io(path, e))
}

/// Queries every manifest record once. Per-record failures go to the error
/// log and the run continues; the response log has a single writer.
pub fn run_eval(job: &EvalJob<'_>) -> Result<EvalSummary, EvalError> {
    let model = job.client.tag().to_string();
    let mut done: HashSet<RecordKey> = HashSet::new();
    if job.resume && job.log_path.exists() {
        for r in read_log(job.log_path)? {
            done.insert((r.scenario_id, r.frame_count, r.model, r.probe));
        }
    }
    let mut log = open_append(job.log_path, !job.resume)?;
    let mut errors = open_append(job.errors_path, !job.resume)?;
    let mut summary = EvalSummary::default();
    let mut todo = Vec::new();
    let mut seen = HashSet::new();
    for m in &job.manifest.records {
        let key = record_key(m, &model);
        if done.contains(&key) || !seen.insert(key) {
            summary.skipped += 1;
        } else {
            todo.push(m);
        }
    }
    let workers = if job.client.is_live() {
        job.limiter.policy().max_in_flight
    } else {
        job.workers
    }
    .clamp(1, todo.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Outcome>();
    std::thread::scope(|scope| -> Result<(), EvalError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, todo) = (&next, &todo);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(m) = todo.get(i) else { break };
                if tx.send(run_one(job, m)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for outcome in rx {
            match outcome {
                Outcome::Done(rec) => {
                    append_line(&mut log, job.log_path, &rec)?;
                    summary.written += 1;
                }
                Outcome::Failed(f) => {
                    if f.kind == "auth" {
                        summary.auth_failures += 1;
                    }
                    append_line(&mut errors, job.errors_path, &f)?;
                    summary.failed += 1;
                }
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{
        build_suite, export_manifest, generate, manifest_records, write_artifacts, Category, ScenarioConstants,
        SuiteConfig,
    };
    use std::collections::BTreeMap;

    fn tiny_manifest(root: &Path) -> Manifest {
        let mut counts = BTreeMap::new();
        counts.insert(Category::Traffic, 2);
        counts.insert(Category::Planning, 1);
        let cfg = SuiteConfig {
            seed: 5,
            counts,
            frame_counts: Some(vec![3]),
        };
        let consts = ScenarioConstants::default();
        let cam = crate::render::CameraModel::default();
        let mut recs = Vec::new();
        for spec in build_suite(&cfg).unwrap() {
            let (run, truth) = generate(&spec, &consts).unwrap();
            write_artifacts(&spec, &run, &cam, &consts, root).unwrap();
            recs.extend(manifest_records(&spec, &truth, None));
        }
        export_manifest(recs, root).unwrap()
    }

    #[test]
    fn oracle_run_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let log = dir.path().join("responses.jsonl");
        let errs = dir.path().join("eval_errors.jsonl");
        let limiter = RateLimiter::new(RatePolicy::default());
        let client = OracleClient::new();
        let overrides = PromptOverrides::default();
        let mut job = EvalJob {
            manifest: &manifest,
            root: dir.path(),
            client: &client,
            limiter: &limiter,
            log_path: &log,
            errors_path: &errs,
            resume: false,
            overrides: &overrides,
            workers: 4,
        };
        let s = run_eval(&job).unwrap();
        assert_eq!(s.written, 3);
        let recs = read_log(&log).unwrap();
        assert!(recs.iter().all(|r| r.is_correct()));

        job.resume = true;
        let s = run_eval(&job).unwrap();
        assert_eq!((s.written, s.skipped), (0, 3));
        assert_eq!(read_log(&log).unwrap().len(), 3);
    }

    #[test]
    fn failures_logged_and_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_manifest(dir.path());
        let mut scripted = ScriptedClient::new("script");
        scripted.insert("traffic_000", None, "ANSWER: traffic");
        let log = dir.path().join("r.jsonl");
        let errs = dir.path().join("e.jsonl");
        let limiter = RateLimiter::new(RatePolicy::default());
        let overrides = PromptOverrides::default();
        let job = EvalJob {
            manifest: &manifest,
            root: dir.path(),
            client: &scripted,
            limiter: &limiter,
            log_path: &log,
            errors_path: &errs,
            resume: false,
            overrides: &overrides,
            workers: 2,
        };
        let s = run_eval(&job).unwrap();
        assert_eq!((s.written, s.failed), (1, 2));
        assert_eq!(std::fs::read_to_string(&errs).unwrap().lines().count(), 2);
    }
}
