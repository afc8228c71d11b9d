//! Runs suites across a backend × model matrix, persists the run log and
//! renders report tables.

mod cost;
mod report;
mod script;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cost::{cost_sweep, CostSample, CostSweep, PromptPath, ASSUMED_OUTPUT_TOKENS};
pub use report::{render_reports, Ratio, Report, ReportFormat};
pub use script::{build_fixtures, CellScript, ResponseKind, ResponseSpec, Scenario, ScriptedBackend};
pub use validate::{validate_suite, SuiteValidation};

use crate::eval::{EvalError, EvalRecord, Evaluator};
use crate::llm::{LlmError, ModelConfig};
use crate::promptgen::Application;
use crate::sandbox::{ExecBackendKind, SandboxLimits};
use crate::suite::{Difficulty, Suite, SuiteError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.display().to_string(), source }
}

/// What to run: every case of every suite against every backend and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMatrix {
    pub suites: Vec<PathBuf>,
    pub backends: Vec<ExecBackendKind>,
    pub models: Vec<String>,
    pub k: usize,
    pub debug_budget: usize,
    pub limits: SandboxLimits,
    pub concurrency: usize,
}

impl RunMatrix {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.suites.is_empty() {
            return fail("the matrix names no suites");
        }
        if self.backends.is_empty() {
            return fail("the matrix names no backends");
        }
        if self.models.is_empty() {
            return fail("the matrix names no models");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.concurrency == 0 {
            return fail("concurrency must be at least 1");
        }
        let distinct: BTreeSet<_> = self.backends.iter().collect();
        if distinct.len() != self.backends.len() {
            return fail("a backend is listed twice");
        }
        let distinct: BTreeSet<_> = self.models.iter().collect();
        if distinct.len() != self.models.len() {
            return fail("a model is listed twice");
        }
        self.limits.validate().map_err(|e| BenchError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRef {
    pub id: String,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_digest: String,
    pub mode: String,
    pub estimator: String,
    pub started: String,
    #[serde(default)]
    pub finished: Option<String>,
    pub matrix: RunMatrix,
    /// Cases per application, in suite order.
    pub cases: BTreeMap<Application, Vec<CaseRef>>,
}

/// Records of one run plus its metadata. On disk: `meta.json` and
/// `run.jsonl` (one record per line) in the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub records: Vec<EvalRecord>,
}

pub const LOG_FILE: &str = "run.jsonl";
pub const META_FILE: &str = "meta.json";

impl RunLog {
    pub fn load(dir: &Path) -> Result<Self, BenchError> {
        let meta_path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: RunMeta = serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", meta_path.display())))?;
        let log_path = dir.join(LOG_FILE);
        let text = std::fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: EvalRecord = serde_json::from_str(line)
                .map_err(|e| BenchError::Config(format!("{} line {}: {e}", log_path.display(), i + 1)))?;
            records.push(rec);
        }
        let log = Self { meta, records };
        log.check_references()?;
        Ok(log)
    }

    fn check_references(&self) -> Result<(), BenchError> {
        let m = &self.meta.matrix;
        for r in &self.records {
            let known_case = self.meta.cases.get(&r.application).is_some_and(|cs| cs.iter().any(|c| c.id == r.case_id));
            if !known_case || !m.backends.contains(&r.backend) || !m.models.contains(&r.model) {
                return Err(BenchError::Config(format!(
                    "record for {}/{}/{} is outside the run matrix",
                    r.case_id, r.backend, r.model
                )));
            }
        }
        Ok(())
    }
}

fn config_digest(matrix: &RunMatrix, models: &[&ModelConfig]) -> String {
    let doc = serde_json::json!({ "matrix": matrix, "models": models });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs the matrix. Suites, models and golden programs are checked before
/// anything is sent to a model; after that, per-attempt problems end up in
/// the records and never stop the run. With `out`, the log is appended to
/// `out/run.jsonl` in task order as tasks finish.
pub fn run_suite(
    matrix: &RunMatrix,
    models: &BTreeMap<String, ModelConfig>,
    evaluator: &Evaluator,
    mode: &str,
    out: Option<&Path>,
) -> Result<RunLog, BenchError> {
    matrix.validate()?;
    let configs: Vec<&ModelConfig> = matrix
        .models
        .iter()
        .map(|name| models.get(name).ok_or_else(|| BenchError::Config(format!("unknown model `{name}`"))))
        .collect::<Result<_, _>>()?;
    for cfg in &configs {
        cfg.validate()?;
    }
    let suites: Vec<Suite> = matrix.suites.iter().map(|p| Suite::load(p)).collect::<Result<_, _>>()?;

    let evaluator = evaluator.clone().with_limits(matrix.limits);
    let mut cases: BTreeMap<Application, Vec<CaseRef>> = BTreeMap::new();
    let mut prepared = Vec::new();
    for suite in &suites {
        for case in &suite.cases {
            let refs = cases.entry(case.application).or_default();
            if refs.iter().any(|c| c.id == case.id) {
                return Err(BenchError::Config(format!("case id `{}` appears in two {} suites", case.id, case.application)));
            }
            refs.push(CaseRef { id: case.id.clone(), difficulty: case.difficulty });
            prepared.push(evaluator.prepare(case, &matrix.backends)?);
        }
    }

    let mut meta = RunMeta {
        config_digest: config_digest(matrix, &configs),
        mode: mode.to_string(),
        estimator: evaluator.prompts.estimator().id().to_string(),
        started: now(),
        finished: None,
        matrix: matrix.clone(),
        cases,
    };

    let mut log_file = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            write_meta(dir, &meta)?;
            let p = dir.join(LOG_FILE);
            Some((std::fs::File::create(&p).map_err(io_err(&p))?, p))
        }
        None => None,
    };

    let n_models = configs.len();
    let tasks: Vec<(usize, ExecBackendKind, usize)> = (0..prepared.len())
        .flat_map(|c| matrix.backends.iter().flat_map(move |b| (0..n_models).map(move |m| (c, *b, m))))
        .collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Vec<EvalRecord>)>();
    let mut records = Vec::new();
    let mut write_error = None;

    std::thread::scope(|scope| {
        for _ in 0..matrix.concurrency.min(tasks.len().max(1)) {
            let tx = tx.clone();
            let (next, tasks, prepared, configs, evaluator) = (&next, &tasks, &prepared, &configs, &evaluator);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(c, backend, m)) = tasks.get(i) else { break };
                let recs = evaluator.run_case(&prepared[c], backend, configs[m], matrix.k, matrix.debug_budget);
                if tx.send((i, recs)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Single writer: buffer out-of-order results so the log keeps task order.
        let mut pending = BTreeMap::new();
        let mut written = 0;
        for (i, recs) in rx {
            pending.insert(i, recs);
            while let Some(recs) = pending.remove(&written) {
                if let Some((file, path)) = log_file.as_mut() {
                    for r in &recs {
                        let line = serde_json::to_string(r).expect("records serialize");
                        if let Err(e) = writeln!(file, "{line}") {
                            write_error.get_or_insert(BenchError::Io { path: path.display().to_string(), source: e });
                        }
                    }
                }
                records.extend(recs);
                written += 1;
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    meta.finished = Some(now());
    if let Some(dir) = out {
        write_meta(dir, &meta)?;
    }
    Ok(RunLog { meta, records })
}

fn write_meta(dir: &Path, meta: &RunMeta) -> Result<(), BenchError> {
    let p = dir.join(META_FILE);
    std::fs::write(&p, serde_json::to_string_pretty(meta).expect("meta serializes")).map_err(io_err(&p))
}
