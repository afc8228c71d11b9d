//! Scripted model responses for building replay fixtures with known
//! pass/fail patterns.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{run_suite, BenchError, RunLog, RunMatrix};
use crate::eval::Evaluator;
use crate::llm::{fixture_key, Completion, CompletionBackend, Gateway, LlmError, ModelConfig, RecordingBackend, Usage};
use crate::promptgen::{estimate_tokens, Application, PromptBundle, Role};
use crate::sandbox::{ExecBackendKind, SandboxLimits};
use crate::suite::{BenchmarkCase, Suite};

/// What a scripted model answers with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    /// The case's golden program (or golden value for direct answers).
    Golden,
    /// The first shipped mutant, or `wrong` when there is none.
    Mutant,
    /// A program that runs and returns a wrong value.
    Wrong,
    /// The golden program plus one extra change to the graph.
    Graph,
    Syntax,
    /// Reads an attribute the graph does not have.
    Attribute,
    /// Calls a function or opens a file that does not exist.
    File,
    /// Calls a real function with bad arguments.
    Args,
    /// Fails at runtime on an invalid operation.
    Operation,
}

/// Responses for one case: one kind for every attempt, a chain indexed by
/// debug round, or one chain per sample. Past the end, the last entry repeats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseSpec {
    One(ResponseKind),
    Chain(Vec<ResponseKind>),
    Samples { samples: Vec<Vec<ResponseKind>> },
}

impl ResponseSpec {
    pub fn kind_at(&self, sample: usize, round: usize) -> ResponseKind {
        fn at<T: Copy>(v: &[T], i: usize) -> Option<T> {
            v.get(i).or(v.last()).copied()
        }
        match self {
            ResponseSpec::One(k) => *k,
            ResponseSpec::Chain(c) => at(c, round).unwrap_or(ResponseKind::Wrong),
            ResponseSpec::Samples { samples } => {
                let chain = samples.get(sample).or(samples.last()).map(Vec::as_slice).unwrap_or(&[]);
                at(chain, round).unwrap_or(ResponseKind::Wrong)
            }
        }
    }

    fn kinds(&self) -> Vec<ResponseKind> {
        match self {
            ResponseSpec::One(k) => vec![*k],
            ResponseSpec::Chain(c) => c.clone(),
            ResponseSpec::Samples { samples } => samples.iter().flatten().copied().collect(),
        }
    }
}

/// Responses of one model on one backend. Cases in `pass` get the golden
/// program and the others `default` (a mutant unless given); without
/// `pass`, cases not listed in `cases` get `default` (golden unless given).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellScript {
    pub model: String,
    pub backend: ExecBackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ResponseSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cases: BTreeMap<String, ResponseSpec>,
}

impl CellScript {
    pub fn spec_for(&self, case_id: &str) -> ResponseSpec {
        if let Some(spec) = self.cases.get(case_id) {
            return spec.clone();
        }
        match &self.pass {
            Some(pass) if pass.iter().any(|p| p == case_id) => ResponseSpec::One(ResponseKind::Golden),
            Some(_) => self.default.clone().unwrap_or(ResponseSpec::One(ResponseKind::Mutant)),
            None => self.default.clone().unwrap_or(ResponseSpec::One(ResponseKind::Golden)),
        }
    }
}

/// A run matrix plus the scripted responses that fill it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub description: String,
    pub suites: Vec<PathBuf>,
    pub backends: Vec<ExecBackendKind>,
    pub models: Vec<String>,
    pub k: usize,
    pub self_debug: usize,
    pub cells: Vec<CellScript>,
}

impl Scenario {
    /// Suite paths are resolved against the scenario file's directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.display().to_string(), source })?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut s.suites {
            *p = base.join(&*p);
        }
        for c in &s.cells {
            if !s.models.contains(&c.model) || !s.backends.contains(&c.backend) {
                return Err(BenchError::Config(format!("cell {}/{} is outside the scenario matrix", c.model, c.backend)));
            }
        }
        Ok(s)
    }

    pub fn matrix(&self, limits: SandboxLimits, concurrency: usize) -> RunMatrix {
        RunMatrix {
            suites: self.suites.clone(),
            backends: self.backends.clone(),
            models: self.models.clone(),
            k: self.k,
            debug_budget: self.self_debug,
            limits,
            concurrency,
        }
    }
}

fn fenced(backend: ExecBackendKind, body: &str) -> String {
    let lang = match backend {
        ExecBackendKind::Relational => "sql",
        ExecBackendKind::DirectAnswer => "json",
        _ => "python",
    };
    format!("```{lang}\n{}\n```", body.trim_end())
}

fn broken_program(backend: ExecBackendKind, kind: ResponseKind) -> &'static str {
    use ExecBackendKind::*;
    use ResponseKind::*;
    match (backend, kind) {
        (GraphApi, Syntax) => "result = len(G.nodes(\n",
        (GraphApi, Attribute) => "result = sum(d[\"weight\"] for _, _, d in G.edges(data=True))",
        (GraphApi, File) => "result = nx.read_graphml(\"network.graphml\").number_of_nodes()",
        (GraphApi, Args) => "result = G.degree(1, 2, 3)",
        (GraphApi, Operation) => "result = max(n for n in G.nodes if n == \"\")",
        (GraphApi, _) => "result = -1",
        (Tabular, Syntax) => "result = len(nodes",
        (Tabular, Attribute) => "result = edges[\"weight\"].sum()",
        (Tabular, File) => "result = pd.read_csv(\"nodes.csv\")",
        (Tabular, Args) => "result = len(nodes, edges)",
        (Tabular, Operation) => "result = nodes[\"id\"].iloc[len(nodes)]",
        (Tabular, _) => "result = -1",
        (Relational, Syntax) => "SELEC COUNT(*) FROM nodes;",
        (Relational, Attribute) => "SELECT weight FROM edges;",
        (Relational, File) => "SELECT * FROM devices;",
        (Relational, Args) => "SELECT substr(src) FROM edges;",
        (Relational, Operation) => "INSERT INTO nodes (id) VALUES (NULL, NULL);",
        (Relational, _) => "SELECT -1;",
        (DirectAnswer, Syntax) => "",
        (DirectAnswer, _) => r#"{"kind": "scalar", "value": -1}"#,
    }
}

fn graph_change(backend: ExecBackendKind) -> &'static str {
    match backend {
        ExecBackendKind::GraphApi => "for _n in sorted(G.nodes)[:1]:\n    G.nodes[_n][\"audited\"] = True\n",
        ExecBackendKind::Tabular => "nodes[\"audited\"] = True\n",
        _ => "DELETE FROM edges WHERE rowid = (SELECT MIN(rowid) FROM edges);\n",
    }
}

/// Reply text for `kind` on `case`; `golden_value` is the golden envelope
/// value, needed only for direct answers.
fn response_text(
    case: &BenchmarkCase,
    backend: ExecBackendKind,
    kind: ResponseKind,
    golden_value: Option<&serde_json::Value>,
) -> Result<String, BenchError> {
    if backend == ExecBackendKind::DirectAnswer {
        return Ok(match (kind, golden_value) {
            (ResponseKind::Syntax, _) => "I cannot determine that from the data.".to_string(),
            (ResponseKind::Golden, Some(v)) => fenced(backend, &v.to_string()),
            (ResponseKind::Golden, None) => return Err(BenchError::Config(format!("case `{}` has no golden value", case.id))),
            _ => fenced(backend, broken_program(backend, ResponseKind::Wrong)),
        });
    }
    let golden = || {
        case.golden_program(backend)?
            .ok_or_else(|| BenchError::Config(format!("case `{}` has no {} golden program", case.id, backend.label())))
    };
    let body = match kind {
        ResponseKind::Golden => golden()?,
        ResponseKind::Graph => format!("{}\n{}", golden()?.trim_end(), graph_change(backend)),
        ResponseKind::Mutant => match case.mutants(backend)?.first() {
            Some(p) => std::fs::read_to_string(p).map_err(|source| BenchError::Io { path: p.display().to_string(), source })?,
            None => broken_program(backend, ResponseKind::Wrong).to_string(),
        },
        other => broken_program(backend, other).to_string(),
    };
    Ok(fenced(backend, &body))
}

struct CaseScript {
    spec: ResponseSpec,
    texts: BTreeMap<ResponseKind, String>,
}

/// Answers from a scenario: identifies the case by the query at the end of
/// the first user message and the debug round by counting assistant turns.
pub struct ScriptedBackend {
    scripts: HashMap<(String, Application, ExecBackendKind, String), CaseScript>,
}

impl ScriptedBackend {
    pub fn new(scenario: &Scenario, evaluator: &Evaluator) -> Result<Self, BenchError> {
        let mut scripts = HashMap::new();
        for path in &scenario.suites {
            let suite = Suite::load(path)?;
            for case in &suite.cases {
                let mut golden_value = None;
                for cell in &scenario.cells {
                    let spec = cell.spec_for(&case.id);
                    if cell.backend == ExecBackendKind::DirectAnswer && golden_value.is_none() && spec.kinds().contains(&ResponseKind::Golden) {
                        let prepared = evaluator.prepare(case, &[ExecBackendKind::DirectAnswer])?;
                        let env = prepared
                            .reference(ExecBackendKind::DirectAnswer)
                            .and_then(|o| o.envelope())
                            .ok_or_else(|| BenchError::Config(format!("case `{}` has no golden outcome", case.id)))?;
                        golden_value = Some(env.value.to_json());
                    }
                    let mut texts = BTreeMap::new();
                    for kind in spec.kinds() {
                        texts.insert(kind, response_text(case, cell.backend, kind, golden_value.as_ref())?);
                    }
                    scripts.insert((cell.model.clone(), case.application, cell.backend, case.query.clone()), CaseScript { spec, texts });
                }
            }
        }
        Ok(Self { scripts })
    }
}

fn query_of(bundle: &PromptBundle) -> Option<&str> {
    let first = bundle.messages.iter().find(|m| m.role == Role::User)?;
    let at = first.content.rfind("Query: ")?;
    Some(first.content[at + "Query: ".len()..].trim())
}

impl CompletionBackend for ScriptedBackend {
    fn complete_one(&self, bundle: &PromptBundle, cfg: &ModelConfig, attempt: usize) -> Result<Completion, LlmError> {
        let miss = || LlmError::FixtureMiss { key: fixture_key(&cfg.name, bundle), attempt };
        let query = query_of(bundle).ok_or_else(miss)?;
        let script = self
            .scripts
            .get(&(cfg.name.clone(), bundle.application, bundle.backend, query.to_string()))
            .ok_or_else(miss)?;
        let round = bundle.messages.iter().filter(|m| m.role == Role::Assistant).count();
        let text = script.texts[&script.spec.kind_at(attempt, round)].clone();
        let usage = Usage { tokens_in: bundle.estimated_tokens as u64, tokens_out: estimate_tokens(&text) as u64 };
        Ok(Completion { text, usage, latency: Duration::ZERO, attempt_index: attempt })
    }
}

/// Runs a scenario through the real evaluator with scripted responses and
/// records every model call into a fresh fixture file at `out`.
pub fn build_fixtures(
    scenario: &Scenario,
    models: &BTreeMap<String, ModelConfig>,
    evaluator: &Evaluator,
    limits: SandboxLimits,
    out: &Path,
) -> Result<RunLog, BenchError> {
    let scripted = ScriptedBackend::new(scenario, evaluator)?;
    if out.exists() {
        std::fs::remove_file(out).map_err(|source| BenchError::Io { path: out.display().to_string(), source })?;
    }
    let recording = RecordingBackend::new(Arc::new(scripted), out)?;
    let ev = evaluator.clone().with_gateway(Gateway::new(Arc::new(recording)));
    run_suite(&scenario.matrix(limits, 1), models, &ev, "scripted", None)
}
