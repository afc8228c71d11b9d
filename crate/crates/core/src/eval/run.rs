use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{evaluate_outcome, ErrorClass, EvalError, Verdict};
use crate::graph::{serialize_graph, PropertyGraph, Tolerance};
use crate::llm::{compute_cost, Completion, Cost, Gateway, LlmError, ModelConfig, Usage};
use crate::promptgen::{build_task_context, Application, PromptBundle, PromptError, PromptGenerator};
use crate::sandbox::{extract_code, parse_direct_answer, ExecBackendKind, ExecFailure, ExecOutcome, FailurePhase, Sandbox, SandboxError, SandboxLimits};
use crate::suite::{BenchmarkCase, Difficulty};

/// Why a record has no execution outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub kind: String,
    pub message: String,
}

/// One attempt: a model call, the program it produced, and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case_id: String,
    pub application: Application,
    pub difficulty: Difficulty,
    pub backend: ExecBackendKind,
    pub model: String,
    /// Index of the independent sample this attempt belongs to.
    pub attempt_index: usize,
    pub debug_round: usize,
    pub prompt_tokens: usize,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ExecOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordError>,
    pub verdict: Verdict,
    pub usage: Usage,
    pub cost: Cost,
    pub latency_ms: u64,
    pub timestamp: String,
}

/// A case with its fixture graph and golden outcomes, ready to evaluate.
#[derive(Debug, Clone)]
pub struct PreparedCase {
    pub case: BenchmarkCase,
    pub graph: PropertyGraph,
    pub goldens: BTreeMap<ExecBackendKind, ExecOutcome>,
}

impl PreparedCase {
    pub fn reference(&self, backend: ExecBackendKind) -> Option<&ExecOutcome> {
        self.case.reference_backend(backend).and_then(|b| self.goldens.get(&b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassAtK {
    pub pass_at_k: bool,
    pub avg_pass_prob: f64,
    pub passed_samples: usize,
    pub samples: usize,
}

/// Pass@k over sample chains: a chain counts once, as passed if any of its
/// rounds passed.
pub fn aggregate_pass_at_k(records: &[EvalRecord]) -> PassAtK {
    let mut chains: BTreeMap<usize, bool> = BTreeMap::new();
    for r in records {
        *chains.entry(r.attempt_index).or_default() |= r.verdict.passed;
    }
    let samples = chains.len();
    let passed_samples = chains.values().filter(|p| **p).count();
    PassAtK {
        pass_at_k: passed_samples > 0,
        avg_pass_prob: if samples == 0 { 0.0 } else { passed_samples as f64 / samples as f64 },
        passed_samples,
        samples,
    }
}

/// A model reply and the outcome of running it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub completion: Completion,
    /// Extracted program, or the raw reply for direct answers.
    pub code: String,
    pub outcome: ExecOutcome,
}

#[derive(Debug, Error)]
pub enum AttemptError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// Message fed back to the model after a failed attempt.
pub fn debug_feedback(outcome: &ExecOutcome, class: Option<ErrorClass>) -> String {
    match (outcome, class) {
        (ExecOutcome::Failure(f), _) => f.message.clone(),
        (_, Some(ErrorClass::GraphsNotIdentical)) => WRONG_GRAPH_FEEDBACK.to_string(),
        _ => WRONG_VALUE_FEEDBACK.to_string(),
    }
}

const WRONG_VALUE_FEEDBACK: &str = "The program ran, but its result is not the correct answer to the query.";
const WRONG_GRAPH_FEEDBACK: &str = "The program ran, but the network it left behind is not the correct updated network.";

/// Runs cases end to end: prompt, model, sandbox, verdict, self-debug.
#[derive(Clone)]
pub struct Evaluator {
    pub prompts: PromptGenerator,
    pub gateway: Gateway,
    pub sandbox: Sandbox,
    pub limits: SandboxLimits,
    pub tolerance: Tolerance,
    memo: Option<Arc<Mutex<HashMap<String, ExecOutcome>>>>,
}

impl std::fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Evaluator").field("limits", &self.limits).finish_non_exhaustive()
    }
}

impl Evaluator {
    pub fn new(gateway: Gateway) -> Self {
        Self {
            prompts: PromptGenerator::default(),
            gateway,
            sandbox: Sandbox::default(),
            limits: SandboxLimits::default(),
            tolerance: Tolerance::default(),
            memo: Some(Arc::default()),
        }
    }

    pub fn with_limits(mut self, limits: SandboxLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_sandbox(mut self, sandbox: Sandbox) -> Self {
        self.sandbox = sandbox;
        self
    }

    pub fn with_gateway(mut self, gateway: Gateway) -> Self {
        self.gateway = gateway;
        self
    }

    /// Runs every program afresh instead of reusing earlier outcomes; for
    /// long-lived processes where the cache would only grow.
    pub fn without_memo(mut self) -> Self {
        self.memo = None;
        self
    }

    pub fn with_prompts(mut self, prompts: PromptGenerator) -> Self {
        self.prompts = prompts;
        self
    }

    /// Executes a program, reusing the outcome of an identical earlier run
    /// (same backend, code and graph) since programs are deterministic.
    pub fn execute(&self, code: &str, g: &PropertyGraph, backend: ExecBackendKind) -> Result<ExecOutcome, SandboxError> {
        let Some(memo) = &self.memo else {
            return self.sandbox.execute(code, g, backend, &self.limits);
        };
        let mut h = Sha256::new();
        for part in [backend.as_str(), code, &serialize_graph(g, true)] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let key = hex::encode(h.finalize());
        if let Some(hit) = memo.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let out = self.sandbox.execute(code, g, backend, &self.limits)?;
        memo.lock().expect("memo lock").insert(key, out.clone());
        Ok(out)
    }

    /// Loads the fixture and runs the golden programs that `backends` compare against.
    pub fn prepare(&self, case: &BenchmarkCase, backends: &[ExecBackendKind]) -> Result<PreparedCase, EvalError> {
        let graph = case.load_fixture()?;
        let mut goldens = BTreeMap::new();
        for b in backends {
            let Some(reference) = case.reference_backend(*b) else {
                return Err(EvalError::SuiteDefect { case: case.id.clone(), message: "no golden program".into() });
            };
            if goldens.contains_key(&reference) {
                continue;
            }
            let code = case.golden_program(reference)?.expect("reference backend has a golden");
            let outcome = self.execute(&code, &graph, reference)?;
            if let ExecOutcome::Failure(f) = &outcome {
                return Err(EvalError::SuiteDefect {
                    case: case.id.clone(),
                    message: format!("golden {} program failed: {}", reference, f.message),
                });
            }
            goldens.insert(reference, outcome);
        }
        Ok(PreparedCase { case: case.clone(), graph, goldens })
    }

    pub fn judge(&self, prepared: &PreparedCase, backend: ExecBackendKind, candidate: &ExecOutcome) -> Result<Verdict, EvalError> {
        let golden = prepared.reference(backend).ok_or_else(|| EvalError::SuiteDefect {
            case: prepared.case.id.clone(),
            message: format!("no golden outcome prepared for {backend}"),
        })?;
        evaluate_outcome(candidate, golden, &prepared.case, &prepared.graph, self.tolerance, &self.sandbox, &self.limits)
    }

    /// Codegen prompt for code backends; the graph-in-prompt one for direct answers.
    pub fn first_prompt(
        &self,
        app: Application,
        graph: &PropertyGraph,
        query: &str,
        backend: ExecBackendKind,
        cfg: &ModelConfig,
    ) -> Result<PromptBundle, PromptError> {
        if backend == ExecBackendKind::DirectAnswer {
            self.prompts.build_strawman_prompt(app, graph, query, cfg.context_limit)
        } else {
            self.prompts.build_codegen_prompt(&build_task_context(app, graph), query, backend)
        }
    }

    /// One model call, then extraction and execution of the reply. A reply
    /// without a code block is an extraction failure, not an error.
    pub fn generate(
        &self,
        bundle: &PromptBundle,
        cfg: &ModelConfig,
        sample: usize,
        graph: &PropertyGraph,
        backend: ExecBackendKind,
    ) -> Result<Generated, AttemptError> {
        let completion = self.gateway.complete_attempt(bundle, cfg, sample)?;
        if backend == ExecBackendKind::DirectAnswer {
            let outcome = parse_direct_answer(&completion.text, graph);
            return Ok(Generated { code: completion.text.clone(), completion, outcome });
        }
        match extract_code(&completion.text) {
            Ok(code) => {
                let outcome = self.execute(&code, graph, backend)?;
                Ok(Generated { completion, code, outcome })
            }
            Err(e) => {
                let failure = ExecFailure::new(FailurePhase::Extraction, "ExtractError", format!("ExtractError: {e}"));
                Ok(Generated { completion, code: String::new(), outcome: ExecOutcome::Failure(failure) })
            }
        }
    }

    /// `k` independent samples, each followed by up to `debug_budget`
    /// self-debug rounds while it keeps failing. Every attempt is recorded.
    pub fn run_case(
        &self,
        prepared: &PreparedCase,
        backend: ExecBackendKind,
        cfg: &ModelConfig,
        k: usize,
        debug_budget: usize,
    ) -> Vec<EvalRecord> {
        let case = &prepared.case;
        let base = |sample: usize, round: usize, bundle: Option<&PromptBundle>| EvalRecord {
            case_id: case.id.clone(),
            application: case.application,
            difficulty: case.difficulty,
            backend,
            model: cfg.name.clone(),
            attempt_index: sample,
            debug_round: round,
            prompt_tokens: bundle.map_or(0, |b| b.estimated_tokens),
            code: String::new(),
            outcome: None,
            error: None,
            verdict: Verdict::pass(),
            usage: Usage::default(),
            cost: Cost::ZERO,
            latency_ms: 0,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        let harness_failure = |mut rec: EvalRecord, class: ErrorClass, kind: &str, message: String| {
            rec.verdict = Verdict::fail(class, message.clone());
            rec.error = Some(RecordError { kind: kind.into(), message });
            rec
        };

        let first_bundle = match self.first_prompt(case.application, &prepared.graph, &case.query, backend, cfg) {
            Ok(b) => b,
            Err(PromptError::ContextOverflow { estimated, limit }) => {
                let mut rec = base(0, 0, None);
                rec.prompt_tokens = estimated;
                return vec![harness_failure(rec, ErrorClass::ContextOverflow, "context-overflow", format!("prompt needs about {estimated} tokens, limit is {limit}"))];
            }
            Err(e) => return vec![harness_failure(base(0, 0, None), ErrorClass::GatewayError, "prompt", e.to_string())],
        };

        let mut records = Vec::new();
        for sample in 0..k.max(1) {
            let mut bundle = first_bundle.clone();
            let rounds = if backend == ExecBackendKind::DirectAnswer { 0 } else { debug_budget };
            for round in 0..=rounds {
                let mut rec = base(sample, round, Some(&bundle));
                let generated = match self.generate(&bundle, cfg, sample, &prepared.graph, backend) {
                    Ok(g) => g,
                    Err(AttemptError::Llm(LlmError::ContextOverflow { estimated, limit })) => {
                        records.push(harness_failure(rec, ErrorClass::ContextOverflow, "context-overflow", format!("prompt needs about {estimated} tokens, limit is {limit}")));
                        break;
                    }
                    Err(e) => {
                        let kind = if matches!(e, AttemptError::Llm(_)) { "gateway" } else { "sandbox" };
                        records.push(harness_failure(rec, ErrorClass::GatewayError, kind, e.to_string()));
                        break;
                    }
                };
                let Generated { completion, code, outcome } = generated;
                rec.usage = completion.usage;
                rec.cost = compute_cost(completion.usage, cfg.pricing);
                rec.latency_ms = completion.latency.as_millis() as u64;
                rec.code = code;
                let verdict = match self.judge(prepared, backend, &outcome) {
                    Ok(v) => v,
                    Err(e) => {
                        rec.outcome = Some(outcome);
                        records.push(harness_failure(rec, ErrorClass::GatewayError, "suite", e.to_string()));
                        break;
                    }
                };
                let feedback = debug_feedback(&outcome, verdict.error_class);
                let passed = verdict.passed;
                rec.outcome = Some(outcome);
                rec.verdict = verdict;
                let code = rec.code.clone();
                records.push(rec);
                if passed || round == rounds {
                    break;
                }
                match self.prompts.build_selfdebug_prompt(&bundle, &code, &feedback) {
                    Ok(next) => bundle = next,
                    Err(_) => break,
                }
            }
            if records.last().is_some_and(|r| r.verdict.error_class == Some(ErrorClass::ContextOverflow)) && sample == 0 && backend == ExecBackendKind::DirectAnswer {
                break;
            }
        }
        records
    }
}
