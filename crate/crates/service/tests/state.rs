use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use proptest::prelude::*;

use nlnetops_core::eval::Evaluator;
use nlnetops_core::graph::serialize_graph;
use nlnetops_core::llm::{parse_models, Completion, CompletionBackend, Gateway, LlmError, ModelConfig, Usage};
use nlnetops_core::promptgen::{Application, PromptBundle};
use nlnetops_core::sandbox::{ExecBackendKind, Sandbox};
use nlnetops_core::suite::GeneratorSpec;
use nlnetops_service::{Attempt, AttemptStatus, Copilot, CreateSession, Decision, QueryRequest, ServiceError, SessionStore};

#[derive(Default)]
struct Queue(Mutex<VecDeque<String>>);

impl CompletionBackend for Queue {
    fn complete_one(&self, _: &PromptBundle, _: &ModelConfig, attempt: usize) -> Result<Completion, LlmError> {
        let text = self.0.lock().unwrap().pop_front().ok_or_else(|| LlmError::Transport("empty".into()))?;
        Ok(Completion { text, usage: Usage::default(), latency: Duration::ZERO, attempt_index: attempt })
    }
}

const MODELS: &str = r#"{"m": {"max_output_tokens": 64, "context_limit": 8192, "pricing": {"input_per_1k": 0, "output_per_1k": 0}}}"#;

const READ: &str = "result = G.number_of_nodes()";
const WRITE: &str = "n = sorted(G.nodes)[0]\nG.nodes[n]['hits'] = G.nodes[n].get('hits', 0) + 1";
const BROKEN: &str = "result = no_such_name";

#[derive(Debug, Clone, Copy)]
enum Op {
    Query(usize),
    Decide(bool),
    Debug(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..3).prop_map(Op::Query),
        any::<bool>().prop_map(Op::Decide),
        (0usize..3).prop_map(Op::Debug),
    ]
}

fn setup(sandbox: Sandbox) -> (tempfile::TempDir, Arc<Queue>, Copilot, String) {
    let dir = tempfile::tempdir().unwrap();
    let queue = Arc::new(Queue::default());
    let evaluator = Evaluator::new(Gateway::new(queue.clone())).with_sandbox(sandbox).without_memo();
    let copilot = Copilot::new(SessionStore::open(dir.path()).unwrap(), evaluator, parse_models(MODELS).unwrap(), 2);
    let id = copilot
        .create_session(CreateSession {
            application: Application::Traffic,
            graph: None,
            generator: Some(GeneratorSpec::Traffic { nodes: 6, edges: 8, seed: 3 }),
        })
        .unwrap();
    (dir, queue, copilot, id)
}

fn request(text: &str) -> QueryRequest {
    QueryRequest { text: text.into(), backend: ExecBackendKind::GraphApi, model: "m".into() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn graph_changes_only_through_approval(ops in prop::collection::vec(op(), 1..8)) {
        let (_dir, queue, copilot, id) = setup(Sandbox::default());
        let mut graph = serialize_graph(&copilot.graph(&id).unwrap(), true);
        let mut history: Vec<Attempt> = Vec::new();
        for op in ops {
            let pending = history.iter().find(|a| a.status == AttemptStatus::Pending).cloned();
            let last_failed = history.iter().rev().find(|a| a.status == AttemptStatus::Failed).cloned();
            let mut approved: Option<Attempt> = None;
            match op {
                Op::Query(k) => {
                    queue.0.lock().unwrap().push_back([READ, WRITE, BROKEN][k].to_string());
                    let r = copilot.submit_query(&id, request("q"));
                    prop_assert_eq!(r.is_err(), pending.is_some());
                    if pending.is_some() {
                        queue.0.lock().unwrap().clear();
                    }
                }
                Op::Decide(approve) => {
                    if let Some(p) = pending {
                        let decision = if approve { Decision::Approve } else { Decision::Reject };
                        copilot.decide(&id, &p.attempt_id, decision).unwrap();
                        if approve {
                            approved = Some(p);
                        }
                    }
                }
                Op::Debug(k) => {
                    if let Some(f) = last_failed {
                        queue.0.lock().unwrap().push_back([READ, WRITE, BROKEN][k].to_string());
                        let r = copilot.retry_with_debug(&id, &f.attempt_id);
                        prop_assert_eq!(r.is_err(), pending.is_some());
                        queue.0.lock().unwrap().clear();
                    }
                }
            }

            let now = copilot.history(&id).unwrap();
            prop_assert!(now.len() >= history.len());
            for (before, after) in history.iter().zip(&now) {
                if before.status != AttemptStatus::Pending {
                    prop_assert_eq!(before, after);
                }
            }
            prop_assert!(now.iter().filter(|a| a.status == AttemptStatus::Pending).count() <= 1);

            let g = serialize_graph(&copilot.graph(&id).unwrap(), true);
            match approved {
                Some(a) => prop_assert_eq!(&g, &serialize_graph(&a.preview.unwrap().graph_after, true)),
                None => prop_assert_eq!(&g, &graph),
            }
            graph = g;
            history = now;
        }
    }
}

#[test]
fn sandbox_failure_leaves_session_untouched() {
    let (dir, queue, copilot, id) = setup(Sandbox::with_python("/nonexistent/python3"));
    let file = dir.path().join("sessions").join(format!("{id}.json"));
    let before = std::fs::read(&file).unwrap();
    queue.0.lock().unwrap().push_back(WRITE.into());
    let err = copilot.submit_query(&id, request("q")).unwrap_err();
    assert!(matches!(err, ServiceError::Internal(_)), "{err:?}");
    assert_eq!(std::fs::read(&file).unwrap(), before);
    assert!(copilot.history(&id).unwrap().is_empty());
}
