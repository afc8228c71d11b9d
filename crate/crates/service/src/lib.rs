//! Interactive copilot sessions over HTTP: an operator asks a question, gets
//! the generated program with a preview of its result and graph changes,
//! and approves or rejects it. Only approval changes a session's graph.

mod session;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use nlnetops_core::eval::{classify_error, schema_keys, AttemptError, ErrorClass, Evaluator, Generated};
use nlnetops_core::graph::{load_graph, MaltSchema, PropertyGraph};
use nlnetops_core::llm::{LlmError, ModelConfig};
use nlnetops_core::promptgen::{Application, PromptBundle, PromptError};
use nlnetops_core::sandbox::{ExecBackendKind, ExecOutcome};
use nlnetops_core::suite::GeneratorSpec;

pub use session::{Attempt, AttemptStatus, Diagnostics, DiffSummary, Session, StoredAttempt, DIFF_ITEM_CAP};
pub use store::{SessionStore, FEEDBACK_FILE};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    /// `kind` is one of `attempt-pending`, `not-pending`, `not-failed`.
    #[error("{message}")]
    Conflict { kind: &'static str, message: String },
    #[error("{0}")]
    Validation(String),
    /// The model call failed; the failed attempt is already in the history.
    #[error("model gateway failure: {message}")]
    Gateway { message: String, attempt: Box<Attempt> },
    #[error("internal error: {0}")]
    Internal(String),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, kind, attempt) = match self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not-found", None),
            ServiceError::Conflict { kind, .. } => (StatusCode::CONFLICT, kind, None),
            ServiceError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation", None),
            ServiceError::Gateway { attempt, .. } => (StatusCode::BAD_GATEWAY, "gateway", Some(attempt)),
            ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
        };
        let mut body = json!({ "error": kind, "message": message });
        if let Some(a) = attempt {
            body["attempt"] = serde_json::to_value(a).unwrap_or(Value::Null);
        }
        (status, Json(body)).into_response()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub application: Application,
    #[serde(default)]
    pub graph: Option<Value>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct QueryRequest {
    pub text: String,
    pub backend: ExecBackendKind,
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DecisionRequest {
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub status: AttemptStatus,
    pub graph_version: u64,
}

#[derive(Debug, Serialize)]
struct FeedbackEntry<'a> {
    session_id: &'a str,
    attempt_id: &'a str,
    application: Application,
    backend: ExecBackendKind,
    model: &'a str,
    query: &'a str,
    code: &'a str,
    decision: Decision,
    result: Option<Value>,
    graph_version: u64,
    timestamp: String,
}

/// Session logic, independent of HTTP. Every operation on a session holds
/// that session's lock from load to save, so calls on one session are
/// linearizable while different sessions proceed in parallel.
pub struct Copilot {
    store: SessionStore,
    evaluator: Evaluator,
    models: BTreeMap<String, ModelConfig>,
    backends: Vec<ExecBackendKind>,
    debug_budget: usize,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Copilot {
    pub fn new(store: SessionStore, evaluator: Evaluator, models: BTreeMap<String, ModelConfig>, debug_budget: usize) -> Self {
        Self {
            store,
            evaluator,
            models,
            backends: ExecBackendKind::ALL.to_vec(),
            debug_budget,
            locks: Mutex::default(),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().expect("lock table").entry(id.to_string()).or_default().clone()
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut session = self.store.load(id)?;
        f(&mut session)
    }

    pub fn config(&self) -> Value {
        let applications: Vec<Value> =
            [Application::Traffic, Application::Malt].iter().map(|a| json!({ "id": a.as_str(), "title": a.title() })).collect();
        json!({
            "applications": applications,
            "backends": self.backends.iter().map(|b| json!({ "id": b.as_str(), "label": b.label() })).collect::<Vec<_>>(),
            "models": self.models.values().map(|m| json!({ "name": m.name, "context_limit": m.context_limit })).collect::<Vec<_>>(),
            "debug_budget": self.debug_budget,
            "diff_item_cap": DIFF_ITEM_CAP,
        })
    }

    pub fn create_session(&self, req: CreateSession) -> Result<String, ServiceError> {
        let schema = (req.application == Application::Malt).then(MaltSchema::default);
        let graph = match (req.graph, req.generator) {
            (Some(doc), None) => load_graph(&doc.to_string(), schema.as_ref()).map_err(|e| ServiceError::Validation(e.to_string()))?,
            (None, Some(spec)) => {
                let g = spec.build().map_err(|e| ServiceError::Validation(e.to_string()))?;
                if let Some(s) = &schema {
                    s.validate(&g).map_err(|e| ServiceError::Validation(e.to_string()))?;
                }
                g
            }
            _ => return Err(ServiceError::Validation("give exactly one of `graph` and `generator`".into())),
        };
        let session = Session {
            id: uuid::Uuid::new_v4().to_string(),
            application: req.application,
            graph,
            graph_version: 0,
            history: Vec::new(),
            created: now(),
        };
        self.store.save(&session)?;
        Ok(session.id)
    }

    pub fn graph(&self, id: &str) -> Result<PropertyGraph, ServiceError> {
        self.with_session(id, |s| Ok(s.graph.clone()))
    }

    pub fn history(&self, id: &str) -> Result<Vec<Attempt>, ServiceError> {
        self.with_session(id, |s| Ok(s.history.iter().map(|a| a.attempt.clone()).collect()))
    }

    fn model(&self, name: &str) -> Result<&ModelConfig, ServiceError> {
        self.models.get(name).ok_or_else(|| ServiceError::Validation(format!("unknown model `{name}`")))
    }

    fn no_pending(session: &Session) -> Result<(), ServiceError> {
        match session.pending() {
            Some(p) => Err(ServiceError::Conflict {
                kind: "attempt-pending",
                message: format!("attempt {} is still awaiting a decision", p.attempt_id),
            }),
            None => Ok(()),
        }
    }

    pub fn submit_query(&self, id: &str, req: QueryRequest) -> Result<Attempt, ServiceError> {
        self.with_session(id, |session| {
            Self::no_pending(session)?;
            if req.text.trim().is_empty() {
                return Err(ServiceError::Validation("query text is empty".into()));
            }
            if !self.backends.contains(&req.backend) {
                return Err(ServiceError::Validation(format!("backend `{}` is not enabled", req.backend)));
            }
            let cfg = self.model(&req.model)?;
            let draft = self.draft(session, &req.text, req.backend, &req.model, None, 0);
            let prompt = self.evaluator.first_prompt(session.application, &session.graph, &req.text, req.backend, cfg);
            self.run_attempt(session, draft, prompt, cfg)
        })
    }

    pub fn decide(&self, id: &str, attempt_id: &str, decision: Decision) -> Result<DecisionResponse, ServiceError> {
        self.with_session(id, |session| {
            let i = session.attempt_index(attempt_id).ok_or_else(|| ServiceError::NotFound(format!("attempt {attempt_id}")))?;
            let attempt = &session.history[i].attempt;
            if attempt.status != AttemptStatus::Pending {
                return Err(ServiceError::Conflict {
                    kind: "not-pending",
                    message: format!("attempt {attempt_id} is {:?}, not pending", attempt.status).to_lowercase(),
                });
            }
            let preview = attempt.preview.clone().ok_or_else(|| ServiceError::Internal("pending attempt has no preview".into()))?;
            let status = match decision {
                Decision::Approve => {
                    session.graph = preview.graph_after;
                    session.graph_version += 1;
                    AttemptStatus::Approved
                }
                Decision::Reject => AttemptStatus::Rejected,
            };
            let attempt = &mut session.history[i].attempt;
            attempt.status = status;
            attempt.decided = Some(now());
            self.store.save(session)?;

            let attempt = &session.history[i].attempt;
            let entry = FeedbackEntry {
                session_id: &session.id,
                attempt_id,
                application: session.application,
                backend: attempt.backend,
                model: &attempt.model,
                query: &attempt.query,
                code: &attempt.code,
                decision,
                result: Some(preview.value.to_json()),
                graph_version: session.graph_version,
                timestamp: now(),
            };
            if let Err(e) = self.store.append_feedback(&entry) {
                tracing::warn!("feedback log: {e}");
            }
            Ok(DecisionResponse { status, graph_version: session.graph_version })
        })
    }

    pub fn retry_with_debug(&self, id: &str, attempt_id: &str) -> Result<Attempt, ServiceError> {
        self.with_session(id, |session| {
            let i = session.attempt_index(attempt_id).ok_or_else(|| ServiceError::NotFound(format!("attempt {attempt_id}")))?;
            let parent = session.history[i].clone();
            if parent.attempt.status != AttemptStatus::Failed {
                return Err(ServiceError::Conflict {
                    kind: "not-failed",
                    message: format!("attempt {attempt_id} did not fail; only failed attempts can be retried"),
                });
            }
            Self::no_pending(session)?;
            let p = &parent.attempt;
            if p.backend == ExecBackendKind::DirectAnswer {
                return Err(ServiceError::Validation("self-debug needs a code-generation backend".into()));
            }
            let cfg = self.model(&p.model)?;
            let round = p.debug_round + 1;
            let mut draft = self.draft(session, &p.query, p.backend, &p.model, Some(attempt_id), round);

            if round > self.debug_budget {
                let mut diag = p.diagnostics.clone().unwrap_or_else(|| Diagnostics {
                    error_class: ErrorClass::GatewayError,
                    message: String::new(),
                    phase: None,
                    details: String::new(),
                    budget_exhausted: false,
                });
                diag.message = format!("self-debug budget of {} rounds is used up; last error: {}", self.debug_budget, diag.message);
                diag.budget_exhausted = true;
                draft.status = AttemptStatus::Failed;
                draft.diagnostics = Some(diag);
                return self.push(session, draft, parent.prompt);
            }

            let feedback = p.diagnostics.as_ref().map(|d| d.message.clone()).unwrap_or_default();
            let prompt = match (&parent.prompt, p.code.is_empty()) {
                (Some(prior), false) => self.evaluator.prompts.build_selfdebug_prompt(prior, &p.code, &feedback),
                // The model never answered: ask again with the same prompt.
                (Some(prior), true) => Ok(prior.clone()),
                (None, _) => self.evaluator.first_prompt(session.application, &session.graph, &p.query, p.backend, cfg),
            };
            self.run_attempt(session, draft, prompt, cfg)
        })
    }

    fn draft(&self, session: &Session, query: &str, backend: ExecBackendKind, model: &str, retry_of: Option<&str>, round: usize) -> Attempt {
        Attempt {
            attempt_id: uuid::Uuid::new_v4().to_string(),
            query: query.to_string(),
            backend,
            model: model.to_string(),
            code: String::new(),
            preview: None,
            diff: None,
            status: AttemptStatus::Failed,
            diagnostics: None,
            retry_of: retry_of.map(String::from),
            debug_round: round,
            graph_version: session.graph_version,
            created: now(),
            decided: None,
        }
    }

    fn push(&self, session: &mut Session, attempt: Attempt, prompt: Option<PromptBundle>) -> Result<Attempt, ServiceError> {
        session.history.push(StoredAttempt { attempt: attempt.clone(), prompt });
        self.store.save(session)?;
        Ok(attempt)
    }

    /// Calls the model and runs its program against the session graph. The
    /// graph itself is never touched; the outcome becomes a pending or a
    /// failed attempt. A harness failure leaves the session as it was.
    fn run_attempt(
        &self,
        session: &mut Session,
        mut attempt: Attempt,
        prompt: Result<PromptBundle, PromptError>,
        cfg: &ModelConfig,
    ) -> Result<Attempt, ServiceError> {
        let fail = |class: ErrorClass, message: String| Diagnostics { error_class: class, message, phase: None, details: String::new(), budget_exhausted: false };
        let bundle = match prompt {
            Ok(b) => b,
            Err(PromptError::ContextOverflow { estimated, limit }) => {
                attempt.diagnostics = Some(fail(ErrorClass::ContextOverflow, format!("prompt needs about {estimated} tokens, limit is {limit}")));
                return self.push(session, attempt, None);
            }
            Err(e) => return Err(ServiceError::Internal(e.to_string())),
        };
        let generated = match self.evaluator.generate(&bundle, cfg, 0, &session.graph, attempt.backend) {
            Ok(g) => g,
            Err(AttemptError::Llm(LlmError::ContextOverflow { estimated, limit })) => {
                attempt.diagnostics = Some(fail(ErrorClass::ContextOverflow, format!("prompt needs about {estimated} tokens, limit is {limit}")));
                return self.push(session, attempt, Some(bundle));
            }
            Err(AttemptError::Llm(e)) => {
                attempt.diagnostics = Some(fail(ErrorClass::GatewayError, e.to_string()));
                let attempt = self.push(session, attempt, Some(bundle))?;
                return Err(ServiceError::Gateway { message: e.to_string(), attempt: Box::new(attempt) });
            }
            Err(AttemptError::Sandbox(e)) => return Err(ServiceError::Internal(e.to_string())),
        };
        let Generated { code, outcome, .. } = generated;
        attempt.code = code;
        match outcome {
            ExecOutcome::Failure(f) => {
                attempt.diagnostics = Some(Diagnostics {
                    error_class: classify_error(&f, &schema_keys(&session.graph)),
                    message: f.message.clone(),
                    phase: Some(f.phase),
                    details: f.diagnostics.clone(),
                    budget_exhausted: false,
                });
            }
            ExecOutcome::Success { envelope, .. } => {
                let broken = (session.application == Application::Malt)
                    .then(|| MaltSchema::default().validate(&envelope.graph_after).err())
                    .flatten();
                if let Some(e) = broken {
                    attempt.diagnostics = Some(fail(ErrorClass::EnvelopeMalformed, format!("updated graph breaks the MALT schema: {e}")));
                } else {
                    attempt.diff = Some(DiffSummary::between(&session.graph, &envelope.graph_after));
                    attempt.preview = Some(envelope);
                    attempt.status = AttemptStatus::Pending;
                }
            }
        }
        self.push(session, attempt, Some(bundle))
    }
}

/// Runs blocking session work off the async executor.
async fn blocking<T: Send + 'static>(
    copilot: Arc<Copilot>,
    f: impl FnOnce(&Copilot) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(move || f(&copilot)).await.map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn parse<T: serde::de::DeserializeOwned>(body: Value) -> Result<T, ServiceError> {
    serde_json::from_value(body).map_err(|e| ServiceError::Validation(e.to_string()))
}

async fn create(State(c): State<Arc<Copilot>>, Json(body): Json<Value>) -> Result<(StatusCode, Json<Value>), ServiceError> {
    let req: CreateSession = parse(body)?;
    let id = blocking(c, move |c| c.create_session(req)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn query(State(c): State<Arc<Copilot>>, Path(id): Path<String>, Json(body): Json<Value>) -> Result<Json<Attempt>, ServiceError> {
    let req: QueryRequest = parse(body)?;
    blocking(c, move |c| c.submit_query(&id, req)).await.map(Json)
}

async fn decision(
    State(c): State<Arc<Copilot>>,
    Path((id, aid)): Path<(String, String)>,
    Json(body): Json<Value>,
) -> Result<Json<DecisionResponse>, ServiceError> {
    let req: DecisionRequest = parse(body)?;
    blocking(c, move |c| c.decide(&id, &aid, req.decision)).await.map(Json)
}

async fn debug(State(c): State<Arc<Copilot>>, Path((id, aid)): Path<(String, String)>) -> Result<Json<Attempt>, ServiceError> {
    blocking(c, move |c| c.retry_with_debug(&id, &aid)).await.map(Json)
}

async fn graph(State(c): State<Arc<Copilot>>, Path(id): Path<String>) -> Result<Json<PropertyGraph>, ServiceError> {
    blocking(c, move |c| c.graph(&id)).await.map(Json)
}

async fn history(State(c): State<Arc<Copilot>>, Path(id): Path<String>) -> Result<Json<Vec<Attempt>>, ServiceError> {
    blocking(c, move |c| c.history(&id)).await.map(Json)
}

async fn config(State(c): State<Arc<Copilot>>) -> Json<Value> {
    Json(c.config())
}

pub fn router(copilot: Arc<Copilot>) -> Router {
    Router::new()
        .route("/api/config", get(config))
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}/query", post(query))
        .route("/api/sessions/{id}/attempts/{aid}/decision", post(decision))
        .route("/api/sessions/{id}/attempts/{aid}/debug", post(debug))
        .route("/api/sessions/{id}/graph", get(graph))
        .route("/api/sessions/{id}/history", get(history))
        .with_state(copilot)
}
