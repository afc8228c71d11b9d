//! Application context and prompt construction.
//!
//! Code-generation prompts only ever carry the graph's *schema* (attribute
//! keys, value types, MALT entity vocabulary), never node ids or attribute
//! values. Only the strawman prompt embeds the serialized graph.

mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use templates::{template_name, Purpose, Template, TemplateSet};

use crate::graph::{serialize_graph, AttrValue, Attrs, MaltSchema, PropertyGraph, RelKind};
use crate::sandbox::ExecBackendKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Application {
    Traffic,
    Malt,
}

impl Application {
    pub fn as_str(self) -> &'static str {
        match self {
            Application::Traffic => "traffic",
            Application::Malt => "malt",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Application::Traffic => "Traffic Analysis",
            Application::Malt => "MALT",
        }
    }
}

impl fmt::Display for Application {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Application {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traffic" => Ok(Application::Traffic),
            "malt" => Ok(Application::Malt),
            other => Err(format!("unknown application `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("input error: {0}")]
    Input(String),
    #[error("context overflow: prompt needs about {estimated} tokens, limit is {limit}")]
    ContextOverflow { estimated: usize, limit: usize },
    #[error("template error: {0}")]
    Template(String),
}

/// Counts tokens for budgeting and cost accounting.
pub trait TokenEstimator: Send + Sync {
    /// Identifier recorded next to any number this estimator produced.
    fn id(&self) -> String;
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(chars / n)`; the default uses four characters per token.
#[derive(Debug, Clone, Copy)]
pub struct CharsPerToken(pub usize);

impl Default for CharsPerToken {
    fn default() -> Self {
        Self(4)
    }
}

impl TokenEstimator for CharsPerToken {
    fn id(&self) -> String {
        format!("chars/{}", self.0)
    }

    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(self.0.max(1))
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    CharsPerToken::default().estimate(text)
}

/// Ordered role-tagged messages for one model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub application: Application,
    pub backend: ExecBackendKind,
    pub messages: Vec<Message>,
    pub estimated_tokens: usize,
}

impl PromptBundle {
    fn new(
        application: Application,
        backend: ExecBackendKind,
        messages: Vec<Message>,
        estimator: &dyn TokenEstimator,
    ) -> Result<Self, PromptError> {
        if !messages.iter().any(|m| m.role == Role::User) {
            return Err(PromptError::Template("a prompt needs at least one user message".into()));
        }
        let joined: String = messages.iter().map(|m| m.content.as_str()).collect();
        let estimated_tokens = estimator.estimate(&joined);
        Ok(Self { application, backend, messages, estimated_tokens })
    }

    /// Stable text form used for fixture keys.
    pub fn canonical_rendering(&self) -> String {
        serde_json::json!({
            "backend": self.backend.as_str(),
            "messages": self.messages,
        })
        .to_string()
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str())
    }
}

/// Schema-level description of an application's graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppContext {
    pub application: Application,
    pub schema_description: String,
    pub conventions: String,
}

impl AppContext {
    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.schema_description, self.conventions)
    }
}

fn key_inventory<'a>(attr_maps: impl Iterator<Item = &'a Attrs>) -> BTreeMap<String, BTreeSet<&'static str>> {
    let mut out: BTreeMap<String, BTreeSet<&'static str>> = BTreeMap::new();
    for attrs in attr_maps {
        for (k, v) in attrs {
            out.entry(k.clone()).or_default().insert(v.type_name());
        }
    }
    out
}

fn describe_keys(inventory: &BTreeMap<String, BTreeSet<&'static str>>) -> String {
    if inventory.is_empty() {
        return "none".to_string();
    }
    inventory
        .iter()
        .map(|(k, types)| format!("`{k}` ({})", types.iter().copied().collect::<Vec<_>>().join(" or ")))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Describes the graph's schema for the model. Reads attribute keys and
/// value types only, so graphs of different sizes with the same schema give
/// identical text.
pub fn build_task_context(app: Application, g: &PropertyGraph) -> AppContext {
    let direction = if g.is_directed() { "directed" } else { "undirected" };
    let node_keys = key_inventory(g.nodes().map(|(_, a)| a));
    let edge_keys = key_inventory(g.edges().iter().map(|e| &e.attrs));
    match app {
        Application::Traffic => AppContext {
            application: app,
            schema_description: format!(
                "The network is a {direction} communication graph. Each node is a network endpoint and each edge \
                 records traffic sent from its source node to its destination node.\n\
                 Node attributes: {}.\n\
                 Edge attributes: {}.",
                describe_keys(&node_keys),
                describe_keys(&edge_keys)
            ),
            conventions: "Node ids are IPv4 address strings in dotted-quad form; the /16 prefix of an address is \
                          its first two octets (for example the /16 prefix of 10.1.2.3 is 10.1). On an edge, \
                          `bytes` is the number of bytes sent, `connections` the number of connections and \
                          `packets` the number of packets, all counted from source to destination."
                .to_string(),
        },
        Application::Malt => {
            let schema = MaltSchema::default();
            let mut per_type: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
            for (_, attrs) in g.nodes() {
                if let Some(AttrValue::Text(ty)) = attrs.get("type") {
                    if schema.is_node_type(ty) {
                        per_type
                            .entry(ty.clone())
                            .or_default()
                            .extend(attrs.keys().filter(|k| k.as_str() != "type").cloned());
                    }
                }
            }
            let kinds: BTreeSet<&str> = g
                .edges()
                .iter()
                .filter_map(|e| e.attrs.get("kind").and_then(AttrValue::as_str))
                .filter_map(|k| RelKind::parse(k).map(RelKind::as_str))
                .collect();
            let type_lines = per_type
                .iter()
                .map(|(ty, keys)| {
                    let keys = if keys.is_empty() {
                        "no other attributes".to_string()
                    } else {
                        keys.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", ")
                    };
                    format!("- {ty}: {keys}")
                })
                .collect::<Vec<_>>()
                .join("\n");
            let kind_lines = kinds
                .iter()
                .map(|k| match *k {
                    "CONTAINS" => "- CONTAINS: the source entity physically contains the destination entity \
                                   (a CHASSIS contains PACKET_SWITCH nodes, a PACKET_SWITCH contains PORT nodes)",
                    _ => "- CONTROLS: the source CONTROL_POINT controls the destination PACKET_SWITCH",
                })
                .collect::<Vec<_>>()
                .join("\n");
            AppContext {
                application: app,
                schema_description: format!(
                    "The network is a {direction} Multi-Abstraction-Layer Topology (MALT) graph of entities and \
                     relationships. Every node has a text attribute `type` naming its entity type, and every \
                     edge has a text attribute `kind` naming its relationship.\n\
                     Entity types present and their other attributes:\n{type_lines}\n\
                     Relationship kinds present:\n{kind_lines}\n\
                     Node attributes: {}.\n\
                     Edge attributes: {}.",
                    describe_keys(&node_keys),
                    describe_keys(&edge_keys)
                ),
                conventions: "Node ids are hierarchical entity names. Chassis `capacity` is a non-negative integer \
                              in abstract capacity units and port `speed` is in Gbit/s."
                    .to_string(),
            }
        }
    }
}

pub const DEFAULT_ERROR_CAP: usize = 2000;

/// Builds the codegen, strawman and self-debug prompts from templates.
#[derive(Clone)]
pub struct PromptGenerator {
    templates: Arc<TemplateSet>,
    estimator: Arc<dyn TokenEstimator>,
    error_cap: usize,
}

impl Default for PromptGenerator {
    fn default() -> Self {
        Self::new(TemplateSet::embedded(), Arc::new(CharsPerToken::default()))
    }
}

impl fmt::Debug for PromptGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PromptGenerator")
            .field("estimator", &self.estimator.id())
            .field("error_cap", &self.error_cap)
            .finish()
    }
}

impl PromptGenerator {
    pub fn new(templates: TemplateSet, estimator: Arc<dyn TokenEstimator>) -> Self {
        Self { templates: Arc::new(templates), estimator, error_cap: DEFAULT_ERROR_CAP }
    }

    pub fn with_error_cap(mut self, cap: usize) -> Self {
        self.error_cap = cap;
        self
    }

    pub fn estimator(&self) -> &dyn TokenEstimator {
        self.estimator.as_ref()
    }

    pub fn build_codegen_prompt(
        &self,
        ctx: &AppContext,
        query: &str,
        backend: ExecBackendKind,
    ) -> Result<PromptBundle, PromptError> {
        if backend == ExecBackendKind::DirectAnswer {
            return Err(PromptError::Input("the direct-answer backend has no code-generation prompt".into()));
        }
        if query.trim().is_empty() {
            return Err(PromptError::Input("query must be non-empty".into()));
        }
        let context = ctx.render();
        let template = self.templates.get(ctx.application, backend, Purpose::Codegen)?;
        let vars = BTreeMap::from([("context", context.as_str()), ("query", query)]);
        PromptBundle::new(ctx.application, backend, template.render(&vars)?, self.estimator.as_ref())
    }

    /// Embeds the whole canonical graph; fails with
    /// [`PromptError::ContextOverflow`] when the estimate exceeds `context_limit`.
    pub fn build_strawman_prompt(
        &self,
        app: Application,
        g: &PropertyGraph,
        query: &str,
        context_limit: usize,
    ) -> Result<PromptBundle, PromptError> {
        let graph = serialize_graph(g, true);
        let template = self.templates.get(app, ExecBackendKind::DirectAnswer, Purpose::Strawman)?;
        let vars = BTreeMap::from([("graph", graph.as_str()), ("query", query)]);
        let bundle = PromptBundle::new(app, ExecBackendKind::DirectAnswer, template.render(&vars)?, self.estimator.as_ref())?;
        if bundle.estimated_tokens > context_limit {
            return Err(PromptError::ContextOverflow { estimated: bundle.estimated_tokens, limit: context_limit });
        }
        Ok(bundle)
    }

    /// Extends the conversation with the failing program and its error.
    pub fn build_selfdebug_prompt(&self, prior: &PromptBundle, code: &str, error: &str) -> Result<PromptBundle, PromptError> {
        if prior.backend == ExecBackendKind::DirectAnswer {
            return Err(PromptError::Input("self-debug needs a code-generation conversation".into()));
        }
        let error = truncate_error(error, self.error_cap);
        let template = self.templates.get(prior.application, prior.backend, Purpose::Selfdebug)?;
        let vars = BTreeMap::from([("code", code.trim()), ("error", error.as_str())]);
        let mut messages = prior.messages.clone();
        messages.extend(template.render(&vars)?);
        PromptBundle::new(prior.application, prior.backend, messages, self.estimator.as_ref())
    }
}

const TRUNCATION_MARK: &str = "[...]\n";

/// Keeps the tail of an oversized error (where the exception line is),
/// total length at most `cap` characters.
pub fn truncate_error(error: &str, cap: usize) -> String {
    let len = error.chars().count();
    if len <= cap {
        return error.to_string();
    }
    let mark_len = TRUNCATION_MARK.chars().count();
    if cap <= mark_len {
        return error.chars().skip(len - cap).collect();
    }
    let keep = cap - mark_len;
    let tail: String = error.chars().skip(len - keep).collect();
    format!("{TRUNCATION_MARK}{tail}")
}
