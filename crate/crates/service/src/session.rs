use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use nlnetops_core::eval::ErrorClass;
use nlnetops_core::graph::{graph_diff, Difference, PropertyGraph, Tolerance};
use nlnetops_core::promptgen::{Application, PromptBundle};
use nlnetops_core::sandbox::{ExecBackendKind, FailurePhase, ResultEnvelope};

/// Most differences listed in a diff summary; the counts cover all of them.
pub const DIFF_ITEM_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttemptStatus {
    Pending,
    Approved,
    Rejected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub error_class: ErrorClass,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<FailurePhase>,
    /// Traceback or other raw output, if any.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub details: String,
    #[serde(default)]
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub nodes_added: usize,
    pub nodes_removed: usize,
    pub nodes_changed: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
    pub edges_changed: usize,
    /// Number of individual differences, listed or not.
    pub total: usize,
    pub items: Vec<Difference>,
    pub truncated: bool,
}

impl DiffSummary {
    pub fn between(before: &PropertyGraph, after: &PropertyGraph) -> Self {
        let all = graph_diff(before, after, Tolerance::default());
        let mut s = DiffSummary { total: all.len(), truncated: all.len() > DIFF_ITEM_CAP, ..Default::default() };
        let mut changed_nodes = BTreeSet::new();
        let mut changed_edges = BTreeSet::new();
        for d in &all {
            match d {
                Difference::NodeAdded { .. } => s.nodes_added += 1,
                Difference::NodeRemoved { .. } => s.nodes_removed += 1,
                Difference::NodeAttr { id, .. } => {
                    changed_nodes.insert(id.clone());
                }
                Difference::EdgeAdded { .. } => s.edges_added += 1,
                Difference::EdgeRemoved { .. } => s.edges_removed += 1,
                Difference::EdgeAttr { src, dst, .. } => {
                    changed_edges.insert((src.clone(), dst.clone()));
                }
                Difference::Directedness { .. } => {}
            }
        }
        s.nodes_changed = changed_nodes.len();
        s.edges_changed = changed_edges.len();
        s.items = all.into_iter().take(DIFF_ITEM_CAP).collect();
        s
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// One query (or self-debug retry) and what came of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt_id: String,
    pub query: String,
    pub backend: ExecBackendKind,
    pub model: String,
    pub code: String,
    /// Result value and the graph the program left behind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preview: Option<ResultEnvelope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<DiffSummary>,
    pub status: AttemptStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    /// The failed attempt this one retries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_of: Option<String>,
    pub debug_round: usize,
    /// Graph version the attempt ran against.
    pub graph_version: u64,
    pub created: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided: Option<String>,
}

/// An attempt plus the prompt that produced it, kept for self-debug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAttempt {
    #[serde(flatten)]
    pub attempt: Attempt,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub application: Application,
    pub graph: PropertyGraph,
    /// Starts at 0 and grows by one on every approved change.
    pub graph_version: u64,
    pub history: Vec<StoredAttempt>,
    pub created: String,
}

impl Session {
    pub fn pending(&self) -> Option<&Attempt> {
        self.history.iter().map(|a| &a.attempt).find(|a| a.status == AttemptStatus::Pending)
    }

    pub fn attempt_index(&self, attempt_id: &str) -> Option<usize> {
        self.history.iter().position(|a| a.attempt.attempt_id == attempt_id)
    }
}
