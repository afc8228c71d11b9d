//! Property-graph data model shared by both applications.
//!
//! A [`PropertyGraph`] is a directed or undirected multigraph whose nodes are
//! keyed by text ids and whose nodes and edges carry attribute maps. Traffic
//! communication graphs and MALT-style topologies are both stored this way.

mod equal;
mod generate;
mod malt;
mod serial;
mod views;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

pub use equal::{graph_diff, graph_equal, numbers_close, Difference, MatchReport, Tolerance};
pub use generate::{generate_malt, generate_traffic_graph, TRAFFIC_PREFIXES};
pub use malt::{MaltSchema, RelKind, NODE_TYPE_CHASSIS, NODE_TYPE_CONTROL_POINT, NODE_TYPE_PACKET_SWITCH, NODE_TYPE_PORT};
pub use serial::{load_graph, serialize_graph};
pub(crate) use serial::graph_from_json;
pub use views::{project_views, rebuild_from_views, Table};

/// Attribute map attached to a node or an edge. Keys are kept sorted.
pub type Attrs = BTreeMap<String, AttrValue>;

/// A single attribute value.
///
/// Lists hold scalars only; floats are always finite.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    List(Vec<AttrValue>),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Int(i) => Some(*i as f64),
            AttrValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            AttrValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Short type name used in schema descriptions.
    pub fn type_name(&self) -> &'static str {
        match self {
            AttrValue::Int(_) => "integer",
            AttrValue::Float(_) => "float",
            AttrValue::Text(_) => "text",
            AttrValue::Bool(_) => "boolean",
            AttrValue::List(_) => "list",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            AttrValue::Int(i) => serde_json::Value::from(*i),
            AttrValue::Float(f) => serde_json::Value::from(*f),
            AttrValue::Text(s) => serde_json::Value::from(s.as_str()),
            AttrValue::Bool(b) => serde_json::Value::from(*b),
            AttrValue::List(items) => {
                serde_json::Value::Array(items.iter().map(AttrValue::to_json).collect())
            }
        }
    }

    /// Converts a JSON value, enforcing the nesting and finiteness rules.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, String> {
        Self::from_json_depth(value, 0)
    }

    fn from_json_depth(value: &serde_json::Value, depth: usize) -> Result<Self, String> {
        use serde_json::Value;
        match value {
            Value::Bool(b) => Ok(AttrValue::Bool(*b)),
            Value::String(s) => Ok(AttrValue::Text(s.clone())),
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(AttrValue::Int(i))
                } else {
                    match n.as_f64() {
                        Some(f) if f.is_finite() => Ok(AttrValue::Float(f)),
                        _ => Err(format!("number {n} is not representable")),
                    }
                }
            }
            Value::Array(items) => {
                if depth > 0 {
                    return Err("lists may only contain scalars".to_string());
                }
                items
                    .iter()
                    .map(|v| Self::from_json_depth(v, depth + 1))
                    .collect::<Result<Vec<_>, _>>()
                    .map(AttrValue::List)
            }
            Value::Null => Err("null is not a valid attribute value".to_string()),
            Value::Object(_) => Err("objects are not valid attribute values".to_string()),
        }
    }

    fn check(&self, depth: usize) -> Result<(), String> {
        match self {
            AttrValue::Float(f) if !f.is_finite() => Err(format!("non-finite float {f}")),
            AttrValue::List(_) if depth > 0 => Err("lists may only contain scalars".to_string()),
            AttrValue::List(items) => items.iter().try_for_each(|v| v.check(depth + 1)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl From<i64> for AttrValue {
    fn from(v: i64) -> Self {
        AttrValue::Int(v)
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Float(v)
    }
}

impl From<&str> for AttrValue {
    fn from(v: &str) -> Self {
        AttrValue::Text(v.to_string())
    }
}

impl From<String> for AttrValue {
    fn from(v: String) -> Self {
        AttrValue::Text(v)
    }
}

impl From<bool> for AttrValue {
    fn from(v: bool) -> Self {
        AttrValue::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub attrs: Attrs,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("column name collision: attribute `{0}` clashes with a reserved column")]
    ColumnNameCollision(String),
}

/// Directed or undirected attributed multigraph.
///
/// Nodes keep insertion order; canonical serialization sorts them. The
/// structure is treated as immutable once built: executors hand back a new
/// graph instead of mutating a shared one.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyGraph {
    directed: bool,
    nodes: IndexMap<String, Attrs>,
    edges: Vec<Edge>,
}

impl PropertyGraph {
    pub fn new(directed: bool) -> Self {
        Self {
            directed,
            nodes: IndexMap::new(),
            edges: Vec::new(),
        }
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &Attrs)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn node(&self, id: &str) -> Option<&Attrs> {
        self.nodes.get(id)
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Adds a node. Fails on an empty or duplicate id.
    pub fn add_node(&mut self, id: impl Into<String>, attrs: Attrs) -> Result<(), GraphError> {
        let id = id.into();
        if id.is_empty() {
            return Err(GraphError::Validation("node id must be non-empty".into()));
        }
        if self.nodes.contains_key(&id) {
            return Err(GraphError::Validation(format!("duplicate node id `{id}`")));
        }
        for (key, value) in &attrs {
            value
                .check(0)
                .map_err(|e| GraphError::Validation(format!("node `{id}` attribute `{key}`: {e}")))?;
        }
        self.nodes.insert(id, attrs);
        Ok(())
    }

    /// Adds an edge between existing nodes. Parallel edges are allowed.
    pub fn add_edge(
        &mut self,
        src: impl Into<String>,
        dst: impl Into<String>,
        attrs: Attrs,
    ) -> Result<(), GraphError> {
        let (src, dst) = (src.into(), dst.into());
        for end in [&src, &dst] {
            if !self.nodes.contains_key(end) {
                return Err(GraphError::Validation(format!(
                    "edge {src} -> {dst} references unknown node `{end}`"
                )));
            }
        }
        for (key, value) in &attrs {
            value.check(0).map_err(|e| {
                GraphError::Validation(format!("edge {src} -> {dst} attribute `{key}`: {e}"))
            })?;
        }
        self.edges.push(Edge { src, dst, attrs });
        Ok(())
    }

    /// Sorted union of attribute keys over all nodes.
    pub fn node_attr_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self.nodes.values().flat_map(|a| a.keys().cloned()).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    /// Sorted union of attribute keys over all edges.
    pub fn edge_attr_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self.edges.iter().flat_map(|e| e.attrs.keys().cloned()).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    /// Total element count (nodes plus edges).
    pub fn size(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }
}

/// Convenience for building attribute maps in code and tests.
#[macro_export]
macro_rules! attrs {
    () => { $crate::graph::Attrs::new() };
    ($($key:expr => $value:expr),+ $(,)?) => {{
        let mut map = $crate::graph::Attrs::new();
        $( map.insert($key.to_string(), $crate::graph::AttrValue::from($value)); )+
        map
    }};
}
