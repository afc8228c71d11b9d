use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AttrValue, Attrs, Edge, PropertyGraph};

/// Relative tolerance with an absolute floor, applied to numeric values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Tolerance {
    pub const fn exact() -> Self {
        Self { relative: 0.0, absolute: 0.0 }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { relative: 1e-6, absolute: 1e-9 }
    }
}

/// Numbers compare as reals: `|a-b| <= max(abs, rel * max(|a|,|b|))`.
pub fn numbers_close(a: f64, b: f64, tol: Tolerance) -> bool {
    if a == b {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= tol.absolute.max(tol.relative * scale)
}

pub(crate) fn attr_values_equal(a: &AttrValue, b: &AttrValue, tol: Tolerance) -> bool {
    match (a, b) {
        (AttrValue::List(x), AttrValue::List(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| attr_values_equal(p, q, tol))
        }
        (AttrValue::Text(x), AttrValue::Text(y)) => x == y,
        (AttrValue::Bool(x), AttrValue::Bool(y)) => x == y,
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => numbers_close(x, y, tol),
            _ => false,
        },
    }
}

fn attrs_equal(a: &Attrs, b: &Attrs, tol: Tolerance) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|(k, v)| b.get(k).is_some_and(|w| attr_values_equal(v, w, tol)))
}

/// One difference between two graphs, phrased as a change from the first
/// graph to the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum Difference {
    Directedness { before: bool, after: bool },
    NodeAdded { id: String },
    NodeRemoved { id: String },
    NodeAttr { id: String, key: String, before: Option<serde_json::Value>, after: Option<serde_json::Value> },
    EdgeAdded { src: String, dst: String, attrs: serde_json::Value },
    EdgeRemoved { src: String, dst: String, attrs: serde_json::Value },
    EdgeAttr { src: String, dst: String, key: String, before: Option<serde_json::Value>, after: Option<serde_json::Value> },
}

fn show(v: &Option<serde_json::Value>) -> String {
    v.as_ref().map_or_else(|| "<absent>".to_string(), |v| v.to_string())
}

impl fmt::Display for Difference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Difference::Directedness { before, after } => {
                write!(f, "directedness differs: {before} vs {after}")
            }
            Difference::NodeAdded { id } => write!(f, "node `{id}` only in second graph"),
            Difference::NodeRemoved { id } => write!(f, "node `{id}` only in first graph"),
            Difference::NodeAttr { id, key, before, after } => {
                write!(f, "node `{id}` attribute `{key}`: {} vs {}", show(before), show(after))
            }
            Difference::EdgeAdded { src, dst, attrs } => {
                write!(f, "edge {src} -> {dst} {attrs} only in second graph")
            }
            Difference::EdgeRemoved { src, dst, attrs } => {
                write!(f, "edge {src} -> {dst} {attrs} only in first graph")
            }
            Difference::EdgeAttr { src, dst, key, before, after } => {
                write!(f, "edge {src} -> {dst} attribute `{key}`: {} vs {}", show(before), show(after))
            }
        }
    }
}

/// Outcome of [`graph_equal`]. `first_difference` is present exactly when
/// the graphs differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub equal: bool,
    pub first_difference: Option<String>,
}

pub fn graph_equal(a: &PropertyGraph, b: &PropertyGraph, tol: Tolerance) -> MatchReport {
    match diff_impl(a, b, tol, Some(1)).into_iter().next() {
        None => MatchReport { equal: true, first_difference: None },
        Some(d) => MatchReport { equal: false, first_difference: Some(d.to_string()) },
    }
}

/// Full list of differences from `a` to `b`, in a deterministic order
/// (nodes by id, then edges by endpoints).
pub fn graph_diff(a: &PropertyGraph, b: &PropertyGraph, tol: Tolerance) -> Vec<Difference> {
    diff_impl(a, b, tol, None)
}

fn attrs_json(attrs: &Attrs) -> serde_json::Value {
    serde_json::Value::Object(attrs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
}

fn diff_impl(a: &PropertyGraph, b: &PropertyGraph, tol: Tolerance, limit: Option<usize>) -> Vec<Difference> {
    let mut out = Vec::new();
    let full = |out: &Vec<Difference>| limit.is_some_and(|l| out.len() >= l);

    if a.directed != b.directed {
        out.push(Difference::Directedness { before: a.directed, after: b.directed });
        if full(&out) {
            return out;
        }
    }

    let mut ids: Vec<&String> = a.nodes.keys().chain(b.nodes.keys()).collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        match (a.nodes.get(id), b.nodes.get(id)) {
            (Some(_), None) => out.push(Difference::NodeRemoved { id: id.clone() }),
            (None, Some(_)) => out.push(Difference::NodeAdded { id: id.clone() }),
            (Some(x), Some(y)) => {
                for (key, before, after) in attr_changes(x, y, tol) {
                    out.push(Difference::NodeAttr { id: id.clone(), key, before, after });
                    if full(&out) {
                        return out;
                    }
                }
            }
            (None, None) => unreachable!(),
        }
        if full(&out) {
            return out;
        }
    }

    let directed = a.directed && b.directed;
    let (ga, gb) = (group_edges(a, directed), group_edges(b, directed));
    let mut keys: Vec<&(String, String)> = ga.keys().chain(gb.keys()).collect();
    keys.sort();
    keys.dedup();
    for key in keys {
        let mut left: Vec<&Edge> = ga.get(key).cloned().unwrap_or_default();
        let mut right: Vec<&Edge> = gb.get(key).cloned().unwrap_or_default();
        left.retain(|e| {
            if let Some(pos) = right.iter().position(|f| attrs_equal(&e.attrs, &f.attrs, tol)) {
                right.remove(pos);
                false
            } else {
                true
            }
        });
        let (src, dst) = key.clone();
        if left.len() == 1 && right.len() == 1 {
            for (k, before, after) in attr_changes(&left[0].attrs, &right[0].attrs, tol) {
                out.push(Difference::EdgeAttr { src: src.clone(), dst: dst.clone(), key: k, before, after });
                if full(&out) {
                    return out;
                }
            }
            continue;
        }
        for e in left {
            out.push(Difference::EdgeRemoved { src: src.clone(), dst: dst.clone(), attrs: attrs_json(&e.attrs) });
            if full(&out) {
                return out;
            }
        }
        for e in right {
            out.push(Difference::EdgeAdded { src: src.clone(), dst: dst.clone(), attrs: attrs_json(&e.attrs) });
            if full(&out) {
                return out;
            }
        }
    }
    out
}

fn group_edges(g: &PropertyGraph, directed: bool) -> BTreeMap<(String, String), Vec<&Edge>> {
    let mut groups: BTreeMap<(String, String), Vec<&Edge>> = BTreeMap::new();
    for e in &g.edges {
        let key = if directed || e.src <= e.dst {
            (e.src.clone(), e.dst.clone())
        } else {
            (e.dst.clone(), e.src.clone())
        };
        groups.entry(key).or_default().push(e);
    }
    groups
}

type AttrChange = (String, Option<serde_json::Value>, Option<serde_json::Value>);

fn attr_changes(x: &Attrs, y: &Attrs, tol: Tolerance) -> Vec<AttrChange> {
    let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|k| match (x.get(k), y.get(k)) {
            (Some(p), Some(q)) if attr_values_equal(p, q, tol) => None,
            (p, q) => Some((k.clone(), p.map(AttrValue::to_json), q.map(AttrValue::to_json))),
        })
        .collect()
}
