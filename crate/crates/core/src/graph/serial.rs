use std::cmp::Ordering;

use serde_json::Value;

use super::{AttrValue, Attrs, Edge, GraphError, MaltSchema, PropertyGraph};

/// Renders the graph interchange object
/// `{"directed":..,"nodes":{id:{..}},"edges":[{"src":..,"dst":..,"attrs":{..}}]}`.
///
/// With `canonical` set, nodes are sorted by id and edges by
/// `(src, dst, attrs)`, so permuted copies of a graph render identically.
pub fn serialize_graph(g: &PropertyGraph, canonical: bool) -> String {
    let mut out = String::with_capacity(64 + g.size() * 48);
    out.push_str("{\"directed\":");
    out.push_str(if g.directed { "true" } else { "false" });
    out.push_str(",\"nodes\":{");

    let mut nodes: Vec<(&String, &Attrs)> = g.nodes.iter().collect();
    if canonical {
        nodes.sort_by(|a, b| a.0.cmp(b.0));
    }
    for (i, (id, attrs)) in nodes.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_string(&mut out, id);
        out.push(':');
        push_attrs(&mut out, attrs);
    }
    out.push_str("},\"edges\":[");

    let mut edges: Vec<(&Edge, Option<String>)> = g.edges.iter().map(|e| (e, None)).collect();
    if canonical {
        for entry in edges.iter_mut() {
            let mut rendered = String::new();
            push_attrs(&mut rendered, &entry.0.attrs);
            entry.1 = Some(rendered);
        }
        edges.sort_by(edge_order);
    }
    for (i, (edge, rendered)) in edges.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"src\":");
        push_string(&mut out, &edge.src);
        out.push_str(",\"dst\":");
        push_string(&mut out, &edge.dst);
        out.push_str(",\"attrs\":");
        match rendered {
            Some(r) => out.push_str(r),
            None => push_attrs(&mut out, &edge.attrs),
        }
        out.push('}');
    }
    out.push_str("]}");
    out
}

fn edge_order(a: &(&Edge, Option<String>), b: &(&Edge, Option<String>)) -> Ordering {
    a.0.src
        .cmp(&b.0.src)
        .then_with(|| a.0.dst.cmp(&b.0.dst))
        .then_with(|| a.1.cmp(&b.1))
}

fn push_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

fn push_attrs(out: &mut String, attrs: &Attrs) {
    out.push('{');
    for (i, (key, value)) in attrs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_string(out, key);
        out.push(':');
        push_value(out, value);
    }
    out.push('}');
}

fn push_value(out: &mut String, value: &AttrValue) {
    match value {
        AttrValue::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_value(out, item);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_json().to_string()),
    }
}

/// Parses the interchange format and validates it; with a schema, the
/// graph must also satisfy the MALT rules.
pub fn load_graph(text: &str, schema: Option<&MaltSchema>) -> Result<PropertyGraph, GraphError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let g = graph_from_json(&doc)?;
    if let Some(schema) = schema {
        schema.validate(&g)?;
    }
    Ok(g)
}

pub(crate) fn graph_from_json(doc: &Value) -> Result<PropertyGraph, GraphError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| GraphError::Parse("graph document must be an object".into()))?;
    let directed = obj
        .get("directed")
        .and_then(Value::as_bool)
        .ok_or_else(|| GraphError::Parse("missing boolean field `directed`".into()))?;
    let nodes = obj
        .get("nodes")
        .and_then(Value::as_object)
        .ok_or_else(|| GraphError::Parse("missing object field `nodes`".into()))?;
    let edges = obj
        .get("edges")
        .and_then(Value::as_array)
        .ok_or_else(|| GraphError::Parse("missing array field `edges`".into()))?;

    let mut g = PropertyGraph::new(directed);
    for (id, attrs) in nodes {
        let attrs = attrs_from_json(attrs).map_err(|e| GraphError::Parse(format!("node `{id}`: {e}")))?;
        g.add_node(id.clone(), attrs)?;
    }
    for (i, edge) in edges.iter().enumerate() {
        let field = |name: &str| {
            edge.get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| GraphError::Parse(format!("edge #{i}: missing text field `{name}`")))
        };
        let (src, dst) = (field("src")?, field("dst")?);
        let attrs = match edge.get("attrs") {
            None => Attrs::new(),
            Some(a) => attrs_from_json(a).map_err(|e| GraphError::Parse(format!("edge #{i}: {e}")))?,
        };
        g.add_edge(src, dst, attrs)?;
    }
    Ok(g)
}

fn attrs_from_json(value: &Value) -> Result<Attrs, String> {
    let obj = value.as_object().ok_or("attributes must be an object")?;
    obj.iter()
        .map(|(k, v)| AttrValue::from_json(v).map(|v| (k.clone(), v)).map_err(|e| format!("attribute `{k}`: {e}")))
        .collect()
}

impl serde::Serialize for PropertyGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let doc: Value = serde_json::from_str(&serialize_graph(self, true)).map_err(serde::ser::Error::custom)?;
        doc.serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for PropertyGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = Value::deserialize(deserializer)?;
        graph_from_json(&doc).map_err(serde::de::Error::custom)
    }
}

impl serde::Serialize for AttrValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for AttrValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        AttrValue::from_json(&v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs;
    use crate::graph::{generate_traffic_graph, graph_equal, Tolerance};

    #[test]
    fn empty_directed_graph_format() {
        let g = PropertyGraph::new(true);
        assert_eq!(serialize_graph(&g, true), r#"{"directed":true,"nodes":{},"edges":[]}"#);
        assert_eq!(serialize_graph(&g, false), r#"{"directed":true,"nodes":{},"edges":[]}"#);
    }

    #[test]
    fn canonical_form_ignores_storage_order() {
        let mut a = PropertyGraph::new(true);
        a.add_node("b", attrs!("x" => 1i64)).unwrap();
        a.add_node("a", attrs!()).unwrap();
        a.add_edge("b", "a", attrs!("bytes" => 5i64)).unwrap();
        a.add_edge("a", "b", attrs!("bytes" => 7i64)).unwrap();

        let mut b = PropertyGraph::new(true);
        b.add_node("a", attrs!()).unwrap();
        b.add_node("b", attrs!("x" => 1i64)).unwrap();
        b.add_edge("a", "b", attrs!("bytes" => 7i64)).unwrap();
        b.add_edge("b", "a", attrs!("bytes" => 5i64)).unwrap();

        assert_ne!(serialize_graph(&a, false), serialize_graph(&b, false));
        assert_eq!(serialize_graph(&a, true), serialize_graph(&b, true));
    }

    #[test]
    fn round_trip_generated_graph() {
        let g = generate_traffic_graph(10, 20, 42).unwrap();
        let back = load_graph(&serialize_graph(&g, false), None).unwrap();
        assert!(graph_equal(&g, &back, Tolerance::exact()).equal);
        assert_eq!(back, g);
    }

    #[test]
    fn floats_keep_their_type() {
        let mut g = PropertyGraph::new(false);
        g.add_node("n", attrs!("w" => 2.0f64, "c" => 2i64)).unwrap();
        let text = serialize_graph(&g, true);
        assert_eq!(text, r#"{"directed":false,"nodes":{"n":{"c":2,"w":2.0}},"edges":[]}"#);
        assert_eq!(load_graph(&text, None).unwrap(), g);
    }

    #[test]
    fn dangling_edge_names_the_missing_node() {
        let text = r#"{"directed":true,"nodes":{"10.0.0.1":{}},"edges":[{"src":"10.0.0.1","dst":"10.0.0.9","attrs":{}}]}"#;
        match load_graph(text, None) {
            Err(GraphError::Validation(msg)) => assert!(msg.contains("10.0.0.9"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_text_is_a_parse_error() {
        assert!(matches!(load_graph("{\"directed\":", None), Err(GraphError::Parse(_))));
        assert!(matches!(load_graph("{\"nodes\":{},\"edges\":[]}", None), Err(GraphError::Parse(_))));
        assert!(matches!(
            load_graph(r#"{"directed":true,"nodes":{"a":{"x":null}},"edges":[]}"#, None),
            Err(GraphError::Parse(_))
        ));
    }
}
