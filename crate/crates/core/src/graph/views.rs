use super::{AttrValue, Attrs, GraphError, PropertyGraph};

/// Column-major header plus rows; a missing attribute is `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<AttrValue>>>,
}

impl Table {
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                serde_json::Value::Array(
                    row.iter()
                        .map(|cell| cell.as_ref().map_or(serde_json::Value::Null, AttrValue::to_json))
                        .collect(),
                )
            })
            .collect();
        serde_json::json!({ "columns": self.columns, "rows": rows })
    }

    /// Parses `{"columns": [...], "rows": [[...], ...]}`; JSON null is a missing cell.
    pub fn from_json(doc: &serde_json::Value) -> Result<Self, String> {
        let columns: Vec<String> = doc
            .get("columns")
            .and_then(|c| c.as_array())
            .ok_or("table needs a `columns` array")?
            .iter()
            .map(|c| c.as_str().map(str::to_string).ok_or("column names must be text"))
            .collect::<Result<_, _>>()?;
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(format!("duplicate column `{dup}`"));
        }
        let rows = doc
            .get("rows")
            .and_then(|r| r.as_array())
            .ok_or("table needs a `rows` array")?
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cells = row.as_array().ok_or(format!("row {i} is not an array"))?;
                if cells.len() != columns.len() {
                    return Err(format!("row {i} has {} cells for {} columns", cells.len(), columns.len()));
                }
                cells
                    .iter()
                    .map(|c| if c.is_null() { Ok(None) } else { AttrValue::from_json(c).map(Some) })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("row {i}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { columns, rows })
    }
}

const NODE_KEY: &str = "id";
const EDGE_KEYS: [&str; 2] = ["src", "dst"];

/// Projects a graph into a node table (`id` + node attribute keys) and an
/// edge table (`src`, `dst` + edge attribute keys), rows in canonical order.
pub fn project_views(g: &PropertyGraph) -> Result<(Table, Table), GraphError> {
    let node_keys = g.node_attr_keys();
    let edge_keys = g.edge_attr_keys();
    let reserved = [NODE_KEY, EDGE_KEYS[0], EDGE_KEYS[1]];
    if let Some(bad) = node_keys.iter().chain(&edge_keys).find(|k| reserved.contains(&k.as_str())) {
        return Err(GraphError::ColumnNameCollision(bad.clone()));
    }

    let mut node_ids: Vec<(&str, &Attrs)> = g.nodes().collect();
    node_ids.sort_by(|a, b| a.0.cmp(b.0));
    let nodes = Table {
        columns: std::iter::once(NODE_KEY.to_string()).chain(node_keys.iter().cloned()).collect(),
        rows: node_ids
            .into_iter()
            .map(|(id, attrs)| {
                std::iter::once(Some(AttrValue::Text(id.to_string())))
                    .chain(node_keys.iter().map(|k| attrs.get(k).cloned()))
                    .collect()
            })
            .collect(),
    };

    let mut edge_rows: Vec<(String, Vec<Option<AttrValue>>)> = g
        .edges()
        .iter()
        .map(|e| {
            let row: Vec<Option<AttrValue>> = [Some(AttrValue::Text(e.src.clone())), Some(AttrValue::Text(e.dst.clone()))]
                .into_iter()
                .chain(edge_keys.iter().map(|k| e.attrs.get(k).cloned()))
                .collect();
            let attrs_json: serde_json::Map<String, serde_json::Value> =
                e.attrs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
            (serde_json::Value::Object(attrs_json).to_string(), row)
        })
        .collect();
    edge_rows.sort_by(|(ka, a), (kb, b)| {
        let text = |r: &Vec<Option<AttrValue>>, i: usize| r[i].as_ref().and_then(AttrValue::as_str).map(str::to_string);
        text(a, 0).cmp(&text(b, 0)).then_with(|| text(a, 1).cmp(&text(b, 1))).then_with(|| ka.cmp(kb))
    });
    let edges = Table {
        columns: EDGE_KEYS.iter().map(|s| s.to_string()).chain(edge_keys.iter().cloned()).collect(),
        rows: edge_rows.into_iter().map(|(_, r)| r).collect(),
    };
    Ok((nodes, edges))
}

/// Inverse of [`project_views`]: null cells become absent attributes.
pub fn rebuild_from_views(directed: bool, nodes: &Table, edges: &Table) -> Result<PropertyGraph, GraphError> {
    let col = |t: &Table, name: &str| {
        t.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| GraphError::Validation(format!("table is missing column `{name}`")))
    };
    let text_cell = |row: &[Option<AttrValue>], i: usize, what: &str| match row.get(i) {
        Some(Some(AttrValue::Text(s))) => Ok(s.clone()),
        other => Err(GraphError::Validation(format!("{what} must be text, found {other:?}"))),
    };
    let attrs_of = |row: &[Option<AttrValue>], columns: &[String], skip: &[usize]| -> Attrs {
        row.iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .filter_map(|(i, cell)| cell.clone().map(|v| (columns[i].clone(), v)))
            .collect()
    };

    let id_col = col(nodes, NODE_KEY)?;
    let (src_col, dst_col) = (col(edges, "src")?, col(edges, "dst")?);
    let mut g = PropertyGraph::new(directed);
    for row in &nodes.rows {
        let id = text_cell(row, id_col, "node id")?;
        g.add_node(id, attrs_of(row, &nodes.columns, &[id_col]))?;
    }
    for row in &edges.rows {
        let src = text_cell(row, src_col, "edge src")?;
        let dst = text_cell(row, dst_col, "edge dst")?;
        g.add_edge(src, dst, attrs_of(row, &edges.columns, &[src_col, dst_col]))?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs;
    use crate::graph::{generate_malt, generate_traffic_graph, graph_equal, Tolerance};

    #[test]
    fn empty_graph_has_header_only_tables() {
        let (n, e) = project_views(&PropertyGraph::new(true)).unwrap();
        assert_eq!(n.columns, vec!["id"]);
        assert_eq!(e.columns, vec!["src", "dst"]);
        assert!(n.rows.is_empty() && e.rows.is_empty());
    }

    #[test]
    fn traffic_edge_columns() {
        let g = generate_traffic_graph(10, 20, 42).unwrap();
        let (n, e) = project_views(&g).unwrap();
        assert_eq!(e.columns, vec!["src", "dst", "bytes", "connections", "packets"]);
        assert_eq!(n.columns, vec!["id"]);
        assert_eq!(e.rows.len(), 20);
    }

    #[test]
    fn missing_attributes_are_null() {
        let g = generate_malt(1, 1, 1, 3).unwrap();
        let (n, _) = project_views(&g).unwrap();
        let cap = n.columns.iter().position(|c| c == "capacity").unwrap();
        let nulls = n.rows.iter().filter(|r| r[cap].is_none()).count();
        assert_eq!(nulls, 3);
    }

    #[test]
    fn reserved_names_collide() {
        let mut g = PropertyGraph::new(true);
        g.add_node("a", attrs!("src" => 1i64)).unwrap();
        assert_eq!(project_views(&g).unwrap_err(), GraphError::ColumnNameCollision("src".into()));
    }

    #[test]
    fn rebuild_round_trip() {
        let g = generate_malt(2, 2, 2, 11).unwrap();
        let (n, e) = project_views(&g).unwrap();
        let back = rebuild_from_views(true, &n, &e).unwrap();
        assert!(graph_equal(&g, &back, Tolerance::exact()).equal);
    }
}
