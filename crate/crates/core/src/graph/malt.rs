use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{AttrValue, GraphError, PropertyGraph};

pub const NODE_TYPE_PACKET_SWITCH: &str = "PACKET_SWITCH";
pub const NODE_TYPE_CHASSIS: &str = "CHASSIS";
pub const NODE_TYPE_PORT: &str = "PORT";
pub const NODE_TYPE_CONTROL_POINT: &str = "CONTROL_POINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelKind {
    Contains,
    Controls,
}

impl RelKind {
    pub const ALL: [RelKind; 2] = [RelKind::Contains, RelKind::Controls];

    pub fn as_str(self) -> &'static str {
        match self {
            RelKind::Contains => "CONTAINS",
            RelKind::Controls => "CONTROLS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Requirement on a typed node's attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrRequirement {
    NonNegativeInt,
}

/// Entity vocabulary of a MALT topology.
///
/// Every node carries a `type` from `node_types` and every edge a `kind`
/// from the relationship kinds. The default schema knows the four core
/// entity types; more can be registered with [`MaltSchema::with_node_type`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaltSchema {
    node_types: BTreeSet<String>,
    required: BTreeMap<String, Vec<(String, AttrRequirement)>>,
}

impl Default for MaltSchema {
    fn default() -> Self {
        let node_types = [NODE_TYPE_PACKET_SWITCH, NODE_TYPE_CHASSIS, NODE_TYPE_PORT, NODE_TYPE_CONTROL_POINT]
            .into_iter()
            .map(String::from)
            .collect();
        let mut required = BTreeMap::new();
        required.insert(
            NODE_TYPE_CHASSIS.to_string(),
            vec![("capacity".to_string(), AttrRequirement::NonNegativeInt)],
        );
        Self { node_types, required }
    }
}

impl MaltSchema {
    pub fn with_node_type(mut self, name: &str) -> Self {
        self.node_types.insert(name.to_string());
        self
    }

    pub fn node_types(&self) -> impl Iterator<Item = &str> {
        self.node_types.iter().map(String::as_str)
    }

    pub fn is_node_type(&self, name: &str) -> bool {
        self.node_types.contains(name)
    }

    pub fn validate(&self, g: &PropertyGraph) -> Result<(), GraphError> {
        let invalid = |msg: String| Err(GraphError::Validation(msg));
        if !g.is_directed() {
            return invalid("MALT graphs must be directed".into());
        }
        for (id, attrs) in g.nodes() {
            let ty = match attrs.get("type") {
                Some(AttrValue::Text(t)) => t,
                Some(other) => return invalid(format!("node `{id}` has non-text type {other}")),
                None => return invalid(format!("node `{id}` is missing attribute `type`")),
            };
            if !self.node_types.contains(ty) {
                return invalid(format!("node `{id}` has unknown type `{ty}`"));
            }
            for (key, requirement) in self.required.get(ty).into_iter().flatten() {
                match (requirement, attrs.get(key)) {
                    (AttrRequirement::NonNegativeInt, Some(AttrValue::Int(v))) if *v >= 0 => {}
                    (AttrRequirement::NonNegativeInt, found) => {
                        return invalid(format!(
                            "node `{id}` of type {ty} needs non-negative integer `{key}`, found {}",
                            found.map_or("nothing".to_string(), |v| v.to_string())
                        ))
                    }
                }
            }
        }

        // (contained node, parent type) -> parent
        let mut parents: HashMap<(&str, &str), &str> = HashMap::new();
        for e in g.edges() {
            let kind = match e.attrs.get("kind") {
                Some(AttrValue::Text(k)) => k,
                _ => return invalid(format!("edge {} -> {} is missing text attribute `kind`", e.src, e.dst)),
            };
            match RelKind::parse(kind) {
                None => {
                    return invalid(format!("edge {} -> {} has unknown relationship kind `{kind}`", e.src, e.dst))
                }
                Some(RelKind::Contains) => {
                    let parent_type = g.node(&e.src).and_then(|a| a.get("type")).and_then(AttrValue::as_str).unwrap_or("");
                    if let Some(prev) = parents.insert((e.dst.as_str(), parent_type), e.src.as_str()) {
                        if prev != e.src {
                            return invalid(format!(
                                "node `{}` is contained by two {parent_type} parents `{prev}` and `{}`",
                                e.dst, e.src
                            ));
                        }
                    }
                }
                Some(RelKind::Controls) => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs;
    use crate::graph::generate_malt;

    fn count_by<F: Fn(&crate::graph::Attrs) -> bool>(g: &PropertyGraph, f: F) -> usize {
        g.nodes().filter(|(_, a)| f(a)).count()
    }

    #[test]
    fn generated_two_two_two_counts() {
        let g = generate_malt(2, 2, 2, 5).unwrap();
        MaltSchema::default().validate(&g).unwrap();
        // enumerate by inspection rather than formula
        let of_type = |t: &str| count_by(&g, |a| a.get("type").and_then(AttrValue::as_str) == Some(t));
        assert_eq!(of_type(NODE_TYPE_CHASSIS), 2);
        assert_eq!(of_type(NODE_TYPE_PACKET_SWITCH), 4);
        assert_eq!(of_type(NODE_TYPE_PORT), 8);
        assert_eq!(of_type(NODE_TYPE_CONTROL_POINT), 1);
        assert_eq!(g.node_count(), 15);
        let of_kind = |k: &str| g.edges().iter().filter(|e| e.attrs["kind"].as_str() == Some(k)).count();
        // 4 chassis->switch + 8 switch->port
        assert_eq!(of_kind("CONTAINS"), 12);
        assert_eq!(of_kind("CONTROLS"), 4);
        assert_eq!(g.edge_count(), 16);
    }

    #[test]
    fn rejects_missing_type_and_unknown_kind() {
        let schema = MaltSchema::default();
        let mut g = PropertyGraph::new(true);
        g.add_node("x", attrs!()).unwrap();
        let err = schema.validate(&g).unwrap_err().to_string();
        assert!(err.contains("`x`") && err.contains("type"), "{err}");

        let mut g = PropertyGraph::new(true);
        g.add_node("a", attrs!("type" => "PORT")).unwrap();
        g.add_node("b", attrs!("type" => "PORT")).unwrap();
        g.add_edge("a", "b", attrs!("kind" => "LINKS")).unwrap();
        let err = schema.validate(&g).unwrap_err().to_string();
        assert!(err.contains("LINKS"), "{err}");
    }

    #[test]
    fn rejects_bad_capacity_and_double_containment() {
        let schema = MaltSchema::default();
        let mut g = PropertyGraph::new(true);
        g.add_node("c", attrs!("type" => "CHASSIS", "capacity" => -1i64)).unwrap();
        assert!(schema.validate(&g).is_err());

        let mut g = PropertyGraph::new(true);
        g.add_node("c1", attrs!("type" => "CHASSIS", "capacity" => 1i64)).unwrap();
        g.add_node("c2", attrs!("type" => "CHASSIS", "capacity" => 1i64)).unwrap();
        g.add_node("s", attrs!("type" => "PACKET_SWITCH")).unwrap();
        g.add_edge("c1", "s", attrs!("kind" => "CONTAINS")).unwrap();
        g.add_edge("c2", "s", attrs!("kind" => "CONTAINS")).unwrap();
        let err = schema.validate(&g).unwrap_err().to_string();
        assert!(err.contains("contained by two"), "{err}");
    }

    #[test]
    fn extensible_node_types() {
        let mut g = PropertyGraph::new(true);
        g.add_node("r", attrs!("type" => "RACK")).unwrap();
        assert!(MaltSchema::default().validate(&g).is_err());
        MaltSchema::default().with_node_type("RACK").validate(&g).unwrap();
    }
}
