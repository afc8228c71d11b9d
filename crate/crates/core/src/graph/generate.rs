//! Seeded synthetic graphs for the two applications.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::malt::{NODE_TYPE_CHASSIS, NODE_TYPE_CONTROL_POINT, NODE_TYPE_PACKET_SWITCH, NODE_TYPE_PORT};
use super::{AttrValue, Attrs, GraphError, PropertyGraph, RelKind};
use crate::attrs;

/// /16 prefixes traffic node addresses are drawn from, in allocation order.
pub const TRAFFIC_PREFIXES: [&str; 8] = [
    "15.76", "10.0", "172.16", "192.168", "23.45", "44.12", "88.3", "101.9",
];

pub const MAX_BYTES: i64 = 1_000_000;
pub const MAX_CONNECTIONS: i64 = 1_000;
pub const MAX_PACKETS: i64 = 10_000;

/// Directed communication graph with IPv4 node ids and random
/// `bytes`/`connections`/`packets` weights on each edge.
///
/// Edges connect distinct ordered node pairs, so at most
/// `n_nodes * (n_nodes - 1)` edges can be requested.
pub fn generate_traffic_graph(n_nodes: usize, n_edges: usize, seed: u64) -> Result<PropertyGraph, GraphError> {
    if n_nodes == 0 {
        return Err(GraphError::ParameterOutOfRange("n_nodes must be at least 1".into()));
    }
    let max_edges = n_nodes.saturating_mul(n_nodes - 1);
    if n_edges > max_edges {
        return Err(GraphError::ParameterOutOfRange(format!(
            "n_edges {n_edges} exceeds {max_edges} distinct ordered pairs for {n_nodes} nodes"
        )));
    }
    if n_nodes > TRAFFIC_PREFIXES.len() * 256 * 254 {
        return Err(GraphError::ParameterOutOfRange(format!("n_nodes {n_nodes} exceeds the address pool")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prefix_count = if n_nodes == 1 { 1 } else { (n_nodes / 6).clamp(2, TRAFFIC_PREFIXES.len()) };

    let mut used = HashSet::with_capacity(n_nodes);
    let mut ids = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let prefix = if i < prefix_count {
            TRAFFIC_PREFIXES[i]
        } else {
            TRAFFIC_PREFIXES[rng.gen_range(0..prefix_count)]
        };
        loop {
            let addr = format!("{prefix}.{}.{}", rng.gen_range(0..=255u8), rng.gen_range(1..=254u8));
            if used.insert(addr.clone()) {
                ids.push(addr);
                break;
            }
        }
    }

    let pairs: Vec<(usize, usize)> = if n_edges * 2 > max_edges {
        let mut all: Vec<(usize, usize)> = (0..n_nodes)
            .flat_map(|u| (0..n_nodes).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(n_edges);
        all
    } else {
        let mut seen = HashSet::with_capacity(n_edges);
        let mut out = Vec::with_capacity(n_edges);
        while out.len() < n_edges {
            let u = rng.gen_range(0..n_nodes);
            let v = rng.gen_range(0..n_nodes);
            if u != v && seen.insert((u, v)) {
                out.push((u, v));
            }
        }
        out
    };

    let mut g = PropertyGraph::new(true);
    for id in &ids {
        g.add_node(id.clone(), Attrs::new())?;
    }
    for (u, v) in pairs {
        let weights = attrs!(
            "bytes" => rng.gen_range(1..=MAX_BYTES),
            "connections" => rng.gen_range(1..=MAX_CONNECTIONS),
            "packets" => rng.gen_range(1..=MAX_PACKETS),
        );
        g.add_edge(ids[u].clone(), ids[v].clone(), weights)?;
    }
    Ok(g)
}

/// MALT-style topology: chassis contain packet switches, switches contain
/// ports, and a single control point controls every switch.
///
/// Entity names follow `ju1.a1.m1.c{i}` for chassis, `ju1.a1.m1.s{j}c{i}` for
/// switch `j` of chassis `i`, and `ju1.a1.m1.s{j}c{i}.p{k}` for its ports.
pub fn generate_malt(
    n_chassis: usize,
    switches_per_chassis: usize,
    ports_per_switch: usize,
    seed: u64,
) -> Result<PropertyGraph, GraphError> {
    if n_chassis == 0 || switches_per_chassis == 0 || ports_per_switch == 0 {
        return Err(GraphError::ParameterOutOfRange("all MALT counts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = PropertyGraph::new(true);
    let control_point = "ju1.a1.m1.cp1".to_string();
    let contains = || attrs!("kind" => RelKind::Contains.as_str());

    for c in 1..=n_chassis {
        let capacity = rng.gen_range(10..=100i64) * 10;
        g.add_node(chassis_id(c), attrs!("type" => NODE_TYPE_CHASSIS, "capacity" => capacity))?;
    }
    for c in 1..=n_chassis {
        for s in 1..=switches_per_chassis {
            let switch = switch_id(s, c);
            g.add_node(switch.clone(), attrs!("type" => NODE_TYPE_PACKET_SWITCH))?;
            g.add_edge(chassis_id(c), switch.clone(), contains())?;
            for p in 1..=ports_per_switch {
                let port = format!("{switch}.p{p}");
                let speed = [10i64, 40, 100][rng.gen_range(0..3)];
                g.add_node(port.clone(), attrs!("type" => NODE_TYPE_PORT, "speed" => AttrValue::Int(speed)))?;
                g.add_edge(switch.clone(), port, contains())?;
            }
        }
    }
    g.add_node(control_point.clone(), attrs!("type" => NODE_TYPE_CONTROL_POINT))?;
    for c in 1..=n_chassis {
        for s in 1..=switches_per_chassis {
            g.add_edge(control_point.clone(), switch_id(s, c), attrs!("kind" => RelKind::Controls.as_str()))?;
        }
    }
    Ok(g)
}

fn chassis_id(c: usize) -> String {
    format!("ju1.a1.m1.c{c}")
}

fn switch_id(s: usize, c: usize) -> String {
    format!("ju1.a1.m1.s{s}c{c}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{serialize_graph, MaltSchema};

    #[test]
    fn traffic_counts_ranges_and_prefixes() {
        let g = generate_traffic_graph(30, 60, 7).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (30, 60));
        for e in g.edges() {
            assert_ne!(e.src, e.dst);
            let get = |k: &str| e.attrs[k].as_i64().unwrap();
            assert!((1..=MAX_BYTES).contains(&get("bytes")));
            assert!((1..=MAX_CONNECTIONS).contains(&get("connections")));
            assert!((1..=MAX_PACKETS).contains(&get("packets")));
        }
        let prefixes: HashSet<String> = g
            .nodes()
            .map(|(id, _)| id.split('.').take(2).collect::<Vec<_>>().join("."))
            .collect();
        assert!(prefixes.len() > 1);
        assert!(prefixes.contains("15.76"));
        for (id, _) in g.nodes() {
            let octets: Vec<u16> = id.split('.').map(|o| o.parse().unwrap()).collect();
            assert_eq!(octets.len(), 4);
            assert!(octets.iter().all(|&o| o <= 255));
        }
    }

    #[test]
    fn traffic_is_deterministic() {
        let a = generate_traffic_graph(10, 20, 42).unwrap();
        let b = generate_traffic_graph(10, 20, 42).unwrap();
        assert_eq!(serialize_graph(&a, false), serialize_graph(&b, false));
        let c = generate_traffic_graph(10, 20, 43).unwrap();
        assert_ne!(serialize_graph(&a, true), serialize_graph(&c, true));
    }

    #[test]
    fn traffic_boundaries() {
        let g = generate_traffic_graph(1, 0, 99).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
        assert!(generate_traffic_graph(0, 0, 1).is_err());
        assert!(generate_traffic_graph(3, 7, 1).is_err());
        let full = generate_traffic_graph(3, 6, 1).unwrap();
        assert_eq!(full.edge_count(), 6);
    }

    #[test]
    fn malt_minimal_case() {
        let g = generate_malt(1, 1, 1, 0).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 3));
        MaltSchema::default().validate(&g).unwrap();
        assert!(generate_malt(0, 1, 1, 0).is_err());
    }
}
