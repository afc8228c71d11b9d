//! Brute-force oracles for every shipped case, written against the graph
//! model directly. Each golden program must agree with its oracle and each
//! shipped mutant must disagree with it.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use nlnetops_core::eval::compare_values;
use nlnetops_core::graph::{graph_equal, AttrValue, Attrs, Edge, PropertyGraph, Tolerance};
use nlnetops_core::sandbox::{ExecBackendKind, ExecOutcome, ResultEnvelope, ResultValue, Sandbox, SandboxLimits};
use nlnetops_core::suite::{BenchmarkCase, Suite};
use serde_json::{json, Value};

fn suite(name: &str) -> Suite {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../bench").join(name).join("suite.json");
    Suite::load(&path).expect("suite loads")
}

enum Expect {
    /// Exact value and graph after the program.
    Exact { value: ResultValue, graph: PropertyGraph },
    /// Any graph accepted by the predicate; no value expected.
    Accepts(Box<dyn Fn(&PropertyGraph) -> Result<(), String>>),
}

fn value(kind: &str, v: Value) -> ResultValue {
    ResultValue::from_json(&json!({ "kind": kind, "value": v })).expect("oracle value parses")
}

fn scalar(v: impl Into<Value>) -> ResultValue {
    value("scalar", v.into())
}

fn exact(value: ResultValue, graph: &PropertyGraph) -> Expect {
    Expect::Exact { value, graph: graph.clone() }
}

fn int(a: &Attrs, k: &str) -> i64 {
    a[k].as_i64().unwrap_or_else(|| panic!("attribute {k} is not an integer"))
}

fn text<'a>(a: &'a Attrs, k: &str) -> &'a str {
    a[k].as_str().unwrap_or_else(|| panic!("attribute {k} is not text"))
}

fn prefix(id: &str) -> String {
    id.split('.').take(2).collect::<Vec<_>>().join(".")
}

/// Copy of `g` keeping selected nodes (and edges between kept nodes) with
/// optional attribute rewrites.
fn rebuild(
    g: &PropertyGraph,
    keep_node: impl Fn(&str) -> bool,
    keep_edge: impl Fn(&Edge) -> bool,
    mut node_fix: impl FnMut(&str, &mut Attrs),
    mut edge_fix: impl FnMut(&mut Edge),
) -> PropertyGraph {
    let mut out = PropertyGraph::new(g.is_directed());
    for (id, a) in g.nodes() {
        if keep_node(id) {
            let mut a = a.clone();
            node_fix(id, &mut a);
            out.add_node(id, a).unwrap();
        }
    }
    for e in g.edges() {
        if out.contains_node(&e.src) && out.contains_node(&e.dst) && keep_edge(e) {
            let mut e = e.clone();
            edge_fix(&mut e);
            out.add_edge(e.src, e.dst, e.attrs).unwrap();
        }
    }
    out
}

fn all_nodes(_: &str) -> bool {
    true
}
fn all_edges(_: &Edge) -> bool {
    true
}
fn no_node_fix(_: &str, _: &mut Attrs) {}
fn no_edge_fix(_: &mut Edge) {}

fn sent_bytes(g: &PropertyGraph) -> BTreeMap<String, i64> {
    let mut m = BTreeMap::new();
    for e in g.edges() {
        *m.entry(e.src.clone()).or_insert(0) += int(&e.attrs, "bytes");
    }
    m
}

/// Unique maximum of a map, panicking on a tie so that oracles never depend
/// on tie-breaking.
fn unique_max<K: Clone + std::fmt::Debug>(items: impl IntoIterator<Item = (K, i64)>) -> K {
    let mut items: Vec<(K, i64)> = items.into_iter().collect();
    items.sort_by_key(|(_, v)| std::cmp::Reverse(*v));
    assert!(items.len() < 2 || items[0].1 != items[1].1, "tie at the maximum: {:?}", &items[..2]);
    items[0].0.clone()
}

fn reach(g: &PropertyGraph) -> (Vec<String>, Vec<Vec<bool>>) {
    let ids: Vec<String> = g.nodes().map(|(n, _)| n.to_string()).collect();
    let ix: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let n = ids.len();
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for e in g.edges() {
        r[ix[e.src.as_str()]][ix[e.dst.as_str()]] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    (ids, r)
}

fn scc_count(g: &PropertyGraph) -> usize {
    let (ids, r) = reach(g);
    let mut seen = vec![false; ids.len()];
    let mut count = 0;
    for i in 0..ids.len() {
        if !seen[i] {
            count += 1;
            for j in 0..ids.len() {
                if r[i][j] && r[j][i] {
                    seen[j] = true;
                }
            }
        }
    }
    count
}

fn bfs(adj: &HashMap<&str, Vec<&str>>, from: &str) -> HashMap<String, usize> {
    let mut dist = HashMap::from([(from.to_string(), 0)]);
    let mut q = VecDeque::from([from.to_string()]);
    while let Some(u) = q.pop_front() {
        let d = dist[&u];
        for v in adj.get(u.as_str()).into_iter().flatten() {
            if !dist.contains_key(*v) {
                dist.insert(v.to_string(), d + 1);
                q.push_back(v.to_string());
            }
        }
    }
    dist
}

fn same_except(a: &PropertyGraph, b: &PropertyGraph, node_key: Option<&str>) -> Result<(), String> {
    let strip = |g: &PropertyGraph| {
        rebuild(g, all_nodes, all_edges, |_, attrs| {
            if let Some(k) = node_key {
                attrs.remove(k);
            }
        }, no_edge_fix)
    };
    let r = graph_equal(&strip(a), &strip(b), Tolerance::default());
    if r.equal {
        Ok(())
    } else {
        Err(format!("other state changed: {}", r.first_difference.unwrap_or_default()))
    }
}

fn traffic_oracle(id: &str, g: &PropertyGraph) -> Expect {
    let edges = g.edges();
    match id {
        "t01" => exact(
            ResultValue::None,
            &rebuild(g, all_nodes, all_edges, |n, a| {
                if n.starts_with("15.76.") {
                    a.insert("app".into(), AttrValue::Text("production".into()));
                }
            }, no_edge_fix),
        ),
        "t02" => exact(scalar(g.node_count()), g),
        "t03" => exact(scalar(g.edge_count()), g),
        "t04" => exact(scalar(edges.iter().map(|e| int(&e.attrs, "bytes")).sum::<i64>()), g),
        "t05" => {
            let ids: Vec<&str> = g.nodes().map(|(n, _)| n).filter(|n| n.starts_with("15.76.")).collect();
            exact(value("list", json!(ids)), g)
        }
        "t06" => {
            let e = unique_max(edges.iter().map(|e| (e, int(&e.attrs, "packets"))));
            exact(value("table", json!({"columns": ["src", "dst"], "rows": [[e.src, e.dst]]})), g)
        }
        "t07" => exact(ResultValue::None, &rebuild(g, all_nodes, |e| int(&e.attrs, "connections") >= 100, no_node_fix, no_edge_fix)),
        "t08" => {
            let total: i64 = edges.iter().map(|e| int(&e.attrs, "packets")).sum();
            exact(scalar(total as f64 / edges.len() as f64), g)
        }
        "t09" => {
            let before = g.clone();
            Expect::Accepts(Box::new(move |after| {
                same_except(&before, after, Some("color"))?;
                let nodes: Vec<(&str, &Attrs)> = after.nodes().collect();
                for (a, aa) in &nodes {
                    for (b, ba) in &nodes {
                        let (ca, cb) = (aa.get("color").ok_or("uncolored node")?, ba.get("color").ok_or("uncolored node")?);
                        if (prefix(a) == prefix(b)) != (ca == cb) {
                            return Err(format!("{a} and {b} break the one-color-per-prefix rule"));
                        }
                    }
                }
                Ok(())
            }))
        }
        "t10" => {
            let rows: Vec<Value> = sent_bytes(g).into_iter().map(|(n, b)| json!([n, b])).collect();
            exact(value("table", json!({"columns": ["node", "total_bytes"], "rows": rows})), g)
        }
        "t11" => {
            let mut s: Vec<(String, i64)> = sent_bytes(g).into_iter().collect();
            s.sort_by_key(|(_, b)| std::cmp::Reverse(*b));
            let ranks: BTreeSet<i64> = s.iter().take(6).map(|(_, b)| *b).collect();
            assert_eq!(ranks.len(), 6.min(s.len()), "tie among the top senders");
            exact(value("list", json!(s.iter().take(5).map(|(n, _)| n).collect::<Vec<_>>())), g)
        }
        "t12" => {
            let with_in: BTreeSet<&str> = edges.iter().map(|e| e.dst.as_str()).collect();
            exact(scalar(g.nodes().filter(|(n, _)| !with_in.contains(n)).count()), g)
        }
        "t13" => exact(ResultValue::None, &rebuild(g, |n| !n.starts_with("15.76."), all_edges, no_node_fix, no_edge_fix)),
        "t14" => {
            let mut per: BTreeMap<String, i64> = BTreeMap::new();
            for e in edges {
                *per.entry(prefix(&e.src)).or_default() += int(&e.attrs, "bytes");
            }
            exact(scalar(unique_max(per)), g)
        }
        "t15" => exact(scalar(edges.iter().filter(|e| prefix(&e.src) != prefix(&e.dst)).count()), g),
        "t16" => exact(
            ResultValue::None,
            &rebuild(g, all_nodes, all_edges, no_node_fix, |e| {
                let r = int(&e.attrs, "bytes") as f64 / int(&e.attrs, "packets") as f64;
                e.attrs.insert("bytes_per_packet".into(), AttrValue::Float(r));
            }),
        ),
        "t17" => {
            let before = g.clone();
            let mut weight: HashMap<String, i64> = g.nodes().map(|(n, _)| (n.to_string(), 0)).collect();
            for e in edges {
                *weight.get_mut(&e.src).unwrap() += int(&e.attrs, "bytes");
                *weight.get_mut(&e.dst).unwrap() += int(&e.attrs, "bytes");
            }
            Expect::Accepts(Box::new(move |after| {
                same_except(&before, after, Some("cluster"))?;
                let label = |n: &str| after.node(n).and_then(|a| a.get("cluster")).cloned().ok_or("unclustered node".to_string());
                let ids: Vec<&String> = weight.keys().collect();
                let mut labels = Vec::new();
                for n in &ids {
                    labels.push(format!("{:?}", label(n)?));
                }
                let distinct: BTreeSet<&String> = labels.iter().collect();
                if distinct.len() != 5 {
                    return Err(format!("{} clusters instead of 5", distinct.len()));
                }
                // A cluster may not skip over a node of strictly intermediate weight.
                for (i, x) in ids.iter().enumerate() {
                    for (j, y) in ids.iter().enumerate() {
                        for (k, z) in ids.iter().enumerate() {
                            let (wx, wy, wz) = (weight[*x], weight[*y], weight[*z]);
                            if wx < wy && wy < wz && labels[i] == labels[k] && labels[j] != labels[i] {
                                return Err(format!("cluster of {x} and {z} skips {y}"));
                            }
                        }
                    }
                }
                Ok(())
            }))
        }
        "t18" => {
            let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
            for e in edges {
                adj.entry(e.src.as_str()).or_default().push(e.dst.as_str());
            }
            let d = bfs(&adj, "10.0.138.195")["15.76.88.111"];
            exact(scalar(d), g)
        }
        "t19" => exact(scalar(scc_count(g)), g),
        "t20" => {
            let top = unique_max(sent_bytes(g));
            let after = rebuild(g, |n| n != top, all_edges, no_node_fix, no_edge_fix);
            exact(scalar(scc_count(&after)), &after)
        }
        "t21" => {
            let set: BTreeSet<(&str, &str)> = edges.iter().map(|e| (e.src.as_str(), e.dst.as_str())).collect();
            exact(scalar(set.iter().filter(|(u, v)| u < v && set.contains(&(*v, *u))).count()), g)
        }
        "t22" => {
            let mut per: BTreeMap<String, i64> = BTreeMap::new();
            for e in edges.iter().filter(|e| prefix(&e.src) != prefix(&e.dst)) {
                *per.entry(prefix(&e.src)).or_default() += int(&e.attrs, "bytes");
            }
            let rows: Vec<Value> = per.into_iter().map(|(p, b)| json!([p, b])).collect();
            exact(value("table", json!({"columns": ["prefix", "bytes"], "rows": rows})), g)
        }
        "t23" => {
            let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
            for e in edges {
                adj.entry(e.src.as_str()).or_default().push(e.dst.as_str());
                adj.entry(e.dst.as_str()).or_default().push(e.src.as_str());
            }
            let mut diameter = 0;
            for (n, _) in g.nodes() {
                let d = bfs(&adj, n);
                assert_eq!(d.len(), g.node_count(), "graph is not connected");
                diameter = diameter.max(*d.values().max().unwrap());
            }
            exact(scalar(diameter), g)
        }
        "t24" => {
            let mut bytes: Vec<i64> = edges.iter().map(|e| int(&e.attrs, "bytes")).collect();
            bytes.sort_unstable_by(|a, b| b.cmp(a));
            let top = edges.len() / 10;
            assert!(top == 0 || top == bytes.len() || bytes[top - 1] != bytes[top], "tie at the cut-off");
            let cut = if top == 0 { i64::MAX } else { bytes[top - 1] };
            exact(
                ResultValue::None,
                &rebuild(g, all_nodes, all_edges, no_node_fix, |e| {
                    if int(&e.attrs, "bytes") >= cut {
                        e.attrs.insert("tier".into(), AttrValue::Text("high".into()));
                    }
                }),
            )
        }
        other => panic!("no oracle for {other}"),
    }
}

fn contains<'a>(g: &'a PropertyGraph, from: &str, node_type: &str) -> Vec<&'a str> {
    g.edges()
        .iter()
        .filter(|e| e.src == from && text(&e.attrs, "kind") == "CONTAINS")
        .map(|e| e.dst.as_str())
        .filter(|n| g.node(n).map(|a| text(a, "type")) == Some(node_type))
        .collect()
}

fn chassis(g: &PropertyGraph) -> Vec<&str> {
    g.nodes().filter(|(_, a)| text(a, "type") == "CHASSIS").map(|(n, _)| n).collect()
}

fn switch_counts(g: &PropertyGraph) -> Vec<(String, usize)> {
    chassis(g).into_iter().map(|c| (c.to_string(), contains(g, c, "PACKET_SWITCH").len())).collect()
}

fn malt_oracle(id: &str, g: &PropertyGraph) -> Expect {
    let attrs = |pairs: &[(&str, AttrValue)]| -> Attrs { pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect() };
    let t = |s: &str| AttrValue::Text(s.into());
    match id {
        "m01" => exact(value("list", json!(contains(g, "ju1.a1.m1.s2c1", "PORT"))), g),
        "m02" => exact(scalar(contains(g, "ju1.a1.m1.c2", "PACKET_SWITCH").len()), g),
        "m03" => exact(scalar(chassis(g).iter().map(|c| int(g.node(c).unwrap(), "capacity")).sum::<i64>()), g),
        "m04" => {
            let mut cs: Vec<(&str, i64)> = chassis(g).into_iter().map(|c| (c, int(g.node(c).unwrap(), "capacity"))).collect();
            cs.sort_by_key(|(_, cap)| std::cmp::Reverse(*cap));
            assert_ne!(cs[1].1, cs[2].1, "tie at second place");
            assert_ne!(cs[0].1, cs[1].1, "tie at first place");
            exact(value("list", json!([cs[0].0, cs[1].0])), g)
        }
        "m05" | "m08" => {
            let mut rows: Vec<(String, i64)> = chassis(g)
                .into_iter()
                .map(|c| {
                    let ports = contains(g, c, "PACKET_SWITCH").into_iter().flat_map(|s| contains(g, s, "PORT"));
                    let speeds = ports.map(|p| int(g.node(p).unwrap(), "speed"));
                    let v = if id == "m05" { speeds.sum() } else { speeds.filter(|s| *s == 100).count() as i64 };
                    (c.to_string(), v)
                })
                .collect();
            let column = if id == "m05" { "total_speed" } else { "ports_100" };
            if id == "m08" {
                rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            }
            let rows: Vec<Value> = rows.into_iter().map(|(c, v)| json!([c, v])).collect();
            exact(value("table", json!({"columns": ["chassis", column], "rows": rows})), g)
        }
        "m06" => {
            let mut after = g.clone();
            let sw = "ju1.a1.m1.s4c1";
            let kind = |k: &str| attrs(&[("kind", t(k))]);
            after.add_node(sw, attrs(&[("type", t("PACKET_SWITCH"))])).unwrap();
            after.add_edge("ju1.a1.m1.c1", sw, kind("CONTAINS")).unwrap();
            after.add_edge("ju1.a1.m1.cp1", sw, kind("CONTROLS")).unwrap();
            for i in 1..=4 {
                let port = format!("{sw}.p{i}");
                after.add_node(port.clone(), attrs(&[("type", t("PORT")), ("speed", AttrValue::Int(100))])).unwrap();
                after.add_edge(sw, port, kind("CONTAINS")).unwrap();
            }
            exact(ResultValue::None, &after)
        }
        "m07" => {
            let sw = "ju1.a1.m1.s1c4";
            let gone: BTreeSet<String> = contains(g, sw, "PORT").into_iter().map(String::from).chain([sw.to_string()]).collect();
            let removed = rebuild(g, |n| !gone.contains(n), all_edges, no_node_fix, no_edge_fix);
            let total: i64 = chassis(&removed).iter().map(|c| int(removed.node(c).unwrap(), "capacity")).sum();
            let counts: HashMap<String, usize> = switch_counts(&removed).into_iter().collect();
            let all: usize = counts.values().sum();
            let after = rebuild(&removed, all_nodes, all_edges, |n, a| {
                if let Some(k) = counts.get(n) {
                    a.insert("capacity".into(), AttrValue::Int(total * *k as i64 / all as i64));
                }
            }, no_edge_fix);
            exact(ResultValue::None, &after)
        }
        "m09" => {
            let sw = "ju1.a1.m1.s3c2";
            let after = rebuild(g, all_nodes, all_edges, no_node_fix, |e| {
                if e.src == "ju1.a1.m1.c2" && e.dst == sw {
                    e.src = "ju1.a1.m1.c3".into();
                }
            });
            let rows: Vec<Value> = switch_counts(&after).into_iter().map(|(c, n)| json!([c, n])).collect();
            exact(value("table", json!({"columns": ["chassis", "switches"], "rows": rows})), &after)
        }
        other => panic!("no oracle for {other}"),
    }
}

fn agrees(expect: &Expect, env: &ResultEnvelope, case: &BenchmarkCase) -> Result<(), String> {
    let tol = Tolerance::default();
    match expect {
        Expect::Exact { value, graph } => {
            if !compare_values(&env.value, value, tol, case.ordered) {
                return Err(format!("value {} differs from {}", env.value.to_json(), value.to_json()));
            }
            let r = graph_equal(&env.graph_after, graph, tol);
            if !r.equal {
                return Err(format!("graph differs: {}", r.first_difference.unwrap_or_default()));
            }
            Ok(())
        }
        Expect::Accepts(check) => check(&env.graph_after),
    }
}

fn run(sandbox: &Sandbox, code: &str, g: &PropertyGraph, b: ExecBackendKind) -> Option<ResultEnvelope> {
    match sandbox.execute(code, g, b, &SandboxLimits::default()).expect("sandbox runs") {
        ExecOutcome::Success { envelope, .. } => Some(envelope),
        ExecOutcome::Failure(_) => None,
    }
}

fn check_suite(name: &str, oracle: fn(&str, &PropertyGraph) -> Expect) {
    let suite = suite(name);
    let sandbox = Sandbox::default();
    let mut problems = Vec::new();
    let mut mutants = 0;
    for case in &suite.cases {
        let g = case.load_fixture().unwrap();
        let expect = oracle(&case.id, &g);
        for &b in case.golden.keys() {
            let code = case.golden_program(b).unwrap().unwrap();
            match run(&sandbox, &code, &g, b) {
                Some(env) => {
                    if let Err(e) = agrees(&expect, &env, case) {
                        problems.push(format!("{} {b} golden: {e}", case.id));
                    }
                }
                None => problems.push(format!("{} {b} golden failed to run", case.id)),
            }
            for m in case.mutants(b).unwrap() {
                mutants += 1;
                let code = std::fs::read_to_string(&m).unwrap();
                if let Some(env) = run(&sandbox, &code, &g, b) {
                    if agrees(&expect, &env, case).is_ok() {
                        problems.push(format!("{} mutant {} is neutral", case.id, m.display()));
                    }
                }
            }
        }
        if case.mutants(ExecBackendKind::GraphApi).unwrap().is_empty() {
            problems.push(format!("{} ships no mutant", case.id));
        }
    }
    assert!(mutants >= suite.cases.len());
    assert!(problems.is_empty(), "{}", problems.join("\n"));
}

#[test]
fn traffic_goldens_match_oracles_and_mutants_do_not() {
    check_suite("traffic", traffic_oracle);
}

#[test]
fn malt_goldens_match_oracles_and_mutants_do_not() {
    check_suite("malt", malt_oracle);
}
