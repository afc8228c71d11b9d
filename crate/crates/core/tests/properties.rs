use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use proptest::prelude::*;

use nlnetops_core::bench::{render_reports, CaseRef, ReportFormat, RunLog, RunMatrix, RunMeta};
use nlnetops_core::eval::{aggregate_pass_at_k, ErrorClass, EvalRecord, Verdict};
use nlnetops_core::graph::{
    generate_malt, generate_traffic_graph, graph_equal, load_graph, project_views, rebuild_from_views, serialize_graph,
    AttrValue, Attrs, MaltSchema, PropertyGraph, Tolerance,
};
use nlnetops_core::llm::{compute_cost, fixture_key, CompletionBackend, Cost, FixtureRecord, LlmError, ModelConfig, Pricing, ReplayBackend, Usage};
use nlnetops_core::promptgen::{build_task_context, estimate_tokens, Application, PromptGenerator};
use nlnetops_core::sandbox::{ExecBackendKind, SandboxLimits};
use nlnetops_core::suite::Difficulty;

fn scalar() -> impl Strategy<Value = AttrValue> {
    prop_oneof![
        any::<i64>().prop_map(AttrValue::Int),
        (-1e12f64..1e12).prop_map(AttrValue::Float),
        "[a-z .]{0,8}".prop_map(AttrValue::Text),
        any::<bool>().prop_map(AttrValue::Bool),
    ]
}

fn value() -> impl Strategy<Value = AttrValue> {
    prop_oneof![4 => scalar(), 1 => prop::collection::vec(scalar(), 0..3).prop_map(AttrValue::List)]
}

fn attrs() -> impl Strategy<Value = Attrs> {
    prop::collection::btree_map("[a-z]{1,4}".prop_filter("reserved column", |k| !["id", "src", "dst"].contains(&k.as_str())), value(), 0..3)
}

fn graph() -> impl Strategy<Value = PropertyGraph> {
    (any::<bool>(), prop::collection::btree_set("[a-z0-9.]{1,6}", 1..8))
        .prop_flat_map(|(directed, ids)| {
            let ids: Vec<String> = ids.into_iter().collect();
            let n = ids.len();
            let nodes = prop::collection::vec(attrs(), n);
            let edges = prop::collection::vec((0..n, 0..n, attrs()), 0..12);
            (Just(directed), Just(ids), nodes, edges)
        })
        .prop_map(|(directed, ids, nodes, edges)| {
            let mut g = PropertyGraph::new(directed);
            for (id, a) in ids.iter().zip(nodes) {
                g.add_node(id.clone(), a).unwrap();
            }
            for (u, v, a) in edges {
                g.add_edge(ids[u].clone(), ids[v].clone(), a).unwrap();
            }
            g
        })
}

/// Same graph with nodes and edges inserted in a rotated, reversed order.
fn permuted(g: &PropertyGraph, shift: usize) -> PropertyGraph {
    let mut nodes: Vec<(&str, &Attrs)> = g.nodes().collect();
    let mut edges = g.edges().to_vec();
    nodes.reverse();
    edges.reverse();
    if !nodes.is_empty() {
        let k = shift % nodes.len();
        nodes.rotate_left(k);
    }
    if !edges.is_empty() {
        let k = shift % edges.len();
        edges.rotate_left(k);
    }
    let mut out = PropertyGraph::new(g.is_directed());
    for (id, a) in nodes {
        out.add_node(id, a.clone()).unwrap();
    }
    for e in edges {
        out.add_edge(e.src, e.dst, e.attrs).unwrap();
    }
    out
}

fn exact(a: &PropertyGraph, b: &PropertyGraph) -> bool {
    graph_equal(a, b, Tolerance::exact()).equal
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialization_round_trips(g in graph(), canonical in any::<bool>()) {
        let back = load_graph(&serialize_graph(&g, canonical), None).unwrap();
        prop_assert!(exact(&g, &back), "{:?}", graph_equal(&g, &back, Tolerance::exact()).first_difference);
        prop_assert_eq!(serialize_graph(&g, true), serialize_graph(&back, true));
    }

    #[test]
    fn equality_ignores_order(g in graph(), shift in 0usize..16) {
        let p = permuted(&g, shift);
        prop_assert!(exact(&g, &p));
        prop_assert_eq!(serialize_graph(&g, true), serialize_graph(&p, true));
    }

    #[test]
    fn equality_is_reflexive_and_symmetric(a in graph(), b in graph()) {
        prop_assert!(exact(&a, &a));
        prop_assert_eq!(exact(&a, &b), exact(&b, &a));
        let tol = Tolerance::default();
        prop_assert_eq!(graph_equal(&a, &b, tol).equal, graph_equal(&b, &a, tol).equal);
        if serialize_graph(&a, true) == serialize_graph(&b, true) {
            prop_assert!(exact(&a, &b));
        }
    }

    #[test]
    fn an_edited_attribute_is_noticed(g in graph(), bump in 1i64..1000) {
        prop_assume!(!g.edges().is_empty());
        let mut edited = PropertyGraph::new(g.is_directed());
        for (id, a) in g.nodes() {
            edited.add_node(id, a.clone()).unwrap();
        }
        for (i, e) in g.edges().iter().enumerate() {
            let mut a = e.attrs.clone();
            if i == 0 {
                let old = match a.get("zz") { Some(AttrValue::Int(v)) => *v, _ => 0 };
                a.insert("zz".into(), AttrValue::Int(old.wrapping_add(bump)));
            }
            edited.add_edge(e.src.clone(), e.dst.clone(), a).unwrap();
        }
        let report = graph_equal(&g, &edited, Tolerance::default());
        prop_assert!(!report.equal);
        prop_assert!(report.first_difference.unwrap().contains("zz"));
        prop_assert_ne!(serialize_graph(&g, true), serialize_graph(&edited, true));
    }

    #[test]
    fn views_rebuild_the_graph(g in graph()) {
        let (nodes, edges) = project_views(&g).unwrap();
        let back = rebuild_from_views(g.is_directed(), &nodes, &edges).unwrap();
        prop_assert!(exact(&g, &back), "{:?}", graph_equal(&g, &back, Tolerance::exact()).first_difference);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traffic_generator_respects_parameters(n in 1usize..60, density in 0.0f64..1.0, seed in any::<u64>()) {
        let m = ((n * (n - 1)) as f64 * density) as usize;
        let g = generate_traffic_graph(n, m, seed).unwrap();
        prop_assert_eq!(g.node_count(), n);
        prop_assert_eq!(g.edges().len(), m);
        for e in g.edges() {
            prop_assert_ne!(&e.src, &e.dst);
            for (key, max) in [("bytes", 1_000_000), ("connections", 1_000), ("packets", 10_000)] {
                match e.attrs.get(key) {
                    Some(AttrValue::Int(v)) => prop_assert!((1..=max).contains(v), "{key}={v}"),
                    other => prop_assert!(false, "{key} is {other:?}"),
                }
            }
        }
        let again = generate_traffic_graph(n, m, seed).unwrap();
        prop_assert_eq!(serialize_graph(&g, true), serialize_graph(&again, true));
    }

    #[test]
    fn malt_generator_output_is_valid(chassis in 1usize..5, switches in 1usize..4, ports in 1usize..5, seed in any::<u64>()) {
        let g = generate_malt(chassis, switches, ports, seed).unwrap();
        prop_assert!(MaltSchema::default().validate(&g).is_ok());
        let again = generate_malt(chassis, switches, ports, seed).unwrap();
        prop_assert_eq!(serialize_graph(&g, true), serialize_graph(&again, true));
    }

    #[test]
    fn codegen_prompts_never_carry_graph_data(
        n in 2usize..30,
        seed in any::<u64>(),
        backend in prop::sample::select(vec![ExecBackendKind::Relational, ExecBackendKind::Tabular, ExecBackendKind::GraphApi]),
    ) {
        // Sentinel node ids and attribute values that cannot occur in a template.
        let base = generate_traffic_graph(n, n, seed).unwrap();
        let id = |s: &str| format!("qz{}x", s.replace('.', "q"));
        let mut g = PropertyGraph::new(true);
        for (i, (node, _)) in base.nodes().enumerate() {
            let mut a = Attrs::new();
            a.insert("label".into(), AttrValue::Text(format!("sentinelv{i}k")));
            g.add_node(id(node), a).unwrap();
        }
        for e in base.edges() {
            g.add_edge(id(&e.src), id(&e.dst), e.attrs.clone()).unwrap();
        }
        let ctx = build_task_context(Application::Traffic, &g);
        let bundle = PromptGenerator::default().build_codegen_prompt(&ctx, "Which node sends the most bytes?", backend).unwrap();
        let text = bundle.canonical_rendering();
        prop_assert!(!text.contains("qz"));
        prop_assert!(!text.contains("sentinelv"));
        for e in base.edges() {
            for key in ["bytes", "connections", "packets"] {
                if let Some(AttrValue::Int(v)) = e.attrs.get(key) {
                    // Six-digit weights are specific enough to be a leak if they show up.
                    if *v >= 100_000 {
                        prop_assert!(!text.contains(&v.to_string()), "{v} leaked");
                    }
                }
            }
        }
    }

    #[test]
    fn codegen_prompt_size_is_scale_free(
        n in 10usize..5000,
        seed in any::<u64>(),
        backend in prop::sample::select(vec![ExecBackendKind::Relational, ExecBackendKind::Tabular, ExecBackendKind::GraphApi]),
    ) {
        let gen = PromptGenerator::default();
        let small = generate_traffic_graph(10, 10, 1).unwrap();
        let big = generate_traffic_graph(n, n, seed).unwrap();
        let query = "Count the nodes.";
        let a = gen.build_codegen_prompt(&build_task_context(Application::Traffic, &small), query, backend).unwrap();
        let b = gen.build_codegen_prompt(&build_task_context(Application::Traffic, &big), query, backend).unwrap();
        prop_assert_eq!(a.estimated_tokens, b.estimated_tokens);
    }

    #[test]
    fn strawman_prompt_grows_with_the_graph(n in 2usize..300, extra in 1usize..300, seed in any::<u64>()) {
        let gen = PromptGenerator::default();
        let small = generate_traffic_graph(n, n, seed).unwrap();
        let large = generate_traffic_graph(n + extra, n + extra, seed).unwrap();
        let est = |g: &PropertyGraph| gen.build_strawman_prompt(Application::Traffic, g, "Count the nodes.", usize::MAX).unwrap().estimated_tokens;
        for g in [&small, &large] {
            prop_assert!(est(g) >= estimate_tokens(&serialize_graph(g, true)));
        }
        prop_assert!(est(&large) > est(&small));
    }
}

proptest! {
    #[test]
    fn cost_is_linear_in_tokens(a_in in 0u64..1_000_000, a_out in 0u64..1_000_000, b_in in 0u64..1_000_000, b_out in 0u64..1_000_000,
                                rate_in in 0.0f64..0.1, rate_out in 0.0f64..0.1, scale in 0u64..100) {
        let p = Pricing { input_per_1k: rate_in, output_per_1k: rate_out };
        let cost = |i, o| compute_cost(Usage { tokens_in: i, tokens_out: o }, p).nanos();
        prop_assert_eq!(cost(a_in + b_in, a_out + b_out), cost(a_in, a_out) + cost(b_in, b_out));
        prop_assert_eq!(cost(a_in * scale, a_out * scale), cost(a_in, a_out) * scale as u128);
        prop_assert_eq!(cost(0, 0), Cost::default().nanos());
    }

    #[test]
    fn replay_is_deterministic_and_never_invents(query in "[A-Za-z ]{1,40}", reply in "[ -~]{0,60}", attempts in 1usize..4) {
        prop_assume!(!query.trim().is_empty());
        let ctx = build_task_context(Application::Traffic, &generate_traffic_graph(5, 5, 1).unwrap());
        let bundle = PromptGenerator::default().build_codegen_prompt(&ctx, &query, ExecBackendKind::GraphApi).unwrap();
        let cfg = ModelConfig {
            name: "m".into(), endpoint: String::new(), api_model: None, temperature: 0.0, max_output_tokens: 16,
            context_limit: 8192, pricing: Pricing { input_per_1k: 0.03, output_per_1k: 0.06 }, credential_env: None,
        };
        let key = fixture_key(&cfg.name, &bundle);
        let records = (0..attempts).map(|i| FixtureRecord { key: key.clone(), attempt: i, text: format!("{reply}{i}"), tokens_in: 100, tokens_out: i as u64 });
        let replay = ReplayBackend::from_records(records);
        for i in 0..attempts {
            let one = replay.complete_one(&bundle, &cfg, i).unwrap();
            let two = replay.complete_one(&bundle, &cfg, i).unwrap();
            prop_assert_eq!(&one.text, &two.text);
            prop_assert_eq!(one.usage, two.usage);
            prop_assert_eq!(compute_cost(one.usage, cfg.pricing), compute_cost(two.usage, cfg.pricing));
        }
        let miss = replay.complete_one(&bundle, &cfg, attempts);
        prop_assert!(matches!(miss, Err(LlmError::FixtureMiss { .. })), "{miss:?}");
        let other = ModelConfig { name: "other".into(), ..cfg.clone() };
        let miss = replay.complete_one(&bundle, &other, 0);
        prop_assert!(matches!(miss, Err(LlmError::FixtureMiss { .. })), "{miss:?}");
    }
}

const BACKENDS: [ExecBackendKind; 2] = [ExecBackendKind::Tabular, ExecBackendKind::GraphApi];
const CLASSES: [ErrorClass; 4] = [ErrorClass::SyntaxError, ErrorClass::ArgumentsError, ErrorClass::GraphsNotIdentical, ErrorClass::Timeout];

/// (case, backend, attempt index, debug round, passed, failure class)
type Sketch = (usize, usize, usize, usize, bool, usize);

fn record(case: usize, backend: ExecBackendKind, attempt_index: usize, debug_round: usize, passed: bool, class: ErrorClass) -> EvalRecord {
    EvalRecord {
        case_id: format!("c{case}"),
        application: Application::Traffic,
        difficulty: Difficulty::ALL[case % 3],
        backend,
        model: "m".into(),
        attempt_index,
        debug_round,
        prompt_tokens: 0,
        code: String::new(),
        outcome: None,
        error: None,
        verdict: if passed { Verdict::pass() } else { Verdict::fail(class, "") },
        usage: Usage::default(),
        cost: Cost::default(),
        latency_ms: 0,
        timestamp: String::new(),
    }
}

fn log_from(cases: usize, sketch: &[Sketch]) -> RunLog {
    let records = sketch.iter().map(|&(c, b, a, r, p, k)| record(c % cases, BACKENDS[b], a, r, p, CLASSES[k])).collect();
    RunLog {
        meta: RunMeta {
            config_digest: String::new(),
            mode: "replay".into(),
            estimator: String::new(),
            started: String::new(),
            finished: None,
            matrix: RunMatrix {
                suites: vec![PathBuf::from("suite.json")],
                backends: BACKENDS.to_vec(),
                models: vec!["m".into()],
                k: 1,
                debug_budget: 0,
                limits: SandboxLimits::default(),
                concurrency: 1,
            },
            cases: BTreeMap::from([(
                Application::Traffic,
                (0..cases).map(|c| CaseRef { id: format!("c{c}"), difficulty: Difficulty::ALL[c % 3] }).collect(),
            )]),
        },
        records,
    }
}

fn sketches() -> impl Strategy<Value = Vec<Sketch>> {
    prop::collection::vec((0usize..8, 0usize..2, 0usize..3, 0usize..3, any::<bool>(), 0usize..4), 0..60)
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

proptest! {
    #[test]
    fn pass_at_k_only_grows(sketch in sketches()) {
        let records: Vec<EvalRecord> = sketch.iter().map(|&(_, _, a, r, p, k)| record(0, BACKENDS[0], a, r, p, CLASSES[k])).collect();
        let mut prev = aggregate_pass_at_k(&[]);
        prop_assert!(!prev.pass_at_k);
        for n in 1..=records.len() {
            let now = aggregate_pass_at_k(&records[..n]);
            prop_assert!(now.passed_samples >= prev.passed_samples);
            prop_assert!(now.pass_at_k || !prev.pass_at_k);
            prop_assert!(now.passed_samples <= now.samples);
            prev = now;
        }
    }

    #[test]
    fn failed_verdicts_carry_one_class(passed in any::<bool>(), k in 0usize..4) {
        let v = if passed { Verdict::pass() } else { Verdict::fail(CLASSES[k], "x") };
        prop_assert_eq!(v.passed, v.error_class.is_none());
    }

    #[test]
    fn reports_account_for_every_record(cases in 1usize..8, sketch in sketches()) {
        let log = log_from(cases, &sketch);
        let first = render_reports(&log, ReportFormat::Csv);
        prop_assert_eq!(&first, &render_reports(&log, ReportFormat::Csv));
        prop_assert_eq!(render_reports(&log, ReportFormat::Table), render_reports(&log, ReportFormat::Table));
        let get = |name: &str| first.iter().find(|r| r.name == name).unwrap().text.clone();

        // Taxonomy: class rows add up to the total, which is the round-0 failures.
        let mut class_sums: BTreeMap<String, usize> = BTreeMap::new();
        let mut totals: BTreeMap<String, usize> = BTreeMap::new();
        for row in csv_rows(&get("taxonomy.csv")) {
            let n: usize = row[3].parse().unwrap();
            if row[1] == "Total" {
                totals.insert(row[0].clone(), n);
            } else {
                *class_sums.entry(row[0].clone()).or_default() += n;
            }
        }
        for b in BACKENDS {
            let failed = log.records.iter().filter(|r| r.backend == b && r.debug_round == 0 && !r.verdict.passed).count();
            let present = log.records.iter().any(|r| r.backend == b);
            prop_assert_eq!(totals.get(b.label()).copied(), present.then_some(failed));
            prop_assert_eq!(class_sums.get(b.label()).copied(), present.then_some(failed));
        }

        // Accuracy: a case counts once, passed if any of its records passed.
        for row in csv_rows(&get("accuracy.csv")) {
            let b = BACKENDS.iter().find(|b| b.label() == row[2]).unwrap();
            let passed: BTreeSet<&str> = log.records.iter().filter(|r| r.backend == *b && r.verdict.passed).map(|r| r.case_id.as_str()).collect();
            prop_assert_eq!(row[3].parse::<usize>().unwrap(), passed.len());
            prop_assert_eq!(row[4].parse::<usize>().unwrap(), cases);
            let expected = format!("{:.2}", passed.len() as f64 / cases as f64);
            prop_assert_eq!(&row[5], &expected);
        }
    }
}
