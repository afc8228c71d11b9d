//! Judging candidate outcomes against golden ones, failure taxonomy,
//! and the per-case sample/self-debug loop.

mod run;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{graph_equal, numbers_close, AttrValue, PropertyGraph, Tolerance};
use crate::sandbox::{Cell, ExecFailure, ExecOutcome, FailurePhase, ResultValue, Sandbox, SandboxError, SandboxLimits};
use crate::suite::{BenchmarkCase, SuiteError};

pub use run::{aggregate_pass_at_k, debug_feedback, AttemptError, EvalRecord, Evaluator, Generated, PassAtK, PreparedCase, RecordError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorClass {
    SyntaxError,
    ImaginaryGraphAttribute,
    ImaginaryFileOrFunction,
    ArgumentsError,
    OperationError,
    WrongCalculationLogic,
    GraphsNotIdentical,
    ContextOverflow,
    Timeout,
    SandboxViolation,
    EnvelopeMalformed,
    /// The model call itself failed (transport, missing fixture, ...).
    GatewayError,
}

impl ErrorClass {
    /// The seven classes of generated-code failure, in report order.
    pub const TAXONOMY: [ErrorClass; 7] = [
        ErrorClass::SyntaxError,
        ErrorClass::ImaginaryGraphAttribute,
        ErrorClass::ImaginaryFileOrFunction,
        ErrorClass::ArgumentsError,
        ErrorClass::OperationError,
        ErrorClass::WrongCalculationLogic,
        ErrorClass::GraphsNotIdentical,
    ];
    /// Harness-level classes, reported below the taxonomy rows.
    pub const HARNESS: [ErrorClass; 5] = [
        ErrorClass::ContextOverflow,
        ErrorClass::Timeout,
        ErrorClass::SandboxViolation,
        ErrorClass::EnvelopeMalformed,
        ErrorClass::GatewayError,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::SyntaxError => "Syntax error",
            ErrorClass::ImaginaryGraphAttribute => "Imaginary graph attributes",
            ErrorClass::ImaginaryFileOrFunction => "Imaginary files/function arguments",
            ErrorClass::ArgumentsError => "Arguments error",
            ErrorClass::OperationError => "Operation error",
            ErrorClass::WrongCalculationLogic => "Wrong calculation logic",
            ErrorClass::GraphsNotIdentical => "Graphs are not identical",
            ErrorClass::ContextOverflow => "Context overflow",
            ErrorClass::Timeout => "Timeout",
            ErrorClass::SandboxViolation => "Sandbox violation",
            ErrorClass::EnvelopeMalformed => "Malformed envelope",
            ErrorClass::GatewayError => "Gateway error",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<ErrorClass>,
    #[serde(default)]
    pub detail: String,
}

impl Verdict {
    pub fn pass() -> Self {
        Self { passed: true, error_class: None, detail: String::new() }
    }

    pub fn fail(class: ErrorClass, detail: impl Into<String>) -> Self {
        Self { passed: false, error_class: Some(class), detail: detail.into() }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("suite defect in case `{case}`: {message}")]
    SuiteDefect { case: String, message: String },
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

fn cells_equal(a: &Cell, b: &Cell, tol: Tolerance) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => values_equal(x, y, tol),
        _ => false,
    }
}

/// Envelope value equality: numbers compare as reals and booleans as 0/1,
/// since relational engines report truth values as integers.
fn values_equal(a: &AttrValue, b: &AttrValue, tol: Tolerance) -> bool {
    let num = |v: &AttrValue| match v {
        AttrValue::Bool(b) => Some(f64::from(u8::from(*b))),
        other => other.as_f64(),
    };
    match (a, b) {
        (AttrValue::Text(x), AttrValue::Text(y)) => x == y,
        (AttrValue::List(x), AttrValue::List(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_equal(p, q, tol)),
        (AttrValue::List(_), _) | (_, AttrValue::List(_)) => false,
        _ => match (num(a), num(b)) {
            (Some(x), Some(y)) => numbers_close(x, y, tol),
            _ => false,
        },
    }
}

/// Rows plus optional column names; scalars and lists become one column.
struct Shape {
    columns: Option<Vec<String>>,
    width: usize,
    rows: Vec<Vec<Cell>>,
}

fn shape(v: &ResultValue) -> Option<Shape> {
    match v {
        ResultValue::None => None,
        ResultValue::Scalar(x) => Some(Shape { columns: None, width: 1, rows: vec![vec![Some(x.clone())]] }),
        ResultValue::List(items) => {
            // a list of equal-length tuples lines up with a multi-column table
            let tuple_width = items.first().and_then(|c| match c {
                Some(AttrValue::List(l)) if l.len() > 1 => Some(l.len()),
                _ => None,
            });
            if let Some(w) = tuple_width {
                if items.iter().all(|c| matches!(c, Some(AttrValue::List(l)) if l.len() == w)) {
                    let rows = items
                        .iter()
                        .map(|c| match c {
                            Some(AttrValue::List(l)) => l.iter().cloned().map(Some).collect(),
                            _ => unreachable!(),
                        })
                        .collect();
                    return Some(Shape { columns: None, width: w, rows });
                }
            }
            Some(Shape { columns: None, width: 1, rows: items.iter().map(|c| vec![c.clone()]).collect() })
        }
        ResultValue::Table(t) => Some(Shape { columns: Some(t.columns.clone()), width: t.columns.len(), rows: t.rows.clone() }),
    }
}

fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    fn rank(c: &Cell) -> (u8, f64, String) {
        match c {
            None => (0, 0.0, String::new()),
            Some(AttrValue::Bool(b)) => (1, f64::from(u8::from(*b)), String::new()),
            Some(AttrValue::Int(_)) | Some(AttrValue::Float(_)) => (1, c.as_ref().and_then(AttrValue::as_f64).unwrap_or(0.0), String::new()),
            Some(AttrValue::Text(s)) => (2, 0.0, s.clone()),
            Some(AttrValue::List(l)) => (3, l.len() as f64, format!("{l:?}")),
        }
    }
    let (ra, rb) = (rank(a), rank(b));
    ra.0.cmp(&rb.0).then(ra.1.total_cmp(&rb.1)).then(ra.2.cmp(&rb.2))
}

fn rows_equal(a: &[Cell], b: &[Cell], tol: Tolerance) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cells_equal(x, y, tol))
}

fn multiset_equal(a: &[Vec<Cell>], b: &[Vec<Cell>], tol: Tolerance) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sort = |rows: &[Vec<Cell>]| {
        let mut v = rows.to_vec();
        v.sort_by(|x, y| x.iter().zip(y).map(|(p, q)| cell_order(p, q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal));
        v
    };
    let (a, b) = (sort(a), sort(b));
    if a.iter().zip(&b).all(|(x, y)| rows_equal(x, y, tol)) {
        return true;
    }
    // sorting can split near-equal floats; fall back to greedy matching
    let mut used = vec![false; b.len()];
    a.iter().all(|row| {
        let hit = (0..b.len()).find(|&j| !used[j] && rows_equal(row, &b[j], tol));
        hit.map(|j| used[j] = true).is_some()
    })
}

/// Kind-compatible equality of envelope values. A scalar equals a
/// one-element list, a list equals a one-column table, and table columns
/// are matched by name when both sides name them.
pub fn compare_values(candidate: &ResultValue, golden: &ResultValue, tol: Tolerance, ordered: bool) -> bool {
    let (c, g) = match (shape(candidate), shape(golden)) {
        (None, None) => return true,
        (Some(c), Some(g)) => (c, g),
        _ => return false,
    };
    if c.width != g.width {
        return false;
    }
    let c_rows = match (&c.columns, &g.columns) {
        (Some(cc), Some(gc)) => {
            let (cs, gs): (BTreeSet<&String>, BTreeSet<&String>) = (cc.iter().collect(), gc.iter().collect());
            if cs != gs || cs.len() != cc.len() {
                return false;
            }
            let index: Vec<usize> = gc.iter().map(|name| cc.iter().position(|x| x == name).expect("same set")).collect();
            c.rows.iter().map(|r| index.iter().map(|&i| r[i].clone()).collect()).collect()
        }
        _ => c.rows,
    };
    if ordered {
        c_rows.len() == g.rows.len() && c_rows.iter().zip(&g.rows).all(|(x, y)| rows_equal(x, y, tol))
    } else {
        multiset_equal(&c_rows, &g.rows, tol)
    }
}

/// Attribute and column names a program may legitimately reference.
pub fn schema_keys(g: &PropertyGraph) -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = g.node_attr_keys().into_iter().chain(g.edge_attr_keys()).collect();
    keys.extend(["id", "src", "dst"].map(String::from));
    keys
}

/// Object types whose missing attributes are data lookups rather than API calls.
const DATA_CONTAINERS: [&str; 6] = ["DataFrame", "Series", "dict", "Row", "NodeDataView", "EdgeDataView"];

fn quoted(message: &str, re: &Regex) -> Option<String> {
    re.captures(message).and_then(|c| c.get(1)).map(|m| m.as_str().to_string())
}

/// Maps an execution failure to exactly one class. Rules are tried in order:
/// syntax, harness phases, then runtime diagnostics (missing key or column,
/// unresolved name/file/function, argument errors, anything else).
pub fn classify_error(failure: &ExecFailure, schema: &BTreeSet<String>) -> ErrorClass {
    match failure.phase {
        FailurePhase::Syntax => return ErrorClass::SyntaxError,
        FailurePhase::Timeout | FailurePhase::Memory => return ErrorClass::Timeout,
        FailurePhase::SandboxViolation => return ErrorClass::SandboxViolation,
        FailurePhase::EnvelopeMalformed | FailurePhase::Extraction => return ErrorClass::EnvelopeMalformed,
        FailurePhase::Runtime => {}
    }
    let msg = failure.message.as_str();
    let ty = failure.error_type.as_str();
    let attr_re = Regex::new(r"'([^']+)' object has no attribute '([^']+)'").expect("valid regex");
    let column_re = Regex::new(r"no such column: ([\w.]+)").expect("valid regex");

    if ty == "KeyError" {
        return ErrorClass::ImaginaryGraphAttribute;
    }
    if let Some(col) = quoted(msg, &column_re) {
        let name = col.rsplit('.').next().unwrap_or(&col).to_string();
        return if schema.contains(&name) { ErrorClass::OperationError } else { ErrorClass::ImaginaryGraphAttribute };
    }
    if ty == "NameError"
        || ty == "FileNotFoundError"
        || ty == "ImportError"
        || ty == "ModuleNotFoundError"
        || msg.contains("module '")
        || msg.contains("no such table")
        || msg.contains("no such function")
    {
        return ErrorClass::ImaginaryFileOrFunction;
    }
    if let Some(caps) = attr_re.captures(msg) {
        let (owner, name) = (&caps[1], &caps[2]);
        if DATA_CONTAINERS.contains(&owner) {
            return if schema.contains(name) { ErrorClass::OperationError } else { ErrorClass::ImaginaryGraphAttribute };
        }
        return ErrorClass::ImaginaryFileOrFunction;
    }
    if ty == "TypeError" || msg.contains("wrong number of arguments") {
        return ErrorClass::ArgumentsError;
    }
    ErrorClass::OperationError
}

/// Runs a validator program on the candidate's graph. The validator sees
/// `G` (graph after the candidate ran), `G_before` and `candidate` (the
/// value as plain Python data) and sets `result` to `True`, `"value"` or
/// `"graph"`.
pub fn run_validator(
    validator: &str,
    candidate_value: &ResultValue,
    candidate_graph: &PropertyGraph,
    input: &PropertyGraph,
    sandbox: &Sandbox,
    limits: &SandboxLimits,
) -> Result<Result<(), (ErrorClass, String)>, SandboxError> {
    let before = crate::graph::serialize_graph(input, true);
    let value = candidate_python_value(candidate_value);
    let preamble = format!(
        "import json as _vjson\n\
         _vb = _vjson.loads({before})\n\
         G_before = (nx.DiGraph if _vb['directed'] else nx.Graph)()\n\
         G_before.add_nodes_from(_vb['nodes'].items())\n\
         G_before.add_edges_from((e['src'], e['dst'], e['attrs']) for e in _vb['edges'])\n\
         candidate = _vjson.loads({value})\n\
         del _vb, _vjson\n",
        before = serde_json::to_string(&before).expect("string"),
        value = serde_json::to_string(&value.to_string()).expect("string"),
    );
    let code = format!("{preamble}{validator}");
    let outcome = sandbox.execute(&code, candidate_graph, crate::sandbox::ExecBackendKind::GraphApi, limits)?;
    Ok(match outcome {
        ExecOutcome::Success { envelope, .. } => match envelope.value {
            ResultValue::Scalar(AttrValue::Bool(true)) => Ok(()),
            ResultValue::Scalar(AttrValue::Text(t)) if t == "graph" => {
                Err((ErrorClass::GraphsNotIdentical, "validator rejected the updated graph".into()))
            }
            _ => Err((ErrorClass::WrongCalculationLogic, "validator rejected the result".into())),
        },
        ExecOutcome::Failure(f) => Err((ErrorClass::WrongCalculationLogic, format!("validator failed on the candidate: {}", f.message))),
    })
}

fn candidate_python_value(v: &ResultValue) -> serde_json::Value {
    let cell = |c: &Cell| c.as_ref().map_or(serde_json::Value::Null, AttrValue::to_json);
    match v {
        ResultValue::None => serde_json::Value::Null,
        ResultValue::Scalar(x) => x.to_json(),
        ResultValue::List(items) => items.iter().map(cell).collect(),
        ResultValue::Table(t) => t
            .rows
            .iter()
            .map(|r| serde_json::Value::Object(t.columns.iter().cloned().zip(r.iter().map(cell)).collect()))
            .collect(),
    }
}

/// Judges a candidate against the golden outcome for `case`.
///
/// A failed golden is a suite defect. With a validator, the validator
/// decides; otherwise the value half is compared first, then the graph.
pub fn evaluate_outcome(
    candidate: &ExecOutcome,
    golden: &ExecOutcome,
    case: &BenchmarkCase,
    input: &PropertyGraph,
    tol: Tolerance,
    sandbox: &Sandbox,
    limits: &SandboxLimits,
) -> Result<Verdict, EvalError> {
    let golden_env = match golden {
        ExecOutcome::Success { envelope, .. } => envelope,
        ExecOutcome::Failure(f) => {
            return Err(EvalError::SuiteDefect { case: case.id.clone(), message: format!("golden program failed: {}", f.message) })
        }
    };
    let cand = match candidate {
        ExecOutcome::Failure(f) => return Ok(Verdict::fail(classify_error(f, &schema_keys(input)), f.message.clone())),
        ExecOutcome::Success { envelope, .. } => envelope,
    };
    if let Some(validator) = case.validator_program()? {
        return Ok(match run_validator(&validator, &cand.value, &cand.graph_after, input, sandbox, limits)? {
            Ok(()) => Verdict::pass(),
            Err((class, detail)) => Verdict::fail(class, detail),
        });
    }
    if !compare_values(&cand.value, &golden_env.value, tol, case.ordered) {
        return Ok(Verdict::fail(ErrorClass::WrongCalculationLogic, "result value differs from the golden answer"));
    }
    let report = graph_equal(&cand.graph_after, &golden_env.graph_after, tol);
    if !report.equal {
        let diff = report.first_difference.map(|d| d.to_string()).unwrap_or_default();
        return Ok(Verdict::fail(ErrorClass::GraphsNotIdentical, format!("updated graph differs: {diff}")));
    }
    Ok(Verdict::pass())
}
