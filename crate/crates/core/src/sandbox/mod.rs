//! Isolated execution of generated programs against a graph.
//!
//! Every code backend runs a Python child process assembled from an adapter
//! (prologue + program + epilogue). The epilogue hands the result back as
//! length-prefixed frames on file descriptor 3, which the harness redirects
//! into a private file before the child starts.

mod process;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AttrValue, PropertyGraph, Table};

pub use process::{ExecutorAdapter, Sandbox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecBackendKind {
    GraphApi,
    Tabular,
    Relational,
    DirectAnswer,
}

impl ExecBackendKind {
    pub const ALL: [ExecBackendKind; 4] = [
        ExecBackendKind::DirectAnswer,
        ExecBackendKind::Relational,
        ExecBackendKind::Tabular,
        ExecBackendKind::GraphApi,
    ];
    pub const CODE_BACKENDS: [ExecBackendKind; 3] =
        [ExecBackendKind::GraphApi, ExecBackendKind::Tabular, ExecBackendKind::Relational];

    pub fn as_str(self) -> &'static str {
        match self {
            ExecBackendKind::GraphApi => "graph_api",
            ExecBackendKind::Tabular => "tabular",
            ExecBackendKind::Relational => "relational",
            ExecBackendKind::DirectAnswer => "direct_answer",
        }
    }

    /// Column heading used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ExecBackendKind::GraphApi => "GraphApi",
            ExecBackendKind::Tabular => "Tabular",
            ExecBackendKind::Relational => "Relational",
            ExecBackendKind::DirectAnswer => "Strawman",
        }
    }

    /// Extension of golden program files for this backend.
    pub fn program_extension(self) -> &'static str {
        match self {
            ExecBackendKind::Relational => "sql",
            ExecBackendKind::DirectAnswer => "json",
            _ => "py",
        }
    }
}

impl fmt::Display for ExecBackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ExecBackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s || b.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown backend `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandboxLimits {
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub memory_bytes: u64,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(30), memory_bytes: 1 << 30 }
    }
}

impl SandboxLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.timeout.is_zero() || self.memory_bytes == 0 {
            return Err(SandboxError::Config("sandbox limits must be strictly positive".into()));
        }
        Ok(())
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

/// Table cell or list element; `None` is a null.
pub type Cell = Option<AttrValue>;

/// The value half of a result envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultValue {
    Scalar(AttrValue),
    List(Vec<Cell>),
    Table(Table),
    None,
}

impl ResultValue {
    pub fn kind(&self) -> &'static str {
        match self {
            ResultValue::Scalar(_) => "scalar",
            ResultValue::List(_) => "list",
            ResultValue::Table(_) => "table",
            ResultValue::None => "none",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cell = |c: &Cell| c.as_ref().map_or(serde_json::Value::Null, AttrValue::to_json);
        let value = match self {
            ResultValue::Scalar(v) => v.to_json(),
            ResultValue::List(items) => serde_json::Value::Array(items.iter().map(cell).collect()),
            ResultValue::Table(t) => t.to_json(),
            ResultValue::None => serde_json::Value::Null,
        };
        serde_json::json!({ "kind": self.kind(), "value": value })
    }

    /// Parses `{"kind": ..., "value": ...}`. Tables may be given either as
    /// `{"columns", "rows"}` or as a list of row objects sharing one key set.
    pub fn from_json(doc: &serde_json::Value) -> Result<Self, String> {
        use serde_json::Value;
        let obj = doc.as_object().ok_or("envelope must be an object")?;
        let kind = obj.get("kind").and_then(Value::as_str).ok_or("envelope needs a text `kind`")?;
        let value = obj.get("value").unwrap_or(&Value::Null);
        let cell = |v: &Value| if v.is_null() { Ok(None) } else { AttrValue::from_json(v).map(Some) };
        match kind {
            "scalar" => match value {
                Value::Array(_) | Value::Object(_) | Value::Null => Err("scalar envelope needs a scalar value".into()),
                v => AttrValue::from_json(v).map(ResultValue::Scalar),
            },
            "list" => value
                .as_array()
                .ok_or("list envelope needs an array value")?
                .iter()
                .map(cell)
                .collect::<Result<Vec<_>, _>>()
                .map(ResultValue::List),
            "table" => match value {
                Value::Object(_) => Table::from_json(value).map(ResultValue::Table),
                Value::Array(rows) => table_from_objects(rows).map(ResultValue::Table),
                _ => Err("table envelope needs rows".into()),
            },
            "none" => Ok(ResultValue::None),
            other => Err(format!("unknown envelope kind `{other}`")),
        }
    }
}

fn table_from_objects(rows: &[serde_json::Value]) -> Result<Table, String> {
    let Some(first) = rows.first() else {
        return Ok(Table::default());
    };
    let columns: Vec<String> = first.as_object().ok_or("table rows must be objects")?.keys().cloned().collect();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let obj = row.as_object().ok_or(format!("table row {i} is not an object"))?;
        if obj.len() != columns.len() || !columns.iter().all(|c| obj.contains_key(c)) {
            return Err(format!("table row {i} has a different column set"));
        }
        out.push(
            columns
                .iter()
                .map(|c| if obj[c].is_null() { Ok(None) } else { AttrValue::from_json(&obj[c]).map(Some) })
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(Table { columns, rows: out })
}

impl Serialize for ResultValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ResultValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        ResultValue::from_json(&v).map_err(serde::de::Error::custom)
    }
}

/// Typed result of a program plus the graph state it left behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    #[serde(flatten)]
    pub value: ResultValue,
    pub graph_after: PropertyGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePhase {
    Extraction,
    Syntax,
    Runtime,
    Timeout,
    Memory,
    SandboxViolation,
    EnvelopeMalformed,
}

impl FailurePhase {
    pub fn as_str(self) -> &'static str {
        match self {
            FailurePhase::Extraction => "extraction",
            FailurePhase::Syntax => "syntax",
            FailurePhase::Runtime => "runtime",
            FailurePhase::Timeout => "timeout",
            FailurePhase::Memory => "memory",
            FailurePhase::SandboxViolation => "sandbox-violation",
            FailurePhase::EnvelopeMalformed => "envelope-malformed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            FailurePhase::Extraction,
            FailurePhase::Syntax,
            FailurePhase::Runtime,
            FailurePhase::Timeout,
            FailurePhase::Memory,
            FailurePhase::SandboxViolation,
            FailurePhase::EnvelopeMalformed,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecFailure {
    pub phase: FailurePhase,
    /// Exception type name when the program raised one.
    pub error_type: String,
    /// Short deterministic message, suitable for self-debug prompts.
    pub message: String,
    /// Raw traceback and captured output.
    pub diagnostics: String,
}

impl ExecFailure {
    pub fn new(phase: FailurePhase, error_type: impl Into<String>, message: impl Into<String>) -> Self {
        Self { phase, error_type: error_type.into(), message: message.into(), diagnostics: String::new() }
    }

    pub fn with_diagnostics(mut self, diagnostics: impl Into<String>) -> Self {
        self.diagnostics = diagnostics.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecOutcome {
    Success { envelope: ResultEnvelope, diagnostics: String },
    Failure(ExecFailure),
}

impl ExecOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ExecOutcome::Success { .. })
    }

    pub fn envelope(&self) -> Option<&ResultEnvelope> {
        match self {
            ExecOutcome::Success { envelope, .. } => Some(envelope),
            ExecOutcome::Failure(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&ExecFailure> {
        match self {
            ExecOutcome::Failure(f) => Some(f),
            ExecOutcome::Success { .. } => None,
        }
    }

    fn fail(phase: FailurePhase, error_type: &str, message: impl Into<String>) -> Self {
        ExecOutcome::Failure(ExecFailure::new(phase, error_type, message))
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox configuration error: {0}")]
    Config(String),
    #[error("sandbox I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("model output is empty")]
    EmptyInput,
}

/// Body of the first fenced block, if any: the opening fence line
/// (with its optional language tag) is dropped; a missing closing fence
/// takes the rest of the text.
fn first_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    Some(body.find("```").map_or(body, |end| &body[..end]))
}

/// Program text from a model reply: the first fenced block, or the whole
/// reply when it holds no fence.
pub fn extract_code(llm_text: &str) -> Result<String, ExtractError> {
    let whole = llm_text.trim();
    if whole.is_empty() {
        return Err(ExtractError::EmptyInput);
    }
    match first_fenced_block(llm_text).map(str::trim) {
        Some(code) if !code.is_empty() => Ok(code.to_string()),
        _ => Ok(whole.to_string()),
    }
}

/// Reads a strawman reply. The envelope object must sit in a fenced block.
pub fn parse_direct_answer(llm_text: &str, g: &PropertyGraph) -> ExecOutcome {
    let malformed = |msg: String| ExecOutcome::fail(FailurePhase::EnvelopeMalformed, "EnvelopeMalformed", format!("EnvelopeMalformed: {msg}"));
    let Some(block) = first_fenced_block(llm_text) else {
        return malformed("reply has no fenced envelope block".into());
    };
    let doc: serde_json::Value = match serde_json::from_str(block.trim()) {
        Ok(v) => v,
        Err(e) => return malformed(format!("envelope is not valid JSON ({e})")),
    };
    match ResultValue::from_json(&doc) {
        Ok(value) => ExecOutcome::Success {
            envelope: ResultEnvelope { value, graph_after: g.clone() },
            diagnostics: String::new(),
        },
        Err(e) => malformed(e),
    }
}

/// Runs `code` with the default sandbox (system `python3`).
pub fn execute(
    code: &str,
    g: &PropertyGraph,
    backend: ExecBackendKind,
    limits: &SandboxLimits,
) -> Result<ExecOutcome, SandboxError> {
    Sandbox::default().execute(code, g, backend, limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs;

    #[test]
    fn extract_first_fence() {
        assert_eq!(extract_code("Here you go:\n```\nresult = 1\n```").unwrap(), "result = 1");
        assert_eq!(extract_code("  result = 2\n").unwrap(), "result = 2");
        assert_eq!(extract_code("```python\na = 1\n```\ntext\n```python\nb = 2\n```").unwrap(), "a = 1");
        assert_eq!(extract_code("```sql\nSELECT 1;").unwrap(), "SELECT 1;");
        assert_eq!(extract_code("   \n"), Err(ExtractError::EmptyInput));
        assert_eq!(extract_code("```\n```").unwrap(), "```\n```");
    }

    #[test]
    fn direct_answer_parsing() {
        let g = PropertyGraph::new(true);
        let out = parse_direct_answer("```json\n{\"kind\":\"scalar\",\"value\":42}\n```", &g);
        assert_eq!(out.envelope().unwrap().value, ResultValue::Scalar(AttrValue::Int(42)));

        let prose = parse_direct_answer("The answer is 42.", &g);
        assert_eq!(prose.failure().unwrap().phase, FailurePhase::EnvelopeMalformed);

        let mixed = parse_direct_answer("```\n{\"kind\":\"list\",\"value\":[1,\"a\",true]}\n```", &g);
        assert!(mixed.is_success());

        let unknown = parse_direct_answer("```\n{\"kind\":\"graph\",\"value\":1}\n```", &g);
        assert!(unknown.failure().unwrap().message.contains("unknown envelope kind"));
    }

    #[test]
    fn direct_answer_keeps_graph() {
        let mut g = PropertyGraph::new(true);
        g.add_node("10.0.0.1", attrs!()).unwrap();
        let out = parse_direct_answer("```\n{\"kind\":\"none\",\"value\":null}\n```", &g);
        assert_eq!(out.envelope().unwrap().graph_after, g);
    }

    #[test]
    fn table_row_objects() {
        let doc = serde_json::json!({"kind":"table","value":[{"a":1,"b":"x"},{"b":"y","a":2}]});
        let ResultValue::Table(t) = ResultValue::from_json(&doc).unwrap() else { panic!() };
        assert_eq!(t.columns, vec!["a", "b"]);
        assert_eq!(t.rows[1], vec![Some(AttrValue::Int(2)), Some(AttrValue::from("y"))]);
        let bad = serde_json::json!({"kind":"table","value":[{"a":1},{"b":2}]});
        assert!(ResultValue::from_json(&bad).is_err());
    }

    #[test]
    fn outcome_serde_round_trip() {
        let mut g = PropertyGraph::new(true);
        g.add_node("a", attrs!("x" => 1.5)).unwrap();
        let ok = ExecOutcome::Success {
            envelope: ResultEnvelope { value: ResultValue::List(vec![Some(1i64.into()), None]), graph_after: g },
            diagnostics: String::new(),
        };
        let text = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<ExecOutcome>(&text).unwrap(), ok);
        let bad = ExecOutcome::fail(FailurePhase::SandboxViolation, "SandboxViolation", "x");
        let text = serde_json::to_string(&bad).unwrap();
        assert!(text.contains("\"phase\":\"sandbox-violation\""));
        assert_eq!(serde_json::from_str::<ExecOutcome>(&text).unwrap(), bad);
    }

    #[test]
    fn backend_names() {
        for b in ExecBackendKind::ALL {
            assert_eq!(b.as_str().parse::<ExecBackendKind>().unwrap(), b);
        }
        assert_eq!("Strawman".parse::<ExecBackendKind>().unwrap(), ExecBackendKind::DirectAnswer);
    }
}
