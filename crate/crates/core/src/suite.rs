//! Benchmark suite files and the cases they describe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::graph::{generate_malt, generate_traffic_graph, load_graph, GraphError, MaltSchema, PropertyGraph};
use crate::promptgen::Application;
use crate::sandbox::ExecBackendKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn letter(self) -> &'static str {
        match self {
            Difficulty::Easy => "E",
            Difficulty::Medium => "M",
            Difficulty::Hard => "H",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        })
    }
}

/// Where a case's input graph comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureSpec {
    Generated(GeneratorSpec),
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorSpec {
    Traffic { nodes: usize, edges: usize, seed: u64 },
    Malt { chassis: usize, switches_per_chassis: usize, ports_per_switch: usize, seed: u64 },
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<PropertyGraph, GraphError> {
        match *self {
            GeneratorSpec::Traffic { nodes, edges, seed } => generate_traffic_graph(nodes, edges, seed),
            GeneratorSpec::Malt { chassis, switches_per_chassis, ports_per_switch, seed } => {
                generate_malt(chassis, switches_per_chassis, ports_per_switch, seed)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{0}")]
    Graph(#[from] GraphError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn invalid(path: &Path, message: impl Into<String>) -> SuiteError {
    SuiteError::Invalid { path: path.display().to_string(), message: message.into() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    version: u32,
    application: Application,
    cases: Vec<CaseFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    id: String,
    query: String,
    difficulty: Difficulty,
    fixture: FixtureSpec,
    #[serde(default)]
    golden: BTreeMap<ExecBackendKind, String>,
    #[serde(default)]
    ordered: bool,
    #[serde(default)]
    mutating: bool,
    #[serde(default)]
    validator: Option<String>,
}

/// One query with its fixture, golden programs and comparison options.
/// Paths are resolved against the suite file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub id: String,
    pub application: Application,
    pub difficulty: Difficulty,
    pub query: String,
    pub fixture: FixtureSpec,
    pub golden: BTreeMap<ExecBackendKind, PathBuf>,
    pub ordered: bool,
    pub mutating: bool,
    pub validator: Option<PathBuf>,
    base_dir: PathBuf,
}

impl BenchmarkCase {
    pub fn load_fixture(&self) -> Result<PropertyGraph, SuiteError> {
        let schema = MaltSchema::default();
        let schema = (self.application == Application::Malt).then_some(&schema);
        match &self.fixture {
            FixtureSpec::Generated(spec) => {
                let g = spec.build()?;
                if let Some(s) = schema {
                    s.validate(&g)?;
                }
                Ok(g)
            }
            FixtureSpec::File { path } => {
                let p = self.base_dir.join(path);
                let text = std::fs::read_to_string(&p).map_err(|source| SuiteError::Io { path: p.display().to_string(), source })?;
                Ok(load_graph(&text, schema)?)
            }
        }
    }

    pub fn golden_program(&self, backend: ExecBackendKind) -> Result<Option<String>, SuiteError> {
        self.golden.get(&backend).map(|p| read(p)).transpose()
    }

    pub fn validator_program(&self) -> Result<Option<String>, SuiteError> {
        self.validator.as_ref().map(|p| read(p)).transpose()
    }

    /// Golden used as the reference for `backend`: its own if present,
    /// otherwise the first code backend that has one.
    pub fn reference_backend(&self, backend: ExecBackendKind) -> Option<ExecBackendKind> {
        if self.golden.contains_key(&backend) && backend != ExecBackendKind::DirectAnswer {
            return Some(backend);
        }
        ExecBackendKind::CODE_BACKENDS.into_iter().find(|b| self.golden.contains_key(b))
    }

    /// Mutants shipped next to the golden program, named
    /// `<golden stem>.mutant<N>.<ext>`, in numeric order.
    pub fn mutants(&self, backend: ExecBackendKind) -> Result<Vec<PathBuf>, SuiteError> {
        let Some(golden) = self.golden.get(&backend) else {
            return Ok(Vec::new());
        };
        let dir = golden.parent().unwrap_or(Path::new("."));
        let stem = golden.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let ext = golden.extension().map(|e| e.to_string_lossy().to_string()).unwrap_or_default();
        let prefix = format!("{stem}.mutant");
        let entries = std::fs::read_dir(dir).map_err(|source| SuiteError::Io { path: dir.display().to_string(), source })?;
        let mut found: Vec<(u32, PathBuf)> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().to_string();
                let n = name.strip_prefix(&prefix)?.strip_suffix(&format!(".{ext}"))?.parse().ok()?;
                Some((n, e.path()))
            })
            .collect();
        found.sort();
        Ok(found.into_iter().map(|(_, p)| p).collect())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }
}

fn read(p: &Path) -> Result<String, SuiteError> {
    std::fs::read_to_string(p).map_err(|source| SuiteError::Io { path: p.display().to_string(), source })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub path: PathBuf,
    pub application: Application,
    pub cases: Vec<BenchmarkCase>,
}

impl Suite {
    pub fn load(path: &Path) -> Result<Self, SuiteError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, path, &base)
    }

    fn parse(text: &str, path: &Path, base: &Path) -> Result<Self, SuiteError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| invalid(path, e.to_string()))?;
        let file: SuiteFile = serde_json::from_value(raw).map_err(|e| invalid(path, e.to_string()))?;
        if file.version != 1 {
            return Err(invalid(path, format!("unsupported suite version {}", file.version)));
        }
        if file.cases.is_empty() {
            return Err(invalid(path, "suite has no cases"));
        }
        let mut ids = BTreeSet::new();
        let mut cases = Vec::with_capacity(file.cases.len());
        for c in file.cases {
            if !ids.insert(c.id.clone()) {
                return Err(invalid(path, format!("duplicate case id `{}`", c.id)));
            }
            if c.query.trim().is_empty() {
                return Err(invalid(path, format!("case `{}` has an empty query", c.id)));
            }
            if c.golden.is_empty() && c.validator.is_none() {
                return Err(invalid(path, format!("case `{}` needs a golden program or a validator", c.id)));
            }
            if c.golden.contains_key(&ExecBackendKind::DirectAnswer) {
                return Err(invalid(path, format!("case `{}`: direct answers have no golden program", c.id)));
            }
            let resolve = |p: &str| {
                let full = base.join(p);
                if full.is_file() {
                    Ok(full)
                } else {
                    Err(invalid(path, format!("case `{}` references missing file {}", c.id, full.display())))
                }
            };
            let golden = c.golden.iter().map(|(b, p)| Ok((*b, resolve(p)?))).collect::<Result<_, SuiteError>>()?;
            let validator = c.validator.as_deref().map(resolve).transpose()?;
            cases.push(BenchmarkCase {
                id: c.id,
                application: file.application,
                difficulty: c.difficulty,
                query: c.query,
                fixture: c.fixture,
                golden,
                ordered: c.ordered,
                mutating: c.mutating,
                validator,
                base_dir: base.to_path_buf(),
            });
        }
        Ok(Self { path: path.to_path_buf(), application: file.application, cases })
    }

    pub fn case(&self, id: &str) -> Option<&BenchmarkCase> {
        self.cases.iter().find(|c| c.id == id)
    }
}
