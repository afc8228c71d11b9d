use std::collections::BTreeMap;
use std::fmt;

use super::RunLog;
use crate::eval::{ErrorClass, EvalRecord};
use crate::promptgen::Application;
use crate::sandbox::ExecBackendKind;
use crate::suite::Difficulty;

/// Exact non-negative fraction. Displays rounded half-up to 2 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0, "ratio with zero denominator");
        let g = gcd(num, den).max(1);
        Self { num: num / g, den: den / g }
    }

    pub fn zero() -> Self {
        Self { num: 0, den: 1 }
    }

    pub fn plus(self, other: Ratio) -> Ratio {
        Ratio::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }

    pub fn div_by(self, n: u128) -> Ratio {
        Ratio::new(self.num, self.den * n)
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hundredths = (200 * self.num + self.den) / (2 * self.den);
        write!(f, "{}.{:02}", hundredths / 100, hundredths % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format `{other}` (expected table or csv)")),
        }
    }
}

/// One rendered report file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub name: String,
    pub text: String,
}

type GroupKey<'a> = (Application, &'a str, ExecBackendKind, &'a str);

/// Per sample chain: (passed at round 0, passed at any round).
#[derive(Debug, Default)]
struct CaseRuns {
    chains: BTreeMap<usize, (bool, bool)>,
}

impl CaseRuns {
    fn passed(&self) -> bool {
        self.chains.values().any(|c| c.1)
    }
    fn round0_passes(&self) -> usize {
        self.chains.values().filter(|c| c.0).count()
    }
}

struct Index<'a> {
    log: &'a RunLog,
    groups: BTreeMap<GroupKey<'a>, CaseRuns>,
    backends: Vec<ExecBackendKind>,
}

impl<'a> Index<'a> {
    fn new(log: &'a RunLog) -> Self {
        let mut groups: BTreeMap<GroupKey<'a>, CaseRuns> = BTreeMap::new();
        for r in &log.records {
            let g = groups.entry((r.application, r.case_id.as_str(), r.backend, r.model.as_str())).or_default();
            let chain = g.chains.entry(r.attempt_index).or_default();
            if r.verdict.passed {
                chain.1 = true;
                if r.debug_round == 0 {
                    chain.0 = true;
                }
            }
        }
        let backends = ExecBackendKind::ALL.into_iter().filter(|b| log.meta.matrix.backends.contains(b)).collect();
        Self { log, groups, backends }
    }

    fn applications(&self) -> impl Iterator<Item = (Application, &'a [super::CaseRef])> + 'a {
        self.log.meta.cases.iter().map(|(a, cs)| (*a, cs.as_slice()))
    }

    fn models(&self) -> &'a [String] {
        &self.log.meta.matrix.models
    }

    /// Passed cases over all cases; a case without records counts as failed.
    fn accuracy(&self, app: Application, cases: &[super::CaseRef], backend: ExecBackendKind, model: &str, diff: Option<Difficulty>) -> (u128, u128) {
        let selected = cases.iter().filter(|c| diff.is_none_or(|d| c.difficulty == d));
        let mut passed = 0;
        let mut total = 0;
        for c in selected {
            total += 1;
            if self.groups.get(&(app, c.id.as_str(), backend, model)).is_some_and(CaseRuns::passed) {
                passed += 1;
            }
        }
        (passed, total)
    }
}

fn cell(passed: u128, total: u128) -> String {
    if total == 0 {
        "-".into()
    } else {
        Ratio::new(passed, total).to_string()
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..rows.iter().map(Vec::len).max().unwrap_or(0))
        .map(|i| rows.iter().filter_map(|r| r.get(i)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(i, s)| format!("{s:<w$}", w = widths[i])).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn csv(rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for r in rows {
        let fields: Vec<String> = r
            .iter()
            .map(|f| if f.contains([',', '"', '\n']) { format!("\"{}\"", f.replace('"', "\"\"")) } else { f.clone() })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn accuracy_report(ix: &Index, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut rows = vec![["application", "model", "backend", "passed", "total", "accuracy"].map(String::from).to_vec()];
            for (app, cases) in ix.applications() {
                for model in ix.models() {
                    for b in &ix.backends {
                        let (p, t) = ix.accuracy(app, cases, *b, model, None);
                        rows.push(vec![app.to_string(), model.clone(), b.label().into(), p.to_string(), t.to_string(), cell(p, t)]);
                    }
                }
            }
            csv(&rows)
        }
        ReportFormat::Table => {
            let mut out = String::new();
            for (app, cases) in ix.applications() {
                out.push_str(&format!("Accuracy: {} ({} cases)\n", app.title(), cases.len()));
                let mut rows = vec![std::iter::once(String::new()).chain(ix.backends.iter().map(|b| b.label().to_string())).collect()];
                for model in ix.models() {
                    let mut row = vec![model.clone()];
                    for b in &ix.backends {
                        let (p, t) = ix.accuracy(app, cases, *b, model, None);
                        row.push(cell(p, t));
                    }
                    rows.push(row);
                }
                out.push_str(&align(&rows));
                out.push('\n');
            }
            out
        }
    }
}

fn breakdown_report(ix: &Index, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut rows = vec![["application", "model", "backend", "difficulty", "passed", "total", "accuracy"].map(String::from).to_vec()];
            for (app, cases) in ix.applications() {
                for model in ix.models() {
                    for b in &ix.backends {
                        for d in Difficulty::ALL {
                            let (p, t) = ix.accuracy(app, cases, *b, model, Some(d));
                            rows.push(vec![app.to_string(), model.clone(), b.label().into(), d.to_string(), p.to_string(), t.to_string(), cell(p, t)]);
                        }
                    }
                }
            }
            csv(&rows)
        }
        ReportFormat::Table => {
            let mut out = String::new();
            for (app, cases) in ix.applications() {
                out.push_str(&format!("Breakdown by difficulty: {}\n", app.title()));
                let header: String = Difficulty::ALL
                    .iter()
                    .map(|d| format!("{}({})", d.letter(), cases.iter().filter(|c| c.difficulty == *d).count()))
                    .collect::<Vec<_>>()
                    .join("/");
                let mut rows = vec![
                    std::iter::once(String::new()).chain(ix.backends.iter().map(|b| b.label().to_string())).collect(),
                    std::iter::once(String::new()).chain(ix.backends.iter().map(|_| header.clone())).collect::<Vec<_>>(),
                ];
                for model in ix.models() {
                    let mut row = vec![model.clone()];
                    for b in &ix.backends {
                        let parts: Vec<String> = Difficulty::ALL
                            .iter()
                            .map(|d| {
                                let (p, t) = ix.accuracy(app, cases, *b, model, Some(*d));
                                cell(p, t)
                            })
                            .collect();
                        row.push(parts.join("/"));
                    }
                    rows.push(row);
                }
                out.push_str(&align(&rows));
                out.push('\n');
            }
            out
        }
    }
}

/// Failed first-round attempts (round 0 of every sample) by error class.
fn taxonomy_counts(records: &[EvalRecord], backend: ExecBackendKind, app: Application) -> (BTreeMap<ErrorClass, usize>, usize) {
    let mut counts = BTreeMap::new();
    let mut total = 0;
    for r in records.iter().filter(|r| r.backend == backend && r.application == app && r.debug_round == 0 && !r.verdict.passed) {
        let class = r.verdict.error_class.expect("failed verdicts carry a class");
        *counts.entry(class).or_insert(0) += 1;
        total += 1;
    }
    (counts, total)
}

fn taxonomy_report(ix: &Index, format: ReportFormat) -> String {
    let apps: Vec<Application> = ix.applications().map(|(a, _)| a).collect();
    let mut csv_rows = vec![["backend", "error_class", "application", "count"].map(String::from).to_vec()];
    let mut out = String::new();
    for b in ix.backends.iter().filter(|b| ix.log.records.iter().any(|r| r.backend == **b)) {
        let per_app: Vec<(BTreeMap<ErrorClass, usize>, usize)> = apps.iter().map(|a| taxonomy_counts(&ix.log.records, *b, *a)).collect();
        let mut classes: Vec<ErrorClass> = ErrorClass::TAXONOMY.to_vec();
        for c in ErrorClass::HARNESS {
            if per_app.iter().any(|(m, _)| m.contains_key(&c)) {
                classes.push(c);
            }
        }
        let mut rows = vec![std::iter::once(format!("Error type ({})", b.label()))
            .chain(apps.iter().zip(&per_app).map(|(a, (_, t))| format!("{} ({t})", a.title())))
            .collect::<Vec<_>>()];
        for c in &classes {
            let mut row = vec![c.label().to_string()];
            for (a, (m, _)) in apps.iter().zip(&per_app) {
                let n = m.get(c).copied().unwrap_or(0);
                row.push(n.to_string());
                csv_rows.push(vec![b.label().into(), c.label().into(), a.to_string(), n.to_string()]);
            }
            rows.push(row);
        }
        rows.push(std::iter::once("Total".to_string()).chain(per_app.iter().map(|(_, t)| t.to_string())).collect());
        for (a, (_, t)) in apps.iter().zip(&per_app) {
            csv_rows.push(vec![b.label().into(), "Total".into(), a.to_string(), t.to_string()]);
        }
        out.push_str(&align(&rows));
        out.push('\n');
    }
    match format {
        ReportFormat::Table => out,
        ReportFormat::Csv => csv(&csv_rows),
    }
}

struct Improvement {
    app: Application,
    backend: ExecBackendKind,
    model: String,
    k: usize,
    cases: usize,
    baseline_failed: usize,
    pass_at_1: Ratio,
    pass_at_k: Option<Ratio>,
    self_debug: Option<Ratio>,
}

/// pass@1 is the mean over cases of the round-0 passing probability. The
/// other two columns only look at cases whose first sample failed at round
/// 0: pass@k counts those rescued by any other round-0 sample, self-debug
/// those rescued by the first sample's debug rounds.
fn improvements(ix: &Index) -> Vec<Improvement> {
    let mut out = Vec::new();
    for (app, cases) in ix.applications() {
        for b in &ix.backends {
            for model in ix.models() {
                let runs: Vec<Option<&CaseRuns>> = cases.iter().map(|c| ix.groups.get(&(app, c.id.as_str(), *b, model.as_str()))).collect();
                if runs.iter().all(Option::is_none) {
                    continue;
                }
                let mut mean = Ratio::zero();
                let mut k = 0;
                let (mut failed, mut by_k, mut by_debug) = (0u128, 0u128, 0u128);
                for r in &runs {
                    let Some(r) = r else {
                        failed += 1;
                        continue;
                    };
                    let n = r.chains.len().max(1);
                    k = k.max(n);
                    mean = mean.plus(Ratio::new(r.round0_passes() as u128, n as u128));
                    let first = r.chains.get(&0).copied().unwrap_or_default();
                    if !first.0 {
                        failed += 1;
                        if r.round0_passes() > 0 {
                            by_k += 1;
                        }
                        if first.1 {
                            by_debug += 1;
                        }
                    }
                }
                let of_failed = |n: u128| (failed > 0).then(|| Ratio::new(n, failed));
                out.push(Improvement {
                    app,
                    backend: *b,
                    model: model.clone(),
                    k,
                    cases: cases.len(),
                    baseline_failed: failed as usize,
                    pass_at_1: mean.div_by(cases.len().max(1) as u128),
                    pass_at_k: of_failed(by_k),
                    self_debug: of_failed(by_debug),
                });
            }
        }
    }
    out
}

fn improvement_report(ix: &Index, format: ReportFormat) -> String {
    let opt = |r: Option<Ratio>| r.map_or("-".to_string(), |r| r.to_string());
    let mut rows = vec![["application", "backend", "model", "k", "cases", "baseline_failed", "pass@1", "pass@k", "self_debug"]
        .map(String::from)
        .to_vec()];
    for i in improvements(ix) {
        rows.push(vec![
            if format == ReportFormat::Csv { i.app.to_string() } else { i.app.title().to_string() },
            i.backend.label().into(),
            i.model,
            i.k.to_string(),
            i.cases.to_string(),
            i.baseline_failed.to_string(),
            i.pass_at_1.to_string(),
            opt(i.pass_at_k),
            opt(i.self_debug),
        ]);
    }
    match format {
        ReportFormat::Table => format!("Improvement over the first sample\n{}", align(&rows)),
        ReportFormat::Csv => csv(&rows),
    }
}

/// Accuracy, difficulty breakdown, error taxonomy and improvement reports.
/// Output depends only on the log's records and matrix, never on timing.
pub fn render_reports(log: &RunLog, format: ReportFormat) -> Vec<Report> {
    let ix = Index::new(log);
    let ext = match format {
        ReportFormat::Table => "txt",
        ReportFormat::Csv => "csv",
    };
    [
        ("accuracy", accuracy_report(&ix, format)),
        ("breakdown", breakdown_report(&ix, format)),
        ("taxonomy", taxonomy_report(&ix, format)),
        ("improvement", improvement_report(&ix, format)),
    ]
    .into_iter()
    .map(|(name, text)| Report { name: format!("{name}.{ext}"), text })
    .collect()
}
