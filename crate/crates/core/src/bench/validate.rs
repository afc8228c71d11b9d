use std::path::PathBuf;

use crate::eval::{evaluate_outcome, Verdict};
use crate::graph::{MaltSchema, Tolerance};
use crate::promptgen::Application;
use crate::sandbox::{ExecBackendKind, ExecOutcome, Sandbox, SandboxLimits};
use crate::suite::Suite;

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCheck {
    pub case_id: String,
    pub backend: ExecBackendKind,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub case_id: String,
    pub reference: ExecBackendKind,
    pub other: ExecBackendKind,
    pub equal: bool,
    pub detail: String,
}

/// Outcome of checking every golden program of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteValidation {
    pub suite: PathBuf,
    pub goldens: Vec<GoldenCheck>,
    pub cross: Vec<CrossCheck>,
}

impl SuiteValidation {
    pub fn ok(&self) -> bool {
        self.goldens.iter().all(|g| g.passed) && self.cross.iter().all(|c| c.equal)
    }

    pub fn render(&self) -> String {
        let mut out = format!("suite {}\n", self.suite.display());
        for b in ExecBackendKind::CODE_BACKENDS {
            let of: Vec<&GoldenCheck> = self.goldens.iter().filter(|g| g.backend == b).collect();
            if !of.is_empty() {
                let ok = of.iter().filter(|g| g.passed).count();
                out.push_str(&format!("  {:<10} goldens {ok}/{} pass\n", b.label(), of.len()));
            }
        }
        let eq = self.cross.iter().filter(|c| c.equal).count();
        out.push_str(&format!("  cross-backend agreement {eq}/{}\n", self.cross.len()));
        for g in self.goldens.iter().filter(|g| !g.passed) {
            out.push_str(&format!("  FAIL {} {}: {}\n", g.case_id, g.backend.label(), g.detail));
        }
        for c in self.cross.iter().filter(|c| !c.equal) {
            out.push_str(&format!("  MISMATCH {} {} vs {}: {}\n", c.case_id, c.other.label(), c.reference.label(), c.detail));
        }
        out
    }
}

fn verdict_detail(v: &Verdict) -> String {
    match v.error_class {
        Some(c) => format!("{}: {}", c.label(), v.detail),
        None => String::new(),
    }
}

/// Runs every golden program: each must execute, satisfy the case's
/// validator if there is one, and leave a schema-valid graph; goldens of
/// one case must agree with the reference backend's golden.
pub fn validate_suite(suite: &Suite, sandbox: &Sandbox, limits: &SandboxLimits) -> SuiteValidation {
    let tol = Tolerance::default();
    let mut goldens = Vec::new();
    let mut cross = Vec::new();
    for case in &suite.cases {
        let check = |backend, passed, detail: String| GoldenCheck { case_id: case.id.clone(), backend, passed, detail };
        let graph = match case.load_fixture() {
            Ok(g) => g,
            Err(e) => {
                for b in case.golden.keys() {
                    goldens.push(check(*b, false, format!("fixture: {e}")));
                }
                continue;
            }
        };
        let mut outcomes = Vec::new();
        for b in case.golden.keys() {
            let result = case
                .golden_program(*b)
                .map_err(|e| e.to_string())
                .and_then(|code| sandbox.execute(&code.unwrap_or_default(), &graph, *b, limits).map_err(|e| e.to_string()));
            match result {
                Ok(out @ ExecOutcome::Success { .. }) => outcomes.push((*b, out)),
                Ok(ExecOutcome::Failure(f)) => goldens.push(check(*b, false, f.message)),
                Err(e) => goldens.push(check(*b, false, e)),
            }
        }
        for (b, out) in &outcomes {
            let mut problems = Vec::new();
            if case.application == Application::Malt {
                if let Some(env) = out.envelope() {
                    if let Err(e) = MaltSchema::default().validate(&env.graph_after) {
                        problems.push(format!("updated graph breaks the MALT schema: {e}"));
                    }
                }
            }
            match evaluate_outcome(out, out, case, &graph, tol, sandbox, limits) {
                Ok(v) if v.passed => {}
                Ok(v) => problems.push(verdict_detail(&v)),
                Err(e) => problems.push(e.to_string()),
            }
            goldens.push(check(*b, problems.is_empty(), problems.join("; ")));
        }
        let Some(reference) = case.reference_backend(ExecBackendKind::GraphApi) else { continue };
        let Some((_, ref_out)) = outcomes.iter().find(|(b, _)| *b == reference) else { continue };
        for (b, out) in outcomes.iter().filter(|(b, _)| *b != reference) {
            let (equal, detail) = match evaluate_outcome(out, ref_out, case, &graph, tol, sandbox, limits) {
                Ok(v) => (v.passed, verdict_detail(&v)),
                Err(e) => (false, e.to_string()),
            };
            cross.push(CrossCheck { case_id: case.id.clone(), reference, other: *b, equal, detail });
        }
    }
    SuiteValidation { suite: suite.path.clone(), goldens, cross }
}
