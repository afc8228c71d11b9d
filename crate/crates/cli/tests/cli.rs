use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn nlnetops(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlnetops")).args(args).current_dir(root()).output().unwrap()
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

#[test]
fn committed_fixtures_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["improvement", "table2_malt"] {
        let out_path = tmp.path().join(format!("{name}.json"));
        let scenario = format!("bench/scenarios/{name}.json");
        let out = nlnetops(&["build-fixtures", "--scenario", &scenario, "--out", out_path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", text(&out));
        let built = std::fs::read(&out_path).unwrap();
        let committed = std::fs::read(root().join(format!("bench/fixtures/{name}.json"))).unwrap();
        assert!(built == committed, "{name} fixture differs from its scenario");
    }
}

#[test]
fn replay_run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let run = run.to_str().unwrap();
    let out = nlnetops(&[
        "run", "--suite", "bench/malt/suite.json", "--backends", "graph_api", "--models", "bard",
        "--replay", "bench/fixtures/improvement.json", "--k", "5", "--self-debug", "3", "--out", run,
    ]);
    assert!(out.status.success(), "{}", text(&out));
    let out = nlnetops(&["report", "--run", run, "--format", "table"]);
    assert!(out.status.success(), "{}", text(&out));
    let report = text(&out);
    assert!(report.contains("Accuracy: MALT"), "{report}");
    for name in ["accuracy", "breakdown", "taxonomy", "improvement"] {
        assert!(tmp.path().join("run/reports").join(format!("{name}.txt")).exists());
    }
}

#[test]
fn unknown_model_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nlnetops(&[
        "run", "--suite", "bench/malt/suite.json", "--backends", "graph_api", "--models", "gpt-99",
        "--replay", "bench/fixtures/improvement.json", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("gpt-99"));
}

#[test]
fn missing_run_directory_is_an_error() {
    let out = nlnetops(&["report", "--run", "/nonexistent/run", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn modes_are_exclusive() {
    let out = nlnetops(&[
        "run", "--suite", "bench/malt/suite.json", "--backends", "graph_api", "--models", "bard",
        "--live", "--replay", "bench/fixtures/improvement.json", "--out", "/tmp/x",
    ]);
    assert!(!out.status.success());
}
