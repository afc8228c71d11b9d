use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nlnetops_core::bench::{self, render_reports, ReportFormat, RunLog, RunMatrix, Scenario};
use nlnetops_core::eval::Evaluator;
use nlnetops_core::llm::{load_models, ChatEndpointBackend, CompletionBackend, Gateway, ModelConfig, RecordingBackend, ReplayBackend};
use nlnetops_core::promptgen::PromptGenerator;
use nlnetops_core::sandbox::{ExecBackendKind, Sandbox, SandboxLimits};
use nlnetops_core::suite::Suite;

#[derive(Parser)]
#[command(name = "nlnetops", version, about = "Benchmark runner for natural-language network management")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run suites over a backend × model matrix and write the run log.
    Run(RunArgs),
    /// Render report tables from a run directory.
    Report(ReportArgs),
    /// Estimate prompt size and cost of both prompt paths over graph sizes.
    CostSweep(CostArgs),
    /// Check that golden programs pass and agree across backends.
    ValidateSuite(ValidateArgs),
    /// Turn a scenario of scripted responses into a replay fixture file.
    BuildFixtures(BuildArgs),
}

#[derive(Args)]
struct ModelFile {
    /// Models file: JSON object of model name to endpoint, limits and pricing.
    #[arg(long, default_value = "bench/models.json")]
    model_config: PathBuf,
}

#[derive(Args)]
struct SandboxArgs {
    /// Wall-clock limit per program, in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    /// Address-space limit per program, in MiB.
    #[arg(long, default_value_t = 1024)]
    memory_mb: u64,
    /// Python interpreter used by the code backends.
    #[arg(long, default_value = "python3")]
    python: String,
}

impl SandboxArgs {
    fn limits(&self) -> SandboxLimits {
        SandboxLimits { timeout: Duration::from_secs(self.timeout_secs), memory_bytes: self.memory_mb << 20 }
    }

    fn sandbox(&self) -> Sandbox {
        Sandbox::with_python(&self.python)
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Mode {
    /// Answer model calls from fixture files.
    #[arg(long, num_args = 1..)]
    replay: Vec<PathBuf>,
    /// Call the live endpoints and record every response into this file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Call the live endpoints.
    #[arg(long)]
    live: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, num_args = 1.., required = true)]
    suite: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    backends: Vec<ExecBackendKind>,
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<String>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    self_debug: usize,
    #[command(flatten)]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[command(flatten)]
    model_file: ModelFile,
    #[command(flatten)]
    sandbox: SandboxArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Where to write report files; defaults to `<run>/reports`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// Graph sizes in elements (nodes plus edges), ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Suite whose queries are priced.
    #[arg(long, default_value = "bench/traffic/suite.json")]
    suite: PathBuf,
    #[arg(long, default_value_t = 2023)]
    seed: u64,
    #[command(flatten)]
    model_file: ModelFile,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, num_args = 1.., required = true)]
    suite: Vec<PathBuf>,
    #[command(flatten)]
    sandbox: SandboxArgs,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Fixture file to write; an existing file is replaced.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model_file: ModelFile,
    #[command(flatten)]
    sandbox: SandboxArgs,
}

fn models_for(file: &Path, names: &[String]) -> Result<BTreeMap<String, ModelConfig>> {
    let all = load_models(file)?;
    for n in names {
        if !all.contains_key(n) {
            bail!("model `{n}` is not defined in {}", file.display());
        }
    }
    Ok(all)
}

fn run(args: RunArgs) -> Result<()> {
    let models = models_for(&args.model_file.model_config, &args.models)?;
    let (backend, mode): (Arc<dyn CompletionBackend>, &str) = if !args.mode.replay.is_empty() {
        (Arc::new(ReplayBackend::load_all(&args.mode.replay)?), "replay")
    } else if let Some(path) = &args.mode.record {
        (Arc::new(RecordingBackend::new(Arc::new(ChatEndpointBackend::default()), path)?), "record")
    } else {
        (Arc::new(ChatEndpointBackend::default()), "live")
    };
    let matrix = RunMatrix {
        suites: args.suite,
        backends: args.backends,
        models: args.models,
        k: args.k,
        debug_budget: args.self_debug,
        limits: args.sandbox.limits(),
        concurrency: args.concurrency,
    };
    let evaluator = Evaluator::new(Gateway::with_cap(backend, args.concurrency)).with_sandbox(args.sandbox.sandbox());
    let log = bench::run_suite(&matrix, &models, &evaluator, mode, Some(&args.out))?;
    let passed = log.records.iter().filter(|r| r.verdict.passed).count();
    println!("{} records ({passed} passed) written to {}", log.records.len(), args.out.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let log = RunLog::load(&args.run)?;
    if log.records.is_empty() {
        bail!("run {} has no records", args.run.display());
    }
    let dir = args.out.unwrap_or_else(|| args.run.join("reports"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in render_reports(&log, args.format) {
        let path = dir.join(&r.name);
        std::fs::write(&path, &r.text).with_context(|| format!("writing {}", path.display()))?;
        println!("== {} ==\n{}", r.name, r.text);
    }
    Ok(())
}

fn cost_sweep(args: CostArgs) -> Result<()> {
    let models = models_for(&args.model_file.model_config, &args.models)?;
    let configs: Vec<ModelConfig> = args.models.iter().map(|n| models[n].clone()).collect();
    let suite = Suite::load(&args.suite)?;
    let queries: Vec<String> = suite.cases.iter().map(|c| c.query.clone()).collect();
    let sweep = bench::cost_sweep(&args.sizes, &configs, &queries, &PromptGenerator::default(), args.seed)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    std::fs::write(args.out.join("cost_samples.csv"), sweep.samples_csv())?;
    let summary = sweep.summary();
    std::fs::write(args.out.join("cost_summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<bool> {
    let sandbox = args.sandbox.sandbox();
    let limits = args.sandbox.limits();
    let mut ok = true;
    for path in &args.suite {
        let suite = Suite::load(path)?;
        let v = bench::validate_suite(&suite, &sandbox, &limits);
        print!("{}", v.render());
        ok &= v.ok();
    }
    println!("{}", if ok { "all goldens consistent" } else { "suite defects found" });
    Ok(ok)
}

fn build_fixtures(args: BuildArgs) -> Result<()> {
    let scenario = Scenario::load(&args.scenario)?;
    let models = models_for(&args.model_file.model_config, &scenario.models)?;
    let evaluator = Evaluator::new(Gateway::new(Arc::new(ReplayBackend::from_records([])))).with_sandbox(args.sandbox.sandbox());
    let log = bench::build_fixtures(&scenario, &models, &evaluator, args.sandbox.limits(), &args.out)?;
    println!("{} records scripted into {}", log.records.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Report(a) => report(a).map(|_| true),
        Command::CostSweep(a) => cost_sweep(a).map(|_| true),
        Command::ValidateSuite(a) => validate(a),
        Command::BuildFixtures(a) => build_fixtures(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
