use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;

use nlnetops_core::eval::Evaluator;
use nlnetops_core::llm::{load_models, ChatEndpointBackend, CompletionBackend, Gateway, ReplayBackend};
use nlnetops_core::sandbox::Sandbox;
use nlnetops_service::{router, Copilot, SessionStore};

#[derive(Parser)]
#[command(name = "nlnetops-service", version, about = "Copilot HTTP service for natural-language graph queries")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory holding session files and the feedback log.
    #[arg(long, default_value = "var/sessions")]
    store: PathBuf,
    #[arg(long, default_value = "bench/models.json")]
    model_config: PathBuf,
    /// Answer model calls from replay fixture files instead of live endpoints.
    #[arg(long = "replay")]
    replay: Vec<PathBuf>,
    /// Self-debug rounds allowed per query.
    #[arg(long, default_value_t = 3)]
    debug_budget: usize,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long, default_value = "python3")]
    python: String,
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let models = load_models(&args.model_config)?;
    let backend: Arc<dyn CompletionBackend> = if args.replay.is_empty() {
        Arc::new(ChatEndpointBackend::default())
    } else {
        Arc::new(ReplayBackend::load_all(&args.replay)?)
    };
    let mut evaluator = Evaluator::new(Gateway::new(backend)).with_sandbox(Sandbox::with_python(&args.python)).without_memo();
    evaluator.limits.timeout = Duration::from_secs(args.timeout_secs);
    let store = SessionStore::open(&args.store)?;
    let copilot = Arc::new(Copilot::new(store, evaluator, models, args.debug_budget));

    let listener = tokio::net::TcpListener::bind(args.addr).await.with_context(|| format!("binding {}", args.addr))?;
    tracing::info!("listening on {}", args.addr);
    axum::serve(listener, router(copilot)).await?;
    Ok(())
}
