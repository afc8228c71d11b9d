//! Model access: configuration, pricing, and the completion backends
//! (replay, record, live chat endpoint) behind a concurrency-capped gateway.

mod live;
mod replay;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::PromptBundle;

pub use live::{ChatEndpointBackend, DEFAULT_CREDENTIAL_ENV};
pub use replay::{fixture_key, FixtureRecord, RecordingBackend, ReplayBackend};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    /// Currency per 1000 prompt tokens.
    pub input_per_1k: f64,
    /// Currency per 1000 completion tokens.
    pub output_per_1k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub endpoint: String,
    /// Model identifier sent to the endpoint; defaults to `name`.
    #[serde(default)]
    pub api_model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    pub max_output_tokens: usize,
    pub context_limit: usize,
    pub pricing: Pricing,
    /// Environment variable holding the credential.
    #[serde(default)]
    pub credential_env: Option<String>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: String| Err(LlmError::Config(format!("model `{}`: {m}", self.name)));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} is outside [0, 2]", self.temperature));
        }
        if self.context_limit == 0 {
            return bad("context limit must be positive".into());
        }
        let rates = [self.pricing.input_per_1k, self.pricing.output_per_1k];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("pricing rates must be non-negative".into());
        }
        Ok(())
    }
}

/// Reads a models file: a JSON object mapping model name to its settings.
pub fn load_models(path: &Path) -> Result<BTreeMap<String, ModelConfig>, LlmError> {
    let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
    parse_models(&text)
}

pub fn parse_models(text: &str) -> Result<BTreeMap<String, ModelConfig>, LlmError> {
    let mut models: BTreeMap<String, ModelConfig> =
        serde_json::from_str(text).map_err(|e| LlmError::Config(format!("models file: {e}")))?;
    for (name, cfg) in models.iter_mut() {
        cfg.name = name.clone();
        cfg.validate()?;
    }
    Ok(models)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub tokens_in: u64,
    pub tokens_out: u64,
}

/// Money in billionths of the pricing currency, so sums stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Hash)]
pub struct Cost {
    nanos: u128,
}

impl Cost {
    pub const ZERO: Cost = Cost { nanos: 0 };

    pub fn from_nanos(nanos: u128) -> Self {
        Self { nanos }
    }

    pub fn nanos(self) -> u128 {
        self.nanos
    }

    pub fn as_f64(self) -> f64 {
        self.nanos as f64 / 1e9
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost { nanos: self.nanos + rhs.nanos }
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |a, b| a + b)
    }
}

impl Serialize for Cost {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Cost { nanos: (v * 1e9).round().max(0.0) as u128 })
    }
}

impl std::fmt::Display for Cost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:09}", self.nanos / 1_000_000_000, self.nanos % 1_000_000_000)
    }
}

/// Rates are taken to six decimal places; a rate of `r` per 1000 tokens is
/// `r * 10^6` nano-units per token.
fn micro_rate(rate: f64) -> u128 {
    (rate * 1e6).round().max(0.0) as u128
}

pub fn compute_cost(usage: Usage, pricing: Pricing) -> Cost {
    let nanos = usage.tokens_in as u128 * micro_rate(pricing.input_per_1k)
        + usage.tokens_out as u128 * micro_rate(pricing.output_per_1k);
    Cost { nanos }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    #[serde(with = "millis")]
    pub latency: Duration,
    pub attempt_index: usize,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("context overflow: prompt needs about {estimated} tokens, limit is {limit}")]
    ContextOverflow { estimated: usize, limit: usize },
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("no replay fixture for key {key} attempt {attempt}")]
    FixtureMiss { key: String, attempt: usize },
    #[error("fixture parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// One way of obtaining a completion. Implementations must be safe to call
/// from several threads at once.
pub trait CompletionBackend: Send + Sync {
    fn complete_one(&self, bundle: &PromptBundle, cfg: &ModelConfig, attempt: usize) -> Result<Completion, LlmError>;
}

struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cond: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cond.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cond.notify_one();
    }
}

pub const DEFAULT_CONCURRENCY_CAP: usize = 4;

/// Front door for model calls: checks the context budget and caps the
/// number of in-flight requests per model.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    cap: usize,
    gates: Arc<Mutex<HashMap<String, Arc<Semaphore>>>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("cap", &self.cap).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self::with_cap(backend, DEFAULT_CONCURRENCY_CAP)
    }

    pub fn with_cap(backend: Arc<dyn CompletionBackend>, cap: usize) -> Self {
        Self { backend, cap: cap.max(1), gates: Arc::default() }
    }

    fn gate(&self, model: &str) -> Arc<Semaphore> {
        let mut gates = self.gates.lock().expect("gateway lock");
        gates.entry(model.to_string()).or_insert_with(|| Arc::new(Semaphore::new(self.cap))).clone()
    }

    /// A single completion with an explicit attempt index.
    pub fn complete_attempt(&self, bundle: &PromptBundle, cfg: &ModelConfig, attempt: usize) -> Result<Completion, LlmError> {
        if bundle.estimated_tokens > cfg.context_limit {
            return Err(LlmError::ContextOverflow { estimated: bundle.estimated_tokens, limit: cfg.context_limit });
        }
        let gate = self.gate(&cfg.name);
        let _permit = gate.acquire();
        let mut c = self.backend.complete_one(bundle, cfg, attempt)?;
        c.attempt_index = attempt;
        Ok(c)
    }

    /// `n` completions with attempt indices `0..n`.
    pub fn complete(&self, bundle: &PromptBundle, cfg: &ModelConfig, n: usize) -> Result<Vec<Completion>, LlmError> {
        if n == 0 {
            return Err(LlmError::Config("at least one completion must be requested".into()));
        }
        (0..n).map(|i| self.complete_attempt(bundle, cfg, i)).collect()
    }
}

#[cfg(test)]
pub(crate) fn test_model(name: &str) -> ModelConfig {
    ModelConfig {
        name: name.to_string(),
        endpoint: String::new(),
        api_model: None,
        temperature: 0.0,
        max_output_tokens: 512,
        context_limit: 8192,
        pricing: Pricing { input_per_1k: 0.03, output_per_1k: 0.06 },
        credential_env: None,
    }
}
