use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Completion, CompletionBackend, LlmError, ModelConfig, Usage};
use crate::promptgen::{estimate_tokens, PromptBundle};

pub const DEFAULT_CREDENTIAL_ENV: &str = "NLNETOPS_LLM_KEY";
const TRANSPORT_ATTEMPTS: usize = 3;

/// Chat-completions style HTTP endpoint (`messages` in, `choices` out).
#[derive(Debug, Clone)]
pub struct ChatEndpointBackend {
    client: reqwest::blocking::Client,
    backoff: Duration,
}

impl Default for ChatEndpointBackend {
    fn default() -> Self {
        Self::new(Duration::from_millis(500))
    }
}

impl ChatEndpointBackend {
    /// `backoff` is the first retry delay; it doubles on each transport failure.
    pub fn new(backoff: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("HTTP client builds");
        Self { client, backoff }
    }

    fn request_once(&self, body: &Value, cfg: &ModelConfig, key: &str) -> Result<Value, Attempt> {
        let resp = self
            .client
            .post(&cfg.endpoint)
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        match status.as_u16() {
            200..=299 => serde_json::from_str(&text).map_err(|e| Attempt::Fatal(LlmError::Transport(format!("bad response body: {e}")))),
            401 | 403 => Err(Attempt::Fatal(LlmError::Auth(format!("endpoint answered {status}")))),
            429 => Err(Attempt::Fatal(LlmError::RateLimited(text))),
            400 | 413 if text.contains("context_length") || text.contains("maximum context") => {
                Err(Attempt::Fatal(LlmError::ContextOverflow { estimated: 0, limit: cfg.context_limit }))
            }
            500..=599 => Err(Attempt::Retry(format!("endpoint answered {status}"))),
            _ => Err(Attempt::Fatal(LlmError::Transport(format!("endpoint answered {status}: {text}")))),
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl CompletionBackend for ChatEndpointBackend {
    fn complete_one(&self, bundle: &PromptBundle, cfg: &ModelConfig, attempt: usize) -> Result<Completion, LlmError> {
        let env = cfg.credential_env.as_deref().unwrap_or(DEFAULT_CREDENTIAL_ENV);
        let key = std::env::var(env).ok().filter(|k| !k.is_empty()).ok_or_else(|| LlmError::Auth(format!("credential variable {env} is not set")))?;
        if cfg.endpoint.is_empty() {
            return Err(LlmError::Config(format!("model `{}` has no endpoint", cfg.name)));
        }
        let body = json!({
            "model": cfg.api_model.as_deref().unwrap_or(&cfg.name),
            "messages": bundle.messages,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
        });
        let started = Instant::now();
        let mut delay = self.backoff;
        let mut last = String::new();
        for i in 0..TRANSPORT_ATTEMPTS {
            match self.request_once(&body, cfg, &key) {
                Ok(doc) => {
                    let text = doc["choices"][0]["message"]["content"]
                        .as_str()
                        .ok_or_else(|| LlmError::Transport("response has no message content".into()))?
                        .to_string();
                    let usage = Usage {
                        tokens_in: doc["usage"]["prompt_tokens"].as_u64().unwrap_or(bundle.estimated_tokens as u64),
                        tokens_out: doc["usage"]["completion_tokens"].as_u64().unwrap_or_else(|| estimate_tokens(&text) as u64),
                    };
                    return Ok(Completion { text, usage, latency: started.elapsed(), attempt_index: attempt });
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::warn!(model = %cfg.name, try_index = i, "transport failure: {msg}");
                    last = msg;
                    if i + 1 < TRANSPORT_ATTEMPTS {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(LlmError::Transport(last))
    }
}
