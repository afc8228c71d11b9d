use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Completion, CompletionBackend, LlmError, ModelConfig, Usage};
use crate::promptgen::PromptBundle;

/// One recorded response, as stored in a fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub attempt: usize,
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

/// SHA-256 over the model name and the bundle's canonical rendering, hex.
pub fn fixture_key(model: &str, bundle: &PromptBundle) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update(b"\n");
    h.update(bundle.canonical_rendering().as_bytes());
    hex::encode(h.finalize())
}

/// Answers from recorded responses; an unknown key is an error.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    records: HashMap<(String, usize), FixtureRecord>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        Self { records: records.into_iter().map(|r| ((r.key.clone(), r.attempt), r)).collect() }
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let records: Vec<FixtureRecord> = serde_json::from_str(text).map_err(|e| LlmError::Parse(e.to_string()))?;
        Ok(Self::from_records(records))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Loads and merges several fixture files; later files win on duplicate keys.
    pub fn load_all<P: AsRef<Path>>(paths: &[P]) -> Result<Self, LlmError> {
        let mut merged = Self::default();
        for p in paths {
            merged.records.extend(Self::load(p.as_ref())?.records);
        }
        Ok(merged)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete_one(&self, bundle: &PromptBundle, cfg: &ModelConfig, attempt: usize) -> Result<Completion, LlmError> {
        let key = fixture_key(&cfg.name, bundle);
        let rec = self
            .records
            .get(&(key.clone(), attempt))
            .ok_or(LlmError::FixtureMiss { key, attempt })?;
        Ok(Completion {
            text: rec.text.clone(),
            usage: Usage { tokens_in: rec.tokens_in, tokens_out: rec.tokens_out },
            latency: Duration::ZERO,
            attempt_index: attempt,
        })
    }
}

/// Passes calls through to another backend and appends every response
/// to a fixture file, keyed like [`ReplayBackend`] expects.
pub struct RecordingBackend {
    inner: Arc<dyn CompletionBackend>,
    path: PathBuf,
    records: Mutex<Vec<FixtureRecord>>,
}

impl RecordingBackend {
    /// Existing records in `path` are kept and extended.
    pub fn new(inner: Arc<dyn CompletionBackend>, path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        let records = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| LlmError::Parse(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| LlmError::Parse(e.to_string()))?
        } else {
            Vec::new()
        };
        Ok(Self { inner, path, records: Mutex::new(records) })
    }
}

impl CompletionBackend for RecordingBackend {
    fn complete_one(&self, bundle: &PromptBundle, cfg: &ModelConfig, attempt: usize) -> Result<Completion, LlmError> {
        let completion = self.inner.complete_one(bundle, cfg, attempt)?;
        let record = FixtureRecord {
            key: fixture_key(&cfg.name, bundle),
            attempt,
            text: completion.text.clone(),
            tokens_in: completion.usage.tokens_in,
            tokens_out: completion.usage.tokens_out,
        };
        let mut records = self.records.lock().expect("fixture lock");
        records.retain(|r| !(r.key == record.key && r.attempt == record.attempt));
        records.push(record);
        records.sort_by(|a, b| (&a.key, a.attempt).cmp(&(&b.key, b.attempt)));
        let text = serde_json::to_string_pretty(&*records).expect("records serialize");
        std::fs::write(&self.path, text).map_err(|e| LlmError::Transport(format!("writing {}: {e}", self.path.display())))?;
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{test_model, Gateway};
    use crate::promptgen::{Application, Message, Role};
    use crate::sandbox::ExecBackendKind;

    fn bundle(text: &str) -> PromptBundle {
        PromptBundle {
            application: Application::Malt,
            backend: ExecBackendKind::GraphApi,
            messages: vec![Message { role: Role::User, content: text.into() }],
            estimated_tokens: 1,
        }
    }

    #[test]
    fn empty_fixture_misses() {
        let gw = Gateway::new(Arc::new(ReplayBackend::parse("[]").unwrap()));
        assert!(matches!(gw.complete(&bundle("x"), &test_model("m"), 1), Err(LlmError::FixtureMiss { .. })));
    }

    #[test]
    fn keys_separate_one_character_changes() {
        assert_ne!(fixture_key("m", &bundle("count nodes")), fixture_key("m", &bundle("count nodez")));
        assert_ne!(fixture_key("m", &bundle("q")), fixture_key("n", &bundle("q")));
        assert_eq!(fixture_key("m", &bundle("q")).len(), 64);
    }

    #[test]
    fn five_attempts_in_order() {
        let b = bundle("q");
        let key = fixture_key("m", &b);
        let recs = (0..5).map(|i| FixtureRecord { key: key.clone(), attempt: i, text: format!("r{i}"), tokens_in: 3, tokens_out: i as u64 });
        let gw = Gateway::new(Arc::new(ReplayBackend::from_records(recs)));
        let out = gw.complete(&b, &test_model("m"), 5).unwrap();
        assert_eq!(out.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(), vec!["r0", "r1", "r2", "r3", "r4"]);
        assert!(matches!(gw.complete(&b, &test_model("m"), 6), Err(LlmError::FixtureMiss { attempt: 5, .. })));
    }

    struct Fixed;
    impl CompletionBackend for Fixed {
        fn complete_one(&self, _: &PromptBundle, _: &ModelConfig, attempt: usize) -> Result<Completion, LlmError> {
            Ok(Completion { text: "```python\nresult = 1\n```".into(), usage: Usage { tokens_in: 11, tokens_out: 7 }, latency: Duration::from_millis(5), attempt_index: attempt })
        }
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.json");
        let rec = Gateway::new(Arc::new(RecordingBackend::new(Arc::new(Fixed), &path).unwrap()));
        let live = rec.complete(&bundle("q"), &test_model("m"), 2).unwrap();
        let replay = Gateway::new(Arc::new(ReplayBackend::load(&path).unwrap()));
        let again = replay.complete(&bundle("q"), &test_model("m"), 2).unwrap();
        for (a, b) in live.iter().zip(&again) {
            assert_eq!((&a.text, a.usage, a.attempt_index), (&b.text, b.usage, b.attempt_index));
        }
    }
}
