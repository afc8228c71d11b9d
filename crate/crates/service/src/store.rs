use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::session::Session;
use crate::ServiceError;

pub const FEEDBACK_FILE: &str = "feedback.jsonl";

/// Sessions as one JSON file each, replaced atomically on every save, plus
/// an append-only feedback log.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn io(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(format!("{}: {e}", path.display()))
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        let sessions = root.join("sessions");
        std::fs::create_dir_all(&sessions).map_err(|e| io(&sessions, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        // Ids are generated uuids; anything else cannot name a session.
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_hexdigit() || c == '-');
        valid.then(|| self.root.join("sessions").join(format!("{id}.json")))
    }

    pub fn load(&self, id: &str) -> Result<Session, ServiceError> {
        let path = self.path(id).ok_or_else(|| ServiceError::NotFound(format!("session {id}")))?;
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::NotFound(format!("session {id}"))),
            Err(e) => return Err(io(&path, e)),
        };
        serde_json::from_str(&text).map_err(|e| io(&path, e))
    }

    pub fn save(&self, session: &Session) -> Result<(), ServiceError> {
        let path = self.path(&session.id).ok_or_else(|| ServiceError::Internal(format!("bad session id {}", session.id)))?;
        let dir = path.parent().expect("session files live in a directory");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(dir, e))?;
        serde_json::to_writer(&mut tmp, session).map_err(|e| io(&path, e))?;
        tmp.as_file().sync_all().map_err(|e| io(&path, e))?;
        tmp.persist(&path).map_err(|e| io(&path, e))?;
        Ok(())
    }

    pub fn append_feedback(&self, entry: &impl Serialize) -> Result<(), ServiceError> {
        let path = self.root.join(FEEDBACK_FILE);
        let line = serde_json::to_string(entry).map_err(|e| io(&path, e))?;
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| io(&path, e))
    }
}
