//! Session persistence: one JSON document per session, replaced atomically
//! on every save, plus the per-session in-flight guard.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use goalflow_core::engine::Session;

use crate::fsutil::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session id {0:?} is not valid")]
    InvalidId(String),
    #[error("session {0:?} does not exist")]
    NotFound(String),
    #[error("session {id:?} is unreadable: {message}")]
    Corrupt { id: String, message: String },
    #[error("session storage: {0}")]
    Io(#[from] std::io::Error),
}

/// Ids are used as file names, so only `[A-Za-z0-9_-]` is accepted.
pub fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    busy: Arc<Mutex<HashSet<String>>>,
}

/// Held while a turn for one session is being processed.
#[derive(Debug)]
pub struct TurnGuard {
    id: String,
    busy: Arc<Mutex<HashSet<String>>>,
}

impl Drop for TurnGuard {
    fn drop(&mut self) {
        self.busy.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.id);
    }
}

impl SessionStore {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        let dir = dir.join("sessions");
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            busy: Arc::default(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf, SessionError> {
        if !valid_id(id) {
            return Err(SessionError::InvalidId(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    pub fn create(&self, now: u64) -> Result<Session, SessionError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(&id, now);
        self.save(&session)?;
        Ok(session)
    }

    pub fn save(&self, session: &Session) -> Result<(), SessionError> {
        let path = self.path(&session.session_id)?;
        let json = serde_json::to_vec_pretty(session).expect("session serializes");
        write_atomic(&path, &json)?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<Session, SessionError> {
        let path = self.path(id)?;
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(SessionError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        let session: Session = serde_json::from_slice(&bytes).map_err(|e| SessionError::Corrupt {
            id: id.to_string(),
            message: e.to_string(),
        })?;
        session.check_turns().map_err(|message| SessionError::Corrupt {
            id: id.to_string(),
            message,
        })?;
        Ok(session)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.path(id).map(|p| p.is_file()).unwrap_or(false)
    }

    /// Claim the session for one turn; `None` while another turn holds it.
    pub fn try_begin_turn(&self, id: &str) -> Option<TurnGuard> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        if !busy.insert(id.to_string()) {
            return None;
        }
        Some(TurnGuard {
            id: id.to_string(),
            busy: self.busy.clone(),
        })
    }
}
