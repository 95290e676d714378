use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use cbr_core::{CaseBaseStore, Session};
use tokio::sync::Mutex as AsyncMutex;

use crate::error::{ApiError, ErrorCode};

#[derive(Debug)]
pub struct SessionSlot {
    pub session: Session,
    pub last_used: Instant,
}

pub type SharedSlot = Arc<AsyncMutex<SessionSlot>>;

/// Shared state behind the router: the case-base store and the open sessions.
#[derive(Debug)]
pub struct AppState {
    pub store: Arc<CaseBaseStore>,
    pub default_k: usize,
    pub session_timeout: Duration,
    pub bearer_token: Option<String>,
    sessions: Mutex<HashMap<String, SharedSlot>>,
}

impl AppState {
    pub fn new(store: Arc<CaseBaseStore>, default_k: usize, session_timeout: Duration) -> Self {
        Self {
            store,
            default_k,
            session_timeout,
            bearer_token: None,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_bearer_token(mut self, token: Option<String>) -> Self {
        self.bearer_token = token;
        self
    }

    pub fn insert_session(&self, session: Session) -> SharedSlot {
        let id = session.id().to_string();
        let slot = Arc::new(AsyncMutex::new(SessionSlot {
            session,
            last_used: Instant::now(),
        }));
        self.sessions
            .lock()
            .expect("session map poisoned")
            .insert(id, slot.clone());
        slot
    }

    pub fn session(&self, id: &str) -> Result<SharedSlot, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("session `{id}` not found")))
    }

    pub fn remove_session(&self, id: &str) {
        self.sessions.lock().expect("session map poisoned").remove(id);
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    fn all_slots(&self) -> Vec<(String, SharedSlot)> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Closes sessions idle for longer than the timeout. Sessions busy with a
    /// request are skipped. Returns the number closed.
    pub fn sweep_idle(&self, now: Instant) -> usize {
        let mut closed = 0;
        for (id, slot) in self.all_slots() {
            let Ok(mut guard) = slot.try_lock() else {
                continue;
            };
            if now.saturating_duration_since(guard.last_used) < self.session_timeout {
                continue;
            }
            if let Err(e) = guard.session.close() {
                tracing::warn!(session = %id, error = %e, "closing idle session failed");
            }
            drop(guard);
            self.remove_session(&id);
            closed += 1;
        }
        closed
    }

    /// Closes every open session, flushing retained cases to disk.
    pub async fn close_all_sessions(&self) -> Vec<cbr_core::Error> {
        let mut errors = Vec::new();
        for (id, slot) in self.all_slots() {
            let mut guard = slot.lock().await;
            if let Err(e) = guard.session.close() {
                // already-closed sessions are the only expected failure here
                if !matches!(e, cbr_core::Error::IllegalState { .. }) {
                    errors.push(e);
                }
            }
            drop(guard);
            self.remove_session(&id);
        }
        errors
    }
}
