//! HTTP interface to the EHAZOP session engine.
//!
//! Every path lives under `/v1/`. Commands against one session are
//! serialized behind that session's lock and applied in arrival order; each
//! accepted event is made durable in the session journal (when the session
//! has one) before it is committed and fanned out to event-stream
//! subscribers. See `docs/API.md` for paths and payload keys.

mod error;
mod routes;

use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use ehazop_core::formats::{self, JournalWriter};
use ehazop_core::model::EnumerationConfig;
use ehazop_core::{Command, FormatError, HazardTaxonomy, Session, SessionEvent, StudyDocument};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, Mutex};

pub use error::{ApiError, ErrorCode};
pub use routes::router;

/// Events buffered per subscriber before it is considered lagging. A
/// lagging subscriber catches up from the session's event log.
const FANOUT_CAPACITY: usize = 256;

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Shared service state: registered studies and live sessions.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    studies: RwLock<HashMap<String, StudyDocument>>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    next_study: AtomicU64,
    next_session: AtomicU64,
    journal_dir: Option<PathBuf>,
    clock: Clock,
}

pub(crate) struct SessionHandle {
    pub(crate) study_id: String,
    pub(crate) core: Mutex<SessionCore>,
    pub(crate) fanout: broadcast::Sender<SessionEvent>,
}

pub(crate) struct SessionCore {
    pub(crate) session: Session,
    pub(crate) writer: Option<JournalWriter>,
    /// Set when a journal write failed; the file may end in a partial line,
    /// so no further commands are accepted for this session.
    pub(crate) poisoned: bool,
    pub(crate) replies: HashMap<String, (Command, Value)>,
}

impl Default for AppState {
    fn default() -> Self {
        Self::new(None)
    }
}

impl AppState {
    /// Sessions get a journal file in `journal_dir` when one is given, and
    /// live in memory only otherwise.
    pub fn new(journal_dir: Option<PathBuf>) -> Self {
        Self::with_clock(journal_dir, Arc::new(Utc::now))
    }

    pub fn with_clock(journal_dir: Option<PathBuf>, clock: Clock) -> Self {
        Self {
            inner: Arc::new(Inner {
                studies: RwLock::default(),
                sessions: RwLock::default(),
                next_study: AtomicU64::new(1),
                next_session: AtomicU64::new(1),
                journal_dir,
                clock,
            }),
        }
    }

    pub(crate) fn now(&self) -> DateTime<Utc> {
        (self.inner.clock)()
    }

    /// Registers a validated study and returns its id.
    pub fn add_study(&self, study: StudyDocument) -> String {
        let id = format!("study-{}", self.inner.next_study.fetch_add(1, Ordering::Relaxed));
        self.inner
            .studies
            .write()
            .expect("studies lock")
            .insert(id.clone(), study);
        id
    }

    pub fn study(&self, id: &str) -> Result<StudyDocument, ApiError> {
        self.inner
            .studies
            .read()
            .expect("studies lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("study", id))
    }

    pub(crate) fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn allocate_session_id(&self) -> (String, Option<PathBuf>) {
        loop {
            let id = format!(
                "session-{}",
                self.inner.next_session.fetch_add(1, Ordering::Relaxed)
            );
            match &self.inner.journal_dir {
                None => return (id, None),
                Some(dir) => {
                    let path = dir.join(format!("{id}.journal"));
                    if !path.exists() {
                        return (id, Some(path));
                    }
                }
            }
        }
    }

    fn insert_session(&self, id: String, study_id: String, session: Session, writer: Option<JournalWriter>) {
        let (fanout, _) = broadcast::channel(FANOUT_CAPACITY);
        let handle = SessionHandle {
            study_id,
            core: Mutex::new(SessionCore {
                session,
                writer,
                poisoned: false,
                replies: HashMap::new(),
            }),
            fanout,
        };
        self.inner
            .sessions
            .write()
            .expect("sessions lock")
            .insert(id, Arc::new(handle));
    }

    /// Starts a session over a registered study. `config` defaults to the
    /// study's own enumeration config.
    pub fn start_session(
        &self,
        study_id: &str,
        config: Option<EnumerationConfig>,
    ) -> Result<String, ApiError> {
        let study = self.study(study_id)?;
        let config = config.unwrap_or(study.enumeration_config);
        let session = Session::start(study, HazardTaxonomy::base_catalog(), config, self.now())?;
        let (id, path) = self.allocate_session_id();
        let writer = path.map(|p| JournalWriter::create(p, &session)).transpose()?;
        self.insert_session(id.clone(), study_id.to_string(), session, writer);
        Ok(id)
    }

    /// Loads an existing journal, locks it for appending and serves it as a
    /// session. Returns `(study id, session id)`.
    pub fn open_journal(&self, path: impl AsRef<Path>) -> Result<(String, String), FormatError> {
        let (writer, journal) = JournalWriter::open(path)?;
        let session = journal.replay()?;
        let study_id = self.add_study(session.study().clone());
        let (id, _) = self.allocate_session_id();
        self.insert_session(id.clone(), study_id.clone(), session, Some(writer));
        Ok((study_id, id))
    }

    /// Loads a study file, or a journal when the file is one.
    pub fn load(&self, path: impl AsRef<Path>) -> Result<Loaded, FormatError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let first = text.lines().next().unwrap_or_default();
        let is_journal = serde_json::from_str::<Value>(first)
            .ok()
            .and_then(|v| v.get("journal").and_then(Value::as_str).map(str::to_owned))
            .is_some_and(|magic| magic == formats::JOURNAL_MAGIC);
        if is_journal {
            let (study_id, session_id) = self.open_journal(path)?;
            Ok(Loaded::Journal { study_id, session_id })
        } else {
            let study = formats::parse_study(&text, Some(path))?;
            Ok(Loaded::Study {
                study_id: self.add_study(study),
            })
        }
    }
}

/// What [`AppState::load`] registered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Loaded {
    Study { study_id: String },
    Journal { study_id: String, session_id: String },
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
