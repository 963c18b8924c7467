//! Application state shared by the HTTP service and the CLI: the current
//! engine snapshot, the session store and the goal file.
//!
//! Readers clone the `Arc<Engine>` and keep using it for the whole turn.
//! Mutations (new goals, new documents) are serialized by one writer lock,
//! build a fresh engine and swap it in.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use goalflow_core::dialogue::{DialogueState, Speaker};
use goalflow_core::dst::BeliefState;
use goalflow_core::engine::{AssistantReply, Engine, Session, StepView, TurnDiagnostics};
use goalflow_core::goal::{GoalWorkflow, Paradigm, RepoError, Repository, Violation};
use goalflow_core::nlu::{Intent, KeywordLists};
use goalflow_core::ops::OperationalStore;
use goalflow_core::qa::{Document, Hit, KbError, KbIndex};
use goalflow_core::respond::TemplateSet;
use goalflow_core::retriever::{GoalIndex, HashedTrigramEmbedder, RetrieverConfig};
use goalflow_core::PolicyAction;
use serde::{Deserialize, Serialize};

use crate::assets;
use crate::config::Config;
use crate::corpus::{load_documents, load_store, markdown_document};
use crate::nl2goal::{self, Nl2GoalError, Translation};
use crate::repo_yaml::{self, RepoFileError};
use crate::sessions::{SessionError, SessionStore};

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("a turn for session {0:?} is already in progress")]
    Busy(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{message}")]
    Unprocessable { message: String, violations: Vec<Violation> },
    #[error("{0}")]
    Internal(String),
}

impl AppError {
    pub fn status(&self) -> u16 {
        match self {
            Self::NotFound(_) => 404,
            Self::BadRequest(_) => 400,
            Self::Busy(_) | Self::Conflict(_) => 409,
            Self::Unprocessable { .. } => 422,
            Self::Internal(_) => 500,
        }
    }
}

impl From<SessionError> for AppError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::InvalidId(_) | SessionError::NotFound(_) => Self::NotFound(e.to_string()),
            other => Self::Internal(other.to_string()),
        }
    }
}

/// Reply to one posted message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub session_id: String,
    /// Index of the assistant turn in the session transcript.
    pub turn_index: usize,
    pub reply: String,
    pub intent: Intent,
    pub action: Option<PolicyAction>,
    pub state: DialogueState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BeliefState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub citations: Vec<String>,
    pub diagnostics: TurnDiagnostics,
}

impl TurnResponse {
    /// Wrap the reply to the turn just appended to `session`.
    pub fn new(session: &Session, reply: AssistantReply) -> Self {
        Self {
            session_id: session.session_id.clone(),
            turn_index: session.turns.len().saturating_sub(1),
            reply: reply.text,
            intent: reply.intent,
            action: reply.action,
            state: reply.state,
            belief: reply.belief,
            step: reply.step,
            citations: reply.citations,
            diagnostics: reply.diagnostics,
        }
    }
}

/// A stored session plus the progress views the client renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: Session,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BeliefState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    pub timestamp: u64,
}

/// Annotation-ready export of one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub provider_kind: String,
    pub turn_count: usize,
    pub final_state: DialogueState,
    pub turns: Vec<TranscriptTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSummary {
    pub paradigm: Paradigm,
    #[serde(flatten)]
    pub workflow: GoalWorkflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub goal_count: usize,
    pub kb_doc_count: usize,
    pub provider_kind: String,
}

fn read(path: &std::path::Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Engine from configuration. Unset paths mean empty inputs, or the bundled
/// demo assets when the configuration is the demo.
pub fn build_engine(cfg: &Config) -> anyhow::Result<Engine> {
    let repo = match &cfg.goals {
        Some(p) if p.exists() => repo_yaml::load(p)?,
        Some(p) => Repository::new().with_source(goalflow_core::goal::RepoSource::File(p.display().to_string())),
        None if cfg.demo => repo_yaml::parse_repository(assets::GOALS)?,
        None => Repository::new(),
    };
    let docs = match &cfg.kb {
        Some(p) => load_documents(p)?,
        None if cfg.demo => assets::KB
            .iter()
            .map(|(stem, text)| markdown_document(stem, text, &format!("kb/{stem}.md")))
            .collect(),
        None => Vec::new(),
    };
    let kb = KbIndex::ingest(docs).map_err(|e| anyhow::anyhow!("knowledge base: {e}"))?;
    let store = match &cfg.store {
        Some(p) => load_store(p)?,
        None if cfg.demo => OperationalStore::from_json(assets::STORE).map_err(|e| anyhow::anyhow!("bundled store: {e}"))?,
        None => OperationalStore::default(),
    };
    let templates = match &cfg.templates {
        Some(p) => TemplateSet::parse(&read(p)?).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?,
        None if cfg.demo => TemplateSet::parse(assets::TEMPLATES).map_err(|e| anyhow::anyhow!("bundled templates: {e}"))?,
        None => TemplateSet::defaults(),
    };
    let keywords = match &cfg.keywords {
        Some(p) => KeywordLists::parse(&read(p)?).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?,
        None if cfg.demo => KeywordLists::parse(assets::KEYWORDS).map_err(|e| anyhow::anyhow!("bundled keywords: {e}"))?,
        None => KeywordLists::default(),
    };
    let r = cfg.retriever;
    let index = GoalIndex::build(
        &repo,
        Arc::new(HashedTrigramEmbedder::new(r.embedding_dim)),
        RetrieverConfig { alpha: r.alpha, tau: r.tau },
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let llm = crate::provider::build(cfg)?;
    Ok(Engine::new(repo, kb, store, llm)
        .with_index(index)
        .with_templates(templates)
        .with_keywords(keywords))
}

#[derive(Debug)]
pub struct App {
    engine: RwLock<Arc<Engine>>,
    writer: Mutex<()>,
    sessions: SessionStore,
    goals_path: Option<PathBuf>,
}

impl App {
    pub fn new(engine: Engine, sessions: SessionStore, goals_path: Option<PathBuf>) -> Self {
        Self {
            engine: RwLock::new(Arc::new(engine)),
            writer: Mutex::new(()),
            sessions,
            goals_path,
        }
    }

    pub fn from_config(cfg: &Config) -> anyhow::Result<Self> {
        let engine = build_engine(cfg)?;
        let sessions = SessionStore::open(&cfg.data_dir)
            .map_err(|e| anyhow::anyhow!("data directory {}: {e}", cfg.data_dir.display()))?;
        Ok(Self::new(engine, sessions, cfg.goals.clone()))
    }

    /// The current snapshot.
    pub fn engine(&self) -> Arc<Engine> {
        self.engine.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn swap(&self, engine: Engine) {
        *self.engine.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(engine);
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn create_session(&self) -> Result<Session, AppError> {
        Ok(self.sessions.create(now_ms())?)
    }

    /// Load and check a session against the current repository.
    fn load(&self, id: &str, engine: &Engine) -> Result<Session, AppError> {
        let session = self.sessions.load(id)?;
        session
            .dialogue_state
            .check(engine.repo())
            .map_err(|e| AppError::Internal(format!("session {id:?} has an invalid dialogue state: {e}")))?;
        Ok(session)
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, AppError> {
        let engine = self.engine();
        let session = self.load(id, &engine)?;
        Ok(SessionView {
            step: engine.step_view(&session.dialogue_state),
            belief: session.dialogue_state.belief.clone(),
            session,
        })
    }

    /// One turn under the session's in-flight guard; the session is saved
    /// before the reply is returned.
    pub fn post_message(&self, id: &str, text: &str) -> Result<TurnResponse, AppError> {
        if !self.sessions.exists(id) {
            return Err(AppError::NotFound(format!("session {id:?} does not exist")));
        }
        let _guard = self.sessions.try_begin_turn(id).ok_or_else(|| AppError::Busy(id.to_string()))?;
        let engine = self.engine();
        let mut session = self.load(id, &engine)?;
        let reply = engine
            .handle_turn(&mut session, text, now_ms())
            .map_err(|e| AppError::BadRequest(e.to_string()))?;
        self.sessions.save(&session)?;
        Ok(TurnResponse::new(&session, reply))
    }

    pub fn export(&self, id: &str) -> Result<Transcript, AppError> {
        let engine = self.engine();
        let s = self.load(id, &engine)?;
        Ok(Transcript {
            turn_count: s.turns.len(),
            turns: s
                .turns
                .iter()
                .map(|t| TranscriptTurn {
                    index: t.index,
                    speaker: t.speaker,
                    text: t.text.clone(),
                    intent: t.intent.as_ref().map(|i| i.label.name().to_string()),
                    timestamp: t.timestamp,
                })
                .collect(),
            session_id: s.session_id,
            created_at: s.created_at,
            updated_at: s.updated_at,
            provider_kind: engine.llm().kind().to_string(),
            final_state: s.dialogue_state,
        })
    }

    pub fn goals(&self) -> Vec<GoalSummary> {
        self.engine()
            .repo()
            .workflows()
            .iter()
            .map(|w| GoalSummary {
                paradigm: w.paradigm(),
                workflow: w.clone(),
            })
            .collect()
    }

    /// Validate a YAML document and add every workflow in it. All or
    /// nothing: one bad entry rejects the whole document.
    pub fn add_goals(&self, yaml: &str) -> Result<Vec<String>, AppError> {
        let incoming = repo_yaml::parse_repository(yaml).map_err(|e| match e {
            RepoFileError::Invalid(violations) => AppError::Unprocessable {
                message: "goal document has schema violations".into(),
                violations,
            },
            other => AppError::Unprocessable {
                message: other.to_string(),
                violations: Vec::new(),
            },
        })?;
        if incoming.is_empty() {
            return Err(AppError::Unprocessable {
                message: "goal document holds no workflows".into(),
                violations: Vec::new(),
            });
        }
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.engine();
        let mut repo = current.repo().clone();
        for w in incoming.workflows() {
            repo = repo.add_workflow(w.clone()).map_err(|e| match e {
                RepoError::DuplicateId(id) => AppError::Conflict(format!("a workflow with id {id:?} already exists")),
                RepoError::Invalid(violations) => AppError::Unprocessable {
                    message: "workflow is invalid".into(),
                    violations,
                },
            })?;
        }
        if let Some(path) = &self.goals_path {
            repo_yaml::save(path, &repo).map_err(|e| AppError::Internal(e.to_string()))?;
        }
        let next = (*current)
            .clone()
            .with_repository(repo)
            .map_err(|e| AppError::Internal(e.to_string()))?;
        self.swap(next);
        Ok(incoming.workflows().iter().map(|w| w.id.clone()).collect())
    }

    pub fn translate(&self, text: &str, offline: bool) -> Result<Translation, AppError> {
        let result = if offline {
            nl2goal::offline(text)
        } else {
            nl2goal::translate(text, self.engine().llm())
        };
        result.map_err(|e| match e {
            Nl2GoalError::EmptyDescription => AppError::BadRequest(e.to_string()),
            Nl2GoalError::Invalid(violations) => AppError::Unprocessable {
                message: "translated workflow is invalid".into(),
                violations,
            },
            other => AppError::Unprocessable {
                message: other.to_string(),
                violations: Vec::new(),
            },
        })
    }

    pub fn ingest(&self, docs: Vec<Document>) -> Result<usize, AppError> {
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.engine();
        let mut all = current.kb().documents().to_vec();
        all.extend(docs);
        let kb = KbIndex::ingest(all).map_err(|e| match e {
            KbError::DuplicateDocId(_) => AppError::Conflict(e.to_string()),
            KbError::EmptyBody(_) => AppError::BadRequest(e.to_string()),
        })?;
        let count = kb.doc_count();
        self.swap((*current).clone().with_kb(kb));
        Ok(count)
    }

    pub fn search(&self, query: &str, k: usize) -> Vec<Hit> {
        self.engine().kb().search(query, k)
    }

    pub fn health(&self) -> Health {
        let e = self.engine();
        Health {
            status: "ok".into(),
            goal_count: e.repo().len(),
            kb_doc_count: e.kb().doc_count(),
            provider_kind: e.llm().kind().into(),
        }
    }
}
