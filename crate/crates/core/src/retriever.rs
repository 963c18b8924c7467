//! Composite goal retriever.
//!
//! Every guidance workflow contributes one target for its goal description
//! and one per step; slot-filling workflows contribute only their goal
//! description. A query is scored against every target with a blend of
//! token overlap and embedding cosine, and the best target decides whether
//! a high-level goal, a sub-goal, or nothing was triggered.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::goal::{Paradigm, Repository};
use crate::text::{content_tokens, overlap_score, token_set};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_TAU: f64 = 0.45;
pub const DEFAULT_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedError(pub String);

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "embedding failed: {}", self.0)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Hashed character-trigram frequencies over content tokens, L2-normalized.
///
/// Each token is padded with `#` on both sides before trigrams are taken, so
/// `data` yields `#da`, `dat`, `ata`, `ta#`. Trigrams are bucketed with
/// 32-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct HashedTrigramEmbedder {
    dim: usize,
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in bytes {
        h ^= u32::from(*b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

impl EmbeddingProvider for HashedTrigramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        for token in content_tokens(text) {
            let padded: Vec<char> = core::iter::once('#')
                .chain(token.chars())
                .chain(core::iter::once('#'))
                .collect();
            let mut buf = [0u8; 12];
            for w in padded.windows(3) {
                let mut len = 0;
                for c in w {
                    len += c.encode_utf8(&mut buf[len..]).len();
                }
                v[fnv1a(&buf[..len]) as usize % self.dim] += 1.0;
            }
        }
        normalize(&mut v);
        Ok(v)
    }
}

fn normalize(v: &mut [f64]) {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Cosine similarity; zero when either side has no mass.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieverConfig {
    pub alpha: f64,
    pub tau: f64,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TargetRef {
    pub goal_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MatchTarget {
    pub target: TargetRef,
    pub text: String,
    tokens: BTreeSet<String>,
    embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MatchKind {
    HighLevel { goal_id: String },
    SubGoal { goal_id: String, step_index: usize },
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub target: TargetRef,
    pub lexical: f64,
    pub semantic: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub kind: MatchKind,
    pub lexical_score: f64,
    pub semantic_score: f64,
    pub combined_score: f64,
    /// Every target, best first.
    pub candidates: Vec<Candidate>,
}

impl MatchResult {
    pub fn no_match() -> Self {
        Self {
            kind: MatchKind::NoMatch,
            lexical_score: 0.0,
            semantic_score: 0.0,
            combined_score: 0.0,
            candidates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetrieveError {
    EmptyQuery,
    Embedding(EmbedError),
}

impl fmt::Display for RetrieveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyQuery => write!(f, "query is empty"),
            Self::Embedding(e) => write!(f, "{e}"),
        }
    }
}

/// Immutable match index over a repository snapshot.
#[derive(Clone)]
pub struct GoalIndex {
    targets: Vec<MatchTarget>,
    embedder: Arc<dyn EmbeddingProvider>,
    config: RetrieverConfig,
}

impl fmt::Debug for GoalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GoalIndex")
            .field("targets", &self.targets.len())
            .field("config", &self.config)
            .finish()
    }
}

/// Targets in index order: for each workflow, its description, then its
/// steps (guidance only).
pub fn enumerate_targets(repo: &Repository) -> Vec<(TargetRef, String)> {
    let mut out = Vec::new();
    for w in repo.workflows() {
        out.push((
            TargetRef {
                goal_id: w.id.clone(),
                step_index: None,
            },
            w.goal.clone(),
        ));
        if w.paradigm() == Paradigm::Guidance {
            for s in &w.steps {
                out.push((
                    TargetRef {
                        goal_id: w.id.clone(),
                        step_index: Some(s.index),
                    },
                    format!("{} {}", s.name, s.description),
                ));
            }
        }
    }
    out
}

impl GoalIndex {
    pub fn build(
        repo: &Repository,
        embedder: Arc<dyn EmbeddingProvider>,
        config: RetrieverConfig,
    ) -> Result<Self, EmbedError> {
        let targets = enumerate_targets(repo)
            .into_iter()
            .map(|(target, text)| {
                let embedding = embedder.embed(&text)?;
                Ok(MatchTarget {
                    target,
                    tokens: token_set(&text),
                    embedding,
                    text,
                })
            })
            .collect::<Result<Vec<_>, EmbedError>>()?;
        Ok(Self {
            targets,
            embedder,
            config,
        })
    }

    pub fn with_default_embedder(repo: &Repository) -> Self {
        Self::build(repo, Arc::new(HashedTrigramEmbedder::default()), RetrieverConfig::default())
            .expect("hashed embedder is infallible")
    }

    /// A fresh index over `repo` with this index's embedder and config.
    pub fn rebuild(&self, repo: &Repository) -> Result<Self, EmbedError> {
        Self::build(repo, self.embedder.clone(), self.config)
    }

    pub fn targets(&self) -> &[MatchTarget] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn config(&self) -> RetrieverConfig {
        self.config
    }

    pub fn with_config(mut self, config: RetrieverConfig) -> Self {
        self.config = config;
        self
    }

    /// Score `query` against every target and pick the winner.
    pub fn match_query(&self, query: &str) -> Result<MatchResult, RetrieveError> {
        if query.trim().is_empty() {
            return Err(RetrieveError::EmptyQuery);
        }
        let q_tokens = token_set(query);
        let q_emb = self.embedder.embed(query).map_err(RetrieveError::Embedding)?;
        let alpha = self.config.alpha;
        let mut scored: Vec<(usize, Candidate)> = self
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let lexical = overlap_score(&q_tokens, &t.tokens);
                let semantic = ((cosine(&q_emb, &t.embedding) + 1.0) / 2.0).clamp(0.0, 1.0);
                let combined = (alpha * lexical + (1.0 - alpha) * semantic).clamp(0.0, 1.0);
                (
                    i,
                    Candidate {
                        target: t.target.clone(),
                        lexical,
                        semantic,
                        combined,
                    },
                )
            })
            .collect();
        scored.sort_by(|a, b| rank_order(a.0, &a.1, a.1.combined, b.0, &b.1, b.1.combined));
        let candidates: Vec<Candidate> = scored.into_iter().map(|(_, c)| c).collect();
        let Some(best) = candidates.first() else {
            return Ok(MatchResult::no_match());
        };
        let kind = if best.combined < self.config.tau {
            MatchKind::NoMatch
        } else {
            match best.target.step_index {
                None => MatchKind::HighLevel {
                    goal_id: best.target.goal_id.clone(),
                },
                Some(step_index) => MatchKind::SubGoal {
                    goal_id: best.target.goal_id.clone(),
                    step_index,
                },
            }
        };
        Ok(MatchResult {
            kind,
            lexical_score: best.lexical,
            semantic_score: best.semantic,
            combined_score: best.combined,
            candidates,
        })
    }
}

/// Higher score first; at equal scores goal descriptions outrank steps, then
/// declaration order.
pub fn rank_order(ia: usize, a: &Candidate, sa: f64, ib: usize, b: &Candidate, sb: f64) -> Ordering {
    sb.total_cmp(&sa)
        .then_with(|| a.target.step_index.is_some().cmp(&b.target.step_index.is_some()))
        .then_with(|| ia.cmp(&ib))
}

impl MatchKind {
    pub fn goal_id(&self) -> Option<&str> {
        match self {
            Self::HighLevel { goal_id } | Self::SubGoal { goal_id, .. } => Some(goal_id),
            Self::NoMatch => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::HighLevel { goal_id } => format!("high_level({goal_id})"),
            Self::SubGoal { goal_id, step_index } => format!("sub_goal({goal_id}, {step_index})"),
            Self::NoMatch => "no_match".to_string(),
        }
    }
}
