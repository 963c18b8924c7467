//! Product documentation knowledge base and product-knowledge answers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::{render, LlmGateway, TemplateName};
use crate::text::{content_tokens, overlap_score, token_set};

pub const DEFAULT_TOP_K: usize = 3;
/// Share of answer content tokens that must appear in the retrieved
/// passages for an answer to count as grounded.
pub const GROUNDING_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub source_uri: String,
}

impl Document {
    pub fn new(doc_id: &str, title: &str, body: &str) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            title: title.to_string(),
            body: body.to_string(),
            source_uri: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KbError {
    DuplicateDocId(String),
    EmptyBody(String),
}

impl fmt::Display for KbError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateDocId(id) => write!(f, "document id {id:?} is ingested twice"),
            Self::EmptyBody(id) => write!(f, "document {id:?} has an empty body"),
        }
    }
}

#[derive(Debug, Clone)]
struct Passage {
    doc: usize,
    text: String,
    tokens: BTreeSet<String>,
}

/// Inverted index over paragraph passages. Each passage is indexed together
/// with its document title.
#[derive(Debug, Clone, Default)]
pub struct KbIndex {
    docs: Vec<Document>,
    passages: Vec<Passage>,
    postings: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub title: String,
    pub passage: String,
    pub score: f64,
}

fn paragraphs(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
        } else {
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(line.trim());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl KbIndex {
    pub fn ingest(corpus: Vec<Document>) -> Result<Self, KbError> {
        let mut index = Self::default();
        for doc in corpus {
            if index.docs.iter().any(|d| d.doc_id == doc.doc_id) {
                return Err(KbError::DuplicateDocId(doc.doc_id));
            }
            if doc.body.trim().is_empty() {
                return Err(KbError::EmptyBody(doc.doc_id));
            }
            let doc_idx = index.docs.len();
            let title_tokens = token_set(&doc.title);
            for text in paragraphs(&doc.body) {
                let mut tokens = token_set(&text);
                tokens.extend(title_tokens.iter().cloned());
                let p = index.passages.len();
                for t in &tokens {
                    index.postings.entry(t.clone()).or_default().push(p);
                }
                index.passages.push(Passage {
                    doc: doc_idx,
                    text,
                    tokens,
                });
            }
            index.docs.push(doc);
        }
        Ok(index)
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Top `k` passages by query-token overlap; passages sharing no token
    /// with the query are never returned. Ties keep ingestion order.
    pub fn search(&self, query: &str, k: usize) -> Vec<Hit> {
        let q = token_set(query);
        let mut candidates: BTreeSet<usize> = BTreeSet::new();
        for t in &q {
            if let Some(list) = self.postings.get(t) {
                candidates.extend(list.iter().copied());
            }
        }
        let mut scored: Vec<(usize, f64)> = candidates
            .into_iter()
            .map(|p| (p, overlap_score(&q, &self.passages[p].tokens)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(p, score)| {
                let passage = &self.passages[p];
                let doc = &self.docs[passage.doc];
                Hit {
                    doc_id: doc.doc_id.clone(),
                    title: doc.title.clone(),
                    passage: passage.text.clone(),
                    score,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductSubgroup {
    PointedLearning,
    OpenDiscovery,
    Troubleshooting,
}

const TROUBLESHOOTING_CUES: &[&str] = &[
    "error", "errors", "fail", "failed", "failing", "fails", "broken", "issue", "issues", "fix",
    "troubleshoot", "wrong", "stuck", "missing",
];
const DISCOVERY_CUES: &[&str] = &["explore", "ideas", "ways", "options", "possible", "overview", "capabilities"];

pub fn product_subgroup(question: &str) -> ProductSubgroup {
    let words = crate::text::raw_tokens(question);
    if words.iter().any(|w| TROUBLESHOOTING_CUES.contains(&w.as_str())) {
        ProductSubgroup::Troubleshooting
    } else if words.iter().any(|w| DISCOVERY_CUES.contains(&w.as_str()))
        || words.windows(2).any(|w| w[0] == "what" && w[1] == "can")
    {
        ProductSubgroup::OpenDiscovery
    } else {
        ProductSubgroup::PointedLearning
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AnswerBundle {
    pub text: String,
    #[serde(default)]
    pub citations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql_explanation: Option<String>,
    pub grounded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup: Option<ProductSubgroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl AnswerBundle {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }

    /// The answer followed by the SQL and its explanation when present.
    pub fn display_text(&self) -> String {
        let mut out = self.text.clone();
        if let Some(sql) = &self.sql_text {
            out.push_str("\nQuery: ");
            out.push_str(sql);
        }
        if let Some(expl) = &self.sql_explanation {
            out.push_str("\nExplanation: ");
            out.push_str(expl);
        }
        out
    }
}

/// Share of the answer's content tokens found in the passages.
pub fn grounding_overlap(answer: &str, passages: &[Hit]) -> f64 {
    let answer_tokens = content_tokens(answer);
    if answer_tokens.is_empty() {
        return 0.0;
    }
    let mut support: BTreeSet<String> = BTreeSet::new();
    for h in passages {
        support.extend(token_set(&h.passage));
        support.extend(token_set(&h.title));
    }
    let found = answer_tokens.iter().filter(|t| support.contains(*t)).count();
    found as f64 / answer_tokens.len() as f64
}

pub const NO_DOCUMENTATION: &str = "I could not find any documentation that covers this question.";

/// Retrieve, answer (model-generated when available, extractive otherwise),
/// cite, and check grounding.
pub fn answer_product(question: &str, kb: &KbIndex, llm: &dyn LlmGateway) -> AnswerBundle {
    let subgroup = Some(product_subgroup(question));
    let hits = kb.search(question, DEFAULT_TOP_K);
    if hits.is_empty() {
        return AnswerBundle {
            text: NO_DOCUMENTATION.to_string(),
            grounded: false,
            subgroup,
            ..AnswerBundle::default()
        };
    }
    let mut citations: Vec<String> = Vec::new();
    for h in &hits {
        if !citations.contains(&h.doc_id) {
            citations.push(h.doc_id.clone());
        }
    }
    let passages: Vec<String> = hits
        .iter()
        .map(|h| format!("[{}] {}: {}", h.doc_id, h.title, h.passage))
        .collect();
    let passages = passages.join("\n");
    let mut diagnostics = Vec::new();
    let generated = render(TemplateName::ProductQa, &[("passages", &passages), ("question", question)])
        .ok()
        .map(|prompt| llm.complete(TemplateName::ProductQa, &prompt));
    let (text, cited) = match generated {
        Some(Ok(text)) if !text.trim().is_empty() => (text.trim().to_string(), citations),
        other => {
            if let Some(Err(e)) = other {
                diagnostics.push(crate::gateway::describe_error(&e));
            }
            (hits[0].passage.clone(), alloc::vec![hits[0].doc_id.clone()])
        }
    };
    let grounded = grounding_overlap(&text, &hits) >= GROUNDING_THRESHOLD;
    AnswerBundle {
        text,
        citations: cited,
        grounded,
        subgroup,
        diagnostics,
        ..AnswerBundle::default()
    }
}
