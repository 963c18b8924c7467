//! Operational metadata store and the pattern translator that turns
//! count/lookup/reference questions into canonical SQL, executes it over the
//! in-process tables, and explains both the query and the answer.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::nlu::OBJECT_NOUNS;
use crate::qa::AnswerBundle;
use crate::text::raw_tokens;

pub const LIST_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectType {
    Attributes,
    Audiences,
    Dataflows,
    Datasets,
    Destinations,
    Journeys,
    Schemas,
    Sources,
}

impl ObjectType {
    pub const ALL: [ObjectType; 8] = [
        Self::Attributes,
        Self::Audiences,
        Self::Dataflows,
        Self::Datasets,
        Self::Destinations,
        Self::Journeys,
        Self::Schemas,
        Self::Sources,
    ];

    pub fn table(self) -> &'static str {
        match self {
            Self::Attributes => "attributes",
            Self::Audiences => "audiences",
            Self::Dataflows => "dataflows",
            Self::Datasets => "datasets",
            Self::Destinations => "destinations",
            Self::Journeys => "journeys",
            Self::Schemas => "schemas",
            Self::Sources => "sources",
        }
    }

    pub fn from_table(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.table() == name)
    }

    pub fn singular(self) -> &'static str {
        let t = self.table();
        &t[..t.len() - 1]
    }

    pub fn noun(self, n: usize) -> &'static str {
        if n == 1 {
            self.singular()
        } else {
            self.table()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from_type: ObjectType,
    pub from_id: String,
    pub to_type: ObjectType,
    pub to_id: String,
}

/// Seed-file layout: one array per object type plus `edges`. Missing
/// arrays are empty tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSeed {
    #[serde(default)]
    pub attributes: Vec<Row>,
    #[serde(default)]
    pub audiences: Vec<Row>,
    #[serde(default)]
    pub dataflows: Vec<Row>,
    #[serde(default)]
    pub datasets: Vec<Row>,
    #[serde(default)]
    pub destinations: Vec<Row>,
    #[serde(default)]
    pub journeys: Vec<Row>,
    #[serde(default)]
    pub schemas: Vec<Row>,
    #[serde(default)]
    pub sources: Vec<Row>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreError {
    DuplicateRow { table: &'static str, id: String },
    DanglingEdge { index: usize, endpoint: String },
    Json(String),
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateRow { table, id } => write!(f, "{table}: id {id:?} appears twice"),
            Self::DanglingEdge { index, endpoint } => {
                write!(f, "edges[{index}]: endpoint {endpoint} does not exist")
            }
            Self::Json(e) => write!(f, "invalid seed JSON: {e}"),
        }
    }
}

/// Immutable snapshot of the eight metadata tables and their reference
/// edges. Edge endpoints always reference existing rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperationalStore {
    tables: [Vec<Row>; 8],
    edges: Vec<Edge>,
}

impl OperationalStore {
    pub fn from_seed(seed: StoreSeed) -> Result<Self, StoreError> {
        let tables = [
            seed.attributes,
            seed.audiences,
            seed.dataflows,
            seed.datasets,
            seed.destinations,
            seed.journeys,
            seed.schemas,
            seed.sources,
        ];
        for (t, rows) in ObjectType::ALL.iter().zip(&tables) {
            let mut ids = BTreeSet::new();
            for r in rows {
                if !ids.insert(r.id.as_str()) {
                    return Err(StoreError::DuplicateRow {
                        table: t.table(),
                        id: r.id.clone(),
                    });
                }
            }
        }
        let store = Self {
            tables,
            edges: seed.edges,
        };
        for (index, e) in store.edges.iter().enumerate() {
            for (ty, id) in [(e.from_type, &e.from_id), (e.to_type, &e.to_id)] {
                if store.find(ty, id).is_none() {
                    return Err(StoreError::DanglingEdge {
                        index,
                        endpoint: format!("{}/{}", ty.table(), id),
                    });
                }
            }
        }
        Ok(store)
    }

    pub fn from_json(json: &str) -> Result<Self, StoreError> {
        let seed: StoreSeed = serde_json::from_str(json).map_err(|e| StoreError::Json(e.to_string()))?;
        Self::from_seed(seed)
    }

    pub fn rows(&self, t: ObjectType) -> &[Row] {
        &self.tables[t as usize]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn find(&self, t: ObjectType, id: &str) -> Option<&Row> {
        self.rows(t).iter().find(|r| r.id == id)
    }

    fn find_by_id_or_name(&self, t: ObjectType, key: &str) -> Option<&Row> {
        self.find(t, key)
            .or_else(|| self.rows(t).iter().find(|r| r.name.eq_ignore_ascii_case(key)))
    }

    pub fn count(&self, t: ObjectType) -> usize {
        self.rows(t).len()
    }

    /// Rows of `t` that no edge points at.
    pub fn unused(&self, t: ObjectType) -> Vec<&Row> {
        let referenced: BTreeSet<&str> = self
            .edges
            .iter()
            .filter(|e| e.to_type == t)
            .map(|e| e.to_id.as_str())
            .collect();
        self.rows(t)
            .iter()
            .filter(|r| !referenced.contains(r.id.as_str()))
            .collect()
    }

    /// Objects that reference `t/id` directly.
    pub fn references_to(&self, t: ObjectType, id: &str) -> Vec<(ObjectType, &Row)> {
        self.edges
            .iter()
            .filter(|e| e.to_type == t && e.to_id == id)
            .filter_map(|e| self.find(e.from_type, &e.from_id).map(|r| (e.from_type, r)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "pattern")]
pub enum OpQuery {
    Count { object: ObjectType },
    List { object: ObjectType, limit: usize },
    CountUnused { object: ObjectType },
    ListReferences { object: ObjectType, key: String },
}

impl OpQuery {
    /// Canonical SQL for the pattern.
    pub fn sql(&self) -> String {
        match self {
            Self::Count { object } => format!("SELECT COUNT(*) FROM {}", object.table()),
            Self::List { object, limit } => format!(
                "SELECT id, name FROM {} ORDER BY created_at LIMIT {limit}",
                object.table()
            ),
            Self::CountUnused { object } => format!(
                "SELECT COUNT(*) FROM {t} o WHERE NOT EXISTS (SELECT 1 FROM edges e WHERE e.to_type = '{t}' AND e.to_id = o.id)",
                t = object.table()
            ),
            Self::ListReferences { object, key } => format!(
                "SELECT e.from_type, e.from_id FROM edges e JOIN {t} o ON e.to_id = o.id WHERE e.to_type = '{t}' AND (o.id = '{k}' OR o.name = '{k}')",
                t = object.table(),
                k = key.replace('\'', "''")
            ),
        }
    }

    pub fn explanation(&self) -> String {
        match self {
            Self::Count { object } => format!("Counts every row in the {} table.", object.table()),
            Self::List { object, limit } => format!(
                "Lists up to {limit} {} ordered by creation time.",
                object.table()
            ),
            Self::CountUnused { object } => format!(
                "Counts {} that no other object references, i.e. rows with no incoming reference edge.",
                object.table()
            ),
            Self::ListReferences { object, key } => format!(
                "Finds every object with a direct reference edge pointing at the {} {key:?}.",
                object.singular()
            ),
        }
    }
}

const UNUSED_CUES: &[&[&str]] = &[
    &["never", "been", "used"],
    &["never", "used"],
    &["not", "used"],
    &["unused"],
    &["unreferenced"],
];
const REFERENCE_CUES: &[&str] = &[
    "references", "reference", "referenced", "referencing", "uses", "use", "using", "depends",
    "depend", "lineage", "impact", "impacted", "affected",
];
const COUNT_CUES: &[&[&str]] = &[&["how", "many"], &["count"], &["number", "of"], &["total"]];
const LIST_CUES: &[&str] = &["list", "show", "which", "what", "name", "names"];

fn contains_seq(words: &[String], seq: &[&str]) -> bool {
    words.windows(seq.len()).any(|w| w.iter().zip(seq).all(|(a, b)| a == b))
}

/// The metadata type the question is about: the last object noun
/// mentioned, so "schema attributes" resolves to attributes.
fn object_type(words: &[String]) -> Option<ObjectType> {
    words.iter().rev().find_map(|w| {
        OBJECT_NOUNS
            .iter()
            .find(|(_, forms)| forms.contains(&w.as_str()))
            .and_then(|(table, _)| ObjectType::from_table(table))
    })
}

fn quoted(question: &str) -> Option<String> {
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}'), ('`', '`')] {
        // An opening quote must start a word, so "what's" is not a quote.
        let start = question.char_indices().find(|(i, c)| {
            *c == open
                && question[..*i]
                    .chars()
                    .next_back()
                    .is_none_or(|p| p.is_whitespace() || p == '(')
        });
        if let Some((start, _)) = start {
            let rest = &question[start + open.len_utf8()..];
            if let Some(end) = rest.find(close) {
                let inner = rest[..end].trim();
                if !inner.is_empty() {
                    return Some(inner.to_string());
                }
            }
        }
    }
    None
}

/// Map a question onto one of the supported patterns.
pub fn translate(question: &str) -> Option<OpQuery> {
    let words = raw_tokens(question);
    let object = object_type(&words)?;
    if UNUSED_CUES.iter().any(|c| contains_seq(&words, c)) {
        return Some(OpQuery::CountUnused { object });
    }
    if let Some(key) = quoted(question) {
        if words.iter().any(|w| REFERENCE_CUES.contains(&w.as_str())) {
            return Some(OpQuery::ListReferences { object, key });
        }
    }
    if COUNT_CUES.iter().any(|c| contains_seq(&words, c)) {
        return Some(OpQuery::Count { object });
    }
    if words.iter().any(|w| LIST_CUES.contains(&w.as_str())) {
        return Some(OpQuery::List {
            object,
            limit: LIST_LIMIT,
        });
    }
    None
}

pub const SUPPORTED_PATTERNS: &[&str] = &[
    "How many <objects> do I have?",
    "How many <objects> have never been used?",
    "List my <objects>.",
    "What references the <object> \"<name>\"?",
];

fn name_list<'a>(rows: impl Iterator<Item = &'a Row>) -> String {
    rows.map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ")
}

fn execute(q: &OpQuery, store: &OperationalStore) -> String {
    match q {
        OpQuery::Count { object } => {
            let n = store.count(*object);
            format!("You have {n} {}.", object.noun(n))
        }
        OpQuery::List { object, limit } => {
            let mut rows: Vec<&Row> = store.rows(*object).iter().collect();
            rows.sort_by(|a, b| a.created_at.cmp(&b.created_at));
            let n = store.count(*object);
            if n == 0 {
                return format!("You have no {}.", object.table());
            }
            let shown = rows.len().min(*limit);
            let mut text = format!(
                "You have {n} {}: {}",
                object.noun(n),
                name_list(rows.into_iter().take(*limit))
            );
            if shown < n {
                text.push_str(&format!(" and {} more", n - shown));
            }
            text.push('.');
            text
        }
        OpQuery::CountUnused { object } => {
            let unused = store.unused(*object);
            let n = unused.len();
            let verb = if n == 1 { "has" } else { "have" };
            let mut text = format!("{n} {} {verb} never been used", object.noun(n));
            if n > 0 && n <= LIST_LIMIT {
                text.push_str(&format!(": {}", name_list(unused.into_iter())));
            }
            text.push('.');
            text
        }
        OpQuery::ListReferences { object, key } => {
            let Some(row) = store.find_by_id_or_name(*object, key) else {
                return format!("I could not find a {} called {key:?}.", object.singular());
            };
            let refs = store.references_to(*object, &row.id);
            if refs.is_empty() {
                return format!("Nothing references the {} {:?}.", object.singular(), row.name);
            }
            let listed: Vec<String> = refs
                .iter()
                .map(|(t, r)| format!("{} {:?}", t.singular(), r.name))
                .collect();
            format!(
                "{} object(s) reference the {} {:?}: {}.",
                refs.len(),
                object.singular(),
                row.name,
                listed.join(", ")
            )
        }
    }
}

/// Translate, execute and explain an operational question.
pub fn answer_operational(question: &str, store: &OperationalStore) -> AnswerBundle {
    match translate(question) {
        Some(q) => AnswerBundle {
            text: execute(&q, store),
            sql_text: Some(q.sql()),
            sql_explanation: Some(q.explanation()),
            grounded: true,
            ..AnswerBundle::default()
        },
        None => AnswerBundle {
            text: format!(
                "That operational question is not supported yet. I can answer questions like: {}",
                SUPPORTED_PATTERNS.join(" / ")
            ),
            grounded: false,
            ..AnswerBundle::default()
        },
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn count_datasets() {
        let a = answer_operational("How many datasets do I have?", &seeded());
        assert!(a.text.contains("12"));
        assert_eq!(a.text, "You have 12 datasets.");
        assert_eq!(a.sql_text.as_deref(), Some("SELECT COUNT(*) FROM datasets"));
        assert!(a.sql_explanation.is_some());
    }

    #[test]
    fn count_unused_attributes() {
        let store = seeded();
        // Brute-force set difference over the seeded edges.
        let referenced: BTreeSet<&str> = store
            .edges()
            .iter()
            .filter(|e| e.to_type == ObjectType::Attributes)
            .map(|e| e.to_id.as_str())
            .collect();
        let expected = store.rows(ObjectType::Attributes).iter().filter(|r| !referenced.contains(r.id.as_str())).count();
        assert_eq!(expected, 3);
        let a = answer_operational("How many schema attributes have never been used?", &store);
        assert!(a.text.starts_with("3 attributes have never been used"), "{}", a.text);
        assert_eq!(
            translate("How many schema attributes have never been used?"),
            Some(OpQuery::CountUnused { object: ObjectType::Attributes })
        );
    }

    #[test]
    fn unsupported_question() {
        let a = answer_operational("What color is the sky?", &seeded());
        assert!(a.text.contains("not supported"));
        assert!(a.sql_text.is_none());
        assert!(!a.grounded);
    }

    #[test]
    fn list_and_references() {
        let store = seeded();
        let a = answer_operational("List my datasets", &store);
        assert!(a.text.starts_with("You have 12 datasets: ds 0, ds 1"));
        assert!(a.text.ends_with("and 2 more."));
        let a = answer_operational("What references the schema \"schema 0\"?", &store);
        assert_eq!(a.text, "1 object(s) reference the schema \"schema 0\": dataset \"ds 0\".");
        assert!(a.sql_text.unwrap().contains("e.to_type = 'schemas'"));
        let a = answer_operational("Which objects use the attribute 'attr 0'?", &store);
        assert_eq!(a.text, "Nothing references the attribute \"attr 0\".");
        let a = answer_operational("What's referencing the dataset 'ds 0'?", &store);
        assert!(a.text.starts_with("Nothing references the dataset"), "{}", a.text);
    }

    #[test]
    fn seed_validation() {
        let json = r#"{"datasets":[{"id":"a","name":"A"}],"edges":[{"from_type":"datasets","from_id":"a","to_type":"schemas","to_id":"nope"}]}"#;
        assert!(matches!(OperationalStore::from_json(json), Err(StoreError::DanglingEdge { index: 0, .. })));
        let json = r#"{"datasets":[{"id":"a","name":"A"},{"id":"a","name":"B"}]}"#;
        assert!(matches!(OperationalStore::from_json(json), Err(StoreError::DuplicateRow { .. })));
        assert!(matches!(OperationalStore::from_json(r#"{"segments":[]}"#), Err(StoreError::Json(_))));
        assert_eq!(OperationalStore::from_json("{}").unwrap().count(ObjectType::Datasets), 0);
    }

    #[test]
    fn singular_counts() {
        let store = OperationalStore::from_json(r#"{"journeys":[{"id":"j","name":"J"}]}"#).unwrap();
        assert_eq!(answer_operational("how many journeys are there", &store).text, "You have 1 journey.");
    }
}
