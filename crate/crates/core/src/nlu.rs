//! Intent recognition with keyword lists and surface heuristics, plus the
//! three-way question router.
//!
//! Recognizers run in a fixed order and the first hit wins:
//! stop, navigation, task completion, acknowledge/negation, question form,
//! and finally goal trigger as the fallthrough. Commands are only recognized
//! in short utterances and sentiment only in very short ones, so a long
//! question that happens to contain "next" or "yes" stays a question.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::qa::KbIndex;
use crate::text::{phrase_words, raw_tokens};

/// Longest utterance (in words) in which a command phrase is recognized.
pub const COMMAND_MAX_WORDS: usize = 6;
/// Longest utterance (in words) in which a sentiment phrase is recognized.
pub const SENTIMENT_MAX_WORDS: usize = 4;
/// Minimum top-1 knowledge-base overlap for a product-knowledge route.
pub const PRODUCT_KB_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "direction", content = "step")]
pub enum NavDirection {
    Prev,
    Next,
    Repeat,
    /// 1-based step number as spoken by the user.
    GotoStep(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "label")]
pub enum IntentLabel {
    Acknowledge,
    Negation,
    GoalTrigger,
    Navigation { direction: NavDirection },
    TaskCompletion,
    Stop,
    Question,
}

impl IntentLabel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Acknowledge => "acknowledge",
            Self::Negation => "negation",
            Self::GoalTrigger => "goal_trigger",
            Self::Navigation { .. } => "navigation",
            Self::TaskCompletion => "task_completion",
            Self::Stop => "stop",
            Self::Question => "question",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    #[serde(flatten)]
    pub label: IntentLabel,
    pub confidence: f64,
    pub matched_evidence: String,
}

impl Intent {
    pub fn new(label: IntentLabel, confidence: f64, evidence: impl Into<String>) -> Self {
        Self {
            label,
            confidence,
            matched_evidence: evidence.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    ProductKnowledge,
    OperationalInsights,
    OutOfScope,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NluError {
    EmptyUtterance,
    UnknownSection { line: usize, name: String },
    PhraseOutsideSection { line: usize },
}

impl fmt::Display for NluError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyUtterance => write!(f, "utterance is empty"),
            Self::UnknownSection { line, name } => {
                write!(f, "line {line}: unknown keyword section [{name}]")
            }
            Self::PhraseOutsideSection { line } => {
                write!(f, "line {line}: phrase appears before any [section] header")
            }
        }
    }
}

fn owned(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Phrase lists per label. Each phrase is matched as a whole-word sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordLists {
    pub acknowledge: Vec<String>,
    pub negation: Vec<String>,
    pub stop: Vec<String>,
    pub task_completion: Vec<String>,
    pub navigation_next: Vec<String>,
    pub navigation_prev: Vec<String>,
    pub navigation_repeat: Vec<String>,
}

impl Default for KeywordLists {
    fn default() -> Self {
        Self {
            acknowledge: owned(&[
                "yes", "yeah", "yep", "sure", "ok", "okay", "correct", "sounds good", "please do",
                "confirm",
            ]),
            negation: owned(&["no", "nope", "not now", "cancel", "don't", "never mind"]),
            stop: owned(&["stop", "quit", "exit", "goodbye", "bye"]),
            task_completion: owned(&["done", "finished", "completed", "i'm done", "all set"]),
            navigation_next: owned(&["next"]),
            navigation_prev: owned(&["previous", "back", "go back"]),
            navigation_repeat: owned(&["repeat", "again"]),
        }
    }
}

const SECTIONS: [&str; 7] = [
    "acknowledge",
    "negation",
    "stop",
    "task_completion",
    "navigation_next",
    "navigation_prev",
    "navigation_repeat",
];

impl KeywordLists {
    fn section_mut(&mut self, name: &str) -> Option<&mut Vec<String>> {
        Some(match name {
            "acknowledge" => &mut self.acknowledge,
            "negation" => &mut self.negation,
            "stop" => &mut self.stop,
            "task_completion" => &mut self.task_completion,
            "navigation_next" => &mut self.navigation_next,
            "navigation_prev" => &mut self.navigation_prev,
            "navigation_repeat" => &mut self.navigation_repeat,
            _ => return None,
        })
    }

    /// Parse a keyword file: `[section]` headers, then one phrase per line.
    /// Sections present in the file replace the defaults; absent sections
    /// keep them. Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, NluError> {
        let mut lists = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut current: Option<&str> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                let Some(known) = SECTIONS.iter().find(|s| **s == name) else {
                    return Err(NluError::UnknownSection {
                        line: i + 1,
                        name: name.to_string(),
                    });
                };
                if !seen.contains(known) {
                    seen.push(known);
                    lists.section_mut(known).expect("known section").clear();
                }
                current = Some(known);
                continue;
            }
            let Some(section) = current else {
                return Err(NluError::PhraseOutsideSection { line: i + 1 });
            };
            let phrase = phrase_words(line).join(" ");
            if !phrase.is_empty() {
                lists.section_mut(section).expect("known section").push(phrase);
            }
        }
        Ok(lists)
    }
}

const INTERROGATIVES: &[&str] = &[
    "what", "how", "why", "when", "where", "which", "who", "can", "could", "should", "is", "are",
    "do", "does",
];

const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Position of `phrase` as a contiguous word run inside `words`.
fn find_phrase(words: &[String], phrase: &str) -> Option<usize> {
    let parts: Vec<&str> = phrase.split(' ').filter(|p| !p.is_empty()).collect();
    if parts.is_empty() || parts.len() > words.len() {
        return None;
    }
    (0..=words.len() - parts.len()).find(|&i| parts.iter().enumerate().all(|(j, p)| words[i + j] == *p))
}

fn first_hit<'a>(words: &[String], phrases: &'a [String]) -> Option<&'a str> {
    phrases
        .iter()
        .filter_map(|p| find_phrase(words, p).map(|pos| (pos, p)))
        .min_by_key(|(pos, p)| (*pos, core::cmp::Reverse(p.len())))
        .map(|(_, p)| p.as_str())
}

fn goto_step(words: &[String]) -> Option<(usize, String)> {
    let pos = words.iter().position(|w| w == "step")?;
    let next = words.get(pos + 1)?;
    let n = next
        .parse::<usize>()
        .ok()
        .or_else(|| NUMBER_WORDS.iter().position(|w| w == next).map(|i| i + 1))?;
    Some((n, alloc::format!("step {next}")))
}

/// Trailing question mark, or an interrogative opening the utterance or
/// the clause after a short lead-in such as "yes," or "ok so,".
pub fn is_question_form(utterance: &str) -> bool {
    if utterance.trim_end().ends_with('?') {
        return true;
    }
    let opens = |clause: &str| {
        raw_tokens(clause)
            .first()
            .is_some_and(|w| INTERROGATIVES.contains(&w.as_str()))
    };
    if opens(utterance) {
        return true;
    }
    match utterance.split_once([',', ';', ':']) {
        Some((lead, rest)) => raw_tokens(lead).len() <= 2 && opens(rest),
        None => false,
    }
}

fn confidence(words: &[String], evidence: &str) -> f64 {
    if words.join(" ") == evidence {
        1.0
    } else {
        0.8
    }
}

/// Surface intent of one utterance. The dialogue policy decides later
/// whether a question form also triggers a goal.
pub fn classify(utterance: &str, lists: &KeywordLists) -> Result<Intent, NluError> {
    let words = phrase_words(utterance);
    if words.is_empty() {
        if utterance.trim().is_empty() {
            return Err(NluError::EmptyUtterance);
        }
        // Punctuation only, e.g. "?" or "...".
        let label = if is_question_form(utterance) {
            IntentLabel::Question
        } else {
            IntentLabel::GoalTrigger
        };
        return Ok(Intent::new(label, 0.5, utterance.trim()));
    }

    if words.len() <= COMMAND_MAX_WORDS {
        if let Some(p) = first_hit(&words, &lists.stop) {
            return Ok(Intent::new(IntentLabel::Stop, confidence(&words, p), p));
        }
        let nav = goto_step(&words)
            .map(|(n, ev)| (NavDirection::GotoStep(n), ev))
            .or_else(|| first_hit(&words, &lists.navigation_prev).map(|p| (NavDirection::Prev, p.to_string())))
            .or_else(|| first_hit(&words, &lists.navigation_repeat).map(|p| (NavDirection::Repeat, p.to_string())))
            .or_else(|| first_hit(&words, &lists.navigation_next).map(|p| (NavDirection::Next, p.to_string())));
        if let Some((direction, ev)) = nav {
            let c = confidence(&words, &ev);
            return Ok(Intent::new(IntentLabel::Navigation { direction }, c, ev));
        }
        if let Some(p) = first_hit(&words, &lists.task_completion) {
            return Ok(Intent::new(IntentLabel::TaskCompletion, confidence(&words, p), p));
        }
    }

    if words.len() <= SENTIMENT_MAX_WORDS && !utterance.trim_end().ends_with('?') {
        if let Some(p) = first_hit(&words, &lists.negation) {
            return Ok(Intent::new(IntentLabel::Negation, confidence(&words, p), p));
        }
        if let Some(p) = first_hit(&words, &lists.acknowledge) {
            return Ok(Intent::new(IntentLabel::Acknowledge, confidence(&words, p), p));
        }
    }

    if is_question_form(utterance) {
        let evidence = if utterance.trim_end().ends_with('?') {
            "?".to_string()
        } else {
            words[0].clone()
        };
        return Ok(Intent::new(IntentLabel::Question, 0.7, evidence));
    }
    Ok(Intent::new(IntentLabel::GoalTrigger, 0.5, utterance.trim()))
}

/// Three-way question routing. Implementations must be deterministic and
/// safe to share between sessions.
pub trait QuestionRouter: Send + Sync {
    fn route(&self, question: &str, kb: &KbIndex) -> QuestionKind;
}

/// Metadata object nouns, plural first. Shared with the operational
/// question translator.
pub const OBJECT_NOUNS: &[(&str, &[&str])] = &[
    ("attributes", &["attributes", "attribute"]),
    ("audiences", &["audiences", "audience"]),
    ("dataflows", &["dataflows", "dataflow"]),
    ("datasets", &["datasets", "dataset"]),
    ("destinations", &["destinations", "destination"]),
    ("journeys", &["journeys", "journey"]),
    ("schemas", &["schemas", "schema", "schemata"]),
    ("sources", &["sources", "source"]),
];

pub fn mentions_object_type(words: &[String]) -> bool {
    words
        .iter()
        .any(|w| OBJECT_NOUNS.iter().any(|(_, forms)| forms.contains(&w.as_str())))
}

fn has_count_cue(words: &[String]) -> bool {
    if find_phrase(words, "how many").is_some() {
        return true;
    }
    if words.iter().any(|w| w == "count" || w == "list") {
        return true;
    }
    if let Some(which) = words.iter().position(|w| w == "which") {
        return words[which + 1..].iter().any(|w| w == "have" || w == "has");
    }
    false
}

/// Default router: operational cue plus a metadata noun, else a knowledge
/// base hit above [`PRODUCT_KB_THRESHOLD`], else out of scope.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicRouter;

impl QuestionRouter for HeuristicRouter {
    fn route(&self, question: &str, kb: &KbIndex) -> QuestionKind {
        let words = raw_tokens(question);
        if has_count_cue(&words) && mentions_object_type(&words) {
            return QuestionKind::OperationalInsights;
        }
        match kb.search(question, 1).first() {
            Some(hit) if hit.score >= PRODUCT_KB_THRESHOLD => QuestionKind::ProductKnowledge,
            _ => QuestionKind::OutOfScope,
        }
    }
}
