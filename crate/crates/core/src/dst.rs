//! Belief state tracking for slot-filling goals.
//!
//! Each turn the slot tracking prompt is rendered and the model's JSON
//! object is merged into the belief: non-empty values overwrite, empty
//! values mean "nothing new this turn". When the model is unavailable or
//! returns something unusable, a deterministic extractor takes over.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Speaker, Turn};
use crate::gateway::{render, LlmGateway, TemplateName};
use crate::goal::GoalWorkflow;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValue {
    pub name: String,
    /// Empty means unfilled.
    pub value: String,
    pub required: bool,
}

/// Slot values for one slot-filling workflow, in declaration order. The
/// slot names always equal the workflow's declared slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefState {
    pub workflow_id: String,
    pub slots: Vec<SlotValue>,
    #[serde(default)]
    pub last_requested_slot: Option<String>,
}

impl BeliefState {
    pub fn new(workflow: &GoalWorkflow) -> Self {
        Self {
            workflow_id: workflow.id.clone(),
            slots: workflow
                .slots
                .iter()
                .map(|s| SlotValue {
                    name: s.name.clone(),
                    value: String::new(),
                    required: s.required,
                })
                .collect(),
            last_requested_slot: None,
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.slots.iter().find(|s| s.name == name).map(|s| s.value.as_str())
    }

    pub fn is_filled(&self, name: &str) -> bool {
        self.get(name).is_some_and(|v| !v.is_empty())
    }

    fn set(&mut self, name: &str, value: &str) -> bool {
        match self.slots.iter_mut().find(|s| s.name == name) {
            Some(slot) => {
                slot.value = value.to_string();
                true
            }
            None => false,
        }
    }

    pub fn filled(&self) -> Vec<(&str, &str)> {
        self.slots
            .iter()
            .filter(|s| !s.value.is_empty())
            .map(|s| (s.name.as_str(), s.value.as_str()))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        missing_required(self).is_empty()
    }

    /// True when the slot names are exactly the workflow's declared slots.
    pub fn matches_schema(&self, workflow: &GoalWorkflow) -> bool {
        self.workflow_id == workflow.id
            && self.slots.len() == workflow.slots.len()
            && self.slots.iter().zip(&workflow.slots).all(|(a, b)| a.name == b.name)
    }
}

/// Required slots that are still empty, in declaration order.
pub fn missing_required(belief: &BeliefState) -> Vec<String> {
    belief
        .slots
        .iter()
        .filter(|s| s.required && s.value.is_empty())
        .map(|s| s.name.clone())
        .collect()
}

/// Turns rendered with the `<<user>>:` / `<<ai-assistant>>:` markers, one
/// per line.
pub fn format_history(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| {
            let marker = match t.speaker {
                Speaker::User => "<<user>>",
                Speaker::Assistant => "<<ai-assistant>>",
            };
            format!("{marker}: {}", t.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The first balanced `{...}` block, skipping braces inside JSON strings.
pub fn first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn normalize_key(k: &str) -> String {
    k.trim()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() })
        .collect()
}

fn pattern_of(workflow: &GoalWorkflow, slot: &str) -> Option<Regex> {
    workflow
        .slot(slot)
        .and_then(|s| s.pattern.as_deref())
        .and_then(|p| Regex::new(p).ok())
}

/// Capture for `re` in `text`: group 1 when the pattern has one, else the
/// whole match.
fn capture(re: &Regex, text: &str) -> Option<String> {
    let caps = re.captures(text)?;
    caps.get(1)
        .or_else(|| caps.get(0))
        .map(|m| m.as_str().trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DstOutcome {
    pub belief: BeliefState,
    pub used_fallback: bool,
    pub diagnostics: Vec<String>,
}

/// Pattern captures first; otherwise the trimmed utterance goes to the
/// last requested slot if that slot is still empty and has no pattern.
pub fn fallback_extract(belief: &BeliefState, workflow: &GoalWorkflow, utterance: &str) -> BeliefState {
    let mut next = belief.clone();
    let mut captured = false;
    for spec in &workflow.slots {
        if let Some(re) = spec.pattern.as_deref().and_then(|p| Regex::new(p).ok()) {
            if let Some(value) = capture(&re, utterance) {
                if !value.is_empty() && next.set(&spec.name, &value) {
                    captured = true;
                }
            }
        }
    }
    if captured {
        return next;
    }
    if let Some(slot) = belief.last_requested_slot.as_deref() {
        let has_pattern = workflow.slot(slot).is_some_and(|s| s.pattern.is_some());
        let value = utterance.trim();
        if !has_pattern && !value.is_empty() && !belief.is_filled(slot) {
            next.set(slot, value);
        }
    }
    next
}

/// Merge one model reply into the belief. Unknown keys and values that fail
/// a slot pattern are dropped with a diagnostic.
pub fn merge_model_values(
    belief: &BeliefState,
    workflow: &GoalWorkflow,
    object: &serde_json::Map<String, serde_json::Value>,
) -> (BeliefState, Vec<String>) {
    let mut next = belief.clone();
    let mut diagnostics = Vec::new();
    for (key, value) in object {
        let Some(slot) = belief
            .slots
            .iter()
            .find(|s| s.name == *key || normalize_key(&s.name) == normalize_key(key))
        else {
            diagnostics.push(format!("dst: ignored unknown slot {key:?}"));
            continue;
        };
        let value = match value {
            serde_json::Value::String(s) => s.trim().to_string(),
            serde_json::Value::Null => String::new(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            _ => {
                diagnostics.push(format!("dst: ignored non-scalar value for {key:?}"));
                continue;
            }
        };
        if value.is_empty() {
            continue;
        }
        if let Some(re) = pattern_of(workflow, &slot.name) {
            if !re.is_match(&value) {
                diagnostics.push(format!("dst: value for {:?} does not match its pattern", slot.name));
                continue;
            }
        }
        let name = slot.name.clone();
        next.set(&name, &value);
    }
    (next, diagnostics)
}

/// One tracking step. The input belief is never modified.
pub fn update(
    belief: &BeliefState,
    workflow: &GoalWorkflow,
    history: &[Turn],
    utterance: &str,
    llm: &dyn LlmGateway,
) -> DstOutcome {
    let slots = workflow
        .slots
        .iter()
        .map(|s| s.name.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    let history = format_history(history);
    let prompt = render(
        TemplateName::Dst,
        &[
            ("slots", &slots),
            ("chat_history", &history),
            ("current_utterance", utterance),
        ],
    )
    .expect("dst bindings are complete");
    let fallback = |diag: String| DstOutcome {
        belief: fallback_extract(belief, workflow, utterance),
        used_fallback: true,
        diagnostics: alloc::vec![diag],
    };
    let raw = match llm.complete(TemplateName::Dst, &prompt) {
        Ok(raw) => raw,
        Err(e) => return fallback(format!("dst: {e}; using fallback extractor")),
    };
    let Some(block) = first_json_object(&raw) else {
        return fallback("dst: model reply has no JSON object; using fallback extractor".into());
    };
    match serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(block) {
        Ok(object) => {
            let (belief, diagnostics) = merge_model_values(belief, workflow, &object);
            DstOutcome {
                belief,
                used_fallback: false,
                diagnostics,
            }
        }
        Err(e) => fallback(format!("dst: model JSON does not parse ({e}); using fallback extractor")),
    }
}
