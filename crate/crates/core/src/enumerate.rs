//! Offline goal translator: turns an enumerated prose description into a
//! guidance workflow without a model.
//!
//! Three marker styles are recognized, in this order of preference:
//! `Step N:` labels, `N.` / `N)` numbers at the start of a clause, and the
//! ordinal words `first` .. `tenth` at the start of a clause. Only the most
//! preferred style present in the text is used, so a `Step 1: first, ...`
//! description is not double-counted.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use regex::Regex;

use crate::goal::GoalWorkflow;
use crate::text::{capitalize_first, trim_terminator};

const STEP_LABEL: &str = r"(?i)\bstep\s+\d+\s*[:.)\-]";
const NUMBERED: &str = r"(?:^|[\n:;]\s*|[.!?]\s+)(\d+[.)])\s+";
const ORDINAL: &str = r"(?i)(?:^|[:;,.!?]\s*|\band\s+|\bthen\s+)(first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth)\b,?";

const GOAL_PREFIXES: &[&str] = &[
    "i have a goal to ",
    "i have a goal of ",
    "my goal is to ",
    "the goal is to ",
    "i want to ",
    "goal:",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerStyle {
    StepLabel,
    Numbered,
    Ordinal,
}

/// Byte span of one marker; `body_start` is where the step text begins.
#[derive(Debug, Clone, Copy)]
struct Marker {
    start: usize,
    body_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumeratedGoal {
    pub goal: String,
    pub steps: Vec<(String, String)>,
    pub style: Option<MarkerStyle>,
}

impl EnumeratedGoal {
    pub fn into_workflow(self) -> GoalWorkflow {
        GoalWorkflow::guidance(&self.goal, self.steps)
    }
}

fn find_markers(text: &str) -> Option<(MarkerStyle, Vec<Marker>)> {
    let step_label = Regex::new(STEP_LABEL).expect("static regex");
    let labels: Vec<Marker> = step_label
        .find_iter(text)
        .map(|m| Marker {
            start: m.start(),
            body_start: m.end(),
        })
        .collect();
    if !labels.is_empty() {
        return Some((MarkerStyle::StepLabel, labels));
    }
    for (style, pattern) in [(MarkerStyle::Numbered, NUMBERED), (MarkerStyle::Ordinal, ORDINAL)] {
        let re = Regex::new(pattern).expect("static regex");
        let found: Vec<Marker> = re
            .captures_iter(text)
            .map(|c| {
                let whole = c.get(0).expect("match");
                // A sentence terminator before the marker stays with the
                // previous step.
                let keep = whole.as_str().starts_with(['.', '!', '?']) as usize;
                Marker {
                    start: whole.start() + keep,
                    body_start: whole.end(),
                }
            })
            .collect();
        if !found.is_empty() {
            return Some((style, found));
        }
    }
    None
}

/// Number of enumeration markers detected, or `None` when the text carries
/// no recognizable enumeration.
pub fn count_markers(text: &str) -> Option<usize> {
    find_markers(text).map(|(_, m)| m.len())
}

fn clean_segment(segment: &str) -> &str {
    let mut s = segment.trim().trim_start_matches([',', ':', '-', ')']).trim();
    loop {
        let before = s;
        s = s.trim_end_matches([',', ';', ' ', '\n', '\t', '\r']);
        for tail in [" and", " then", " finally"] {
            if s.len() >= tail.len() && s[s.len() - tail.len()..].eq_ignore_ascii_case(tail) {
                s = &s[..s.len() - tail.len()];
            }
        }
        if s == before {
            return s;
        }
    }
}

/// Split at the first sentence terminator that is followed by whitespace
/// or the end of the text.
fn split_sentence(text: &str) -> (&str, &str) {
    let bytes = text.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?' | b';')
            && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace())
        {
            return (&text[..i], text[i + 1..].trim());
        }
    }
    (text, "")
}

fn goal_from_preamble(preamble: &str) -> String {
    let (first, _) = split_sentence(preamble.trim());
    let mut goal = first.trim();
    let lower = goal.to_lowercase();
    for prefix in GOAL_PREFIXES {
        if lower.starts_with(prefix) {
            goal = goal[prefix.len()..].trim();
            break;
        }
    }
    let goal = trim_terminator(goal);
    if goal.is_empty() {
        return "Untitled goal".to_string();
    }
    format!("{}.", capitalize_first(goal))
}

/// Parse an enumerated description. Returns `None` when no markers are
/// found. A text with `k` markers always yields exactly `k` steps.
pub fn parse_enumerated(text: &str) -> Option<EnumeratedGoal> {
    let (style, markers) = find_markers(text)?;
    let goal = goal_from_preamble(&text[..markers[0].start]);
    let mut steps = Vec::with_capacity(markers.len());
    for (i, marker) in markers.iter().enumerate() {
        let end = markers.get(i + 1).map_or(text.len(), |m| m.start);
        let segment = clean_segment(&text[marker.body_start..end]);
        let (name, rest) = split_sentence(segment);
        let name = capitalize_first(name.trim());
        let name = if name.is_empty() {
            format!("Step {}", i + 1)
        } else {
            name
        };
        let rest = clean_segment(rest);
        let description = if rest.is_empty() {
            name.clone()
        } else {
            rest.to_string()
        };
        steps.push((name, description));
    }
    Some(EnumeratedGoal {
        goal,
        steps,
        style: Some(style),
    })
}
