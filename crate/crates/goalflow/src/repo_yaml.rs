//! YAML goal repository files.
//!
//! The file holds one top-level `workflow:` list. Each entry has a `goal`,
//! an optional `id`, and either `steps` (name/description pairs) or `slots`.
//! A step without a description reuses its name.

use std::path::Path;

use goalflow_core::goal::{validate_workflow, GoalWorkflow, RepoSource, Repository, SlotSpec, Step, Violation, ViolationCode};
use goalflow_core::text::slugify;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RepoFileError {
    #[error("YAML syntax error{}: {message}", position_suffix(*.line, *.column))]
    Syntax {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("the document has no top-level `workflow:` list")]
    MissingWorkflowKey,
    #[error("{}", describe_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RepoFileError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            Self::Invalid(v) => v,
            _ => &[],
        }
    }
}

fn position_suffix(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l} column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

fn describe_violations(v: &[Violation]) -> String {
    let mut out = format!("{} schema violation(s)", v.len());
    for violation in v {
        out.push_str("\n  ");
        out.push_str(&violation.to_string());
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    workflow: Option<Vec<Entry>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    goal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steps: Option<Vec<StepEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slots: Option<Vec<SlotEntry>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepEntry {
    #[serde(default)]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotEntry {
    #[serde(default)]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    required: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pattern: Option<String>,
}

fn syntax_error(e: serde_yaml::Error) -> RepoFileError {
    let loc = e.location();
    RepoFileError::Syntax {
        line: loc.as_ref().map(|l| l.line()),
        column: loc.as_ref().map(|l| l.column()),
        message: e.to_string(),
    }
}

fn decode(text: &str) -> Result<Option<Vec<Entry>>, RepoFileError> {
    let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(syntax_error)?;
    match &value {
        serde_yaml::Value::Null => return Ok(None),
        serde_yaml::Value::Mapping(m) if m.contains_key("workflow") => {}
        _ => return Err(RepoFileError::MissingWorkflowKey),
    }
    let doc: FileDoc = serde_yaml::from_str(text).map_err(syntax_error)?;
    Ok(doc.workflow)
}

/// Re-indent keys that sit at the column of the preceding `- ` item marker,
/// the common slip in hand-written and model-written YAML where a mapping
/// continues under the dash instead of under the first key.
pub fn repair_indentation(text: &str) -> String {
    // (original column of a dash, shift applied to that line)
    let mut dashes: Vec<(usize, usize)> = Vec::new();
    let mut out = String::with_capacity(text.len() + 64);
    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let col = line.len() - trimmed.len();
        while dashes.last().is_some_and(|&(c, _)| c > col) {
            dashes.pop();
        }
        let is_dash = trimmed.starts_with("- ") || trimmed == "-";
        let shift = match dashes.last() {
            Some(&(c, s)) if c == col && !is_dash => s + 2,
            Some(&(c, s)) if c == col => s,
            Some(&(_, s)) => s,
            None => 0,
        };
        if is_dash {
            while dashes.last().is_some_and(|&(c, _)| c >= col) {
                dashes.pop();
            }
            dashes.push((col, shift));
        }
        out.extend(std::iter::repeat_n(' ', shift));
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn build_entry(i: usize, entry: Entry) -> (GoalWorkflow, Vec<Violation>) {
    let goal = entry.goal.unwrap_or_default();
    let id = entry.id.unwrap_or_else(|| slugify(&goal));
    let steps: Vec<Step> = entry
        .steps
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .map(|(index, s)| {
            let name = s.name.unwrap_or_default();
            let description = s.description.unwrap_or_else(|| name.clone());
            Step { index, name, description }
        })
        .collect();
    let slots = entry
        .slots
        .unwrap_or_default()
        .into_iter()
        .map(|s| SlotSpec {
            name: s.name.unwrap_or_default(),
            description: s.description,
            required: s.required.unwrap_or(true),
            pattern: s.pattern,
        })
        .collect();
    let w = GoalWorkflow { id, goal, steps, slots };
    let label = if w.id.is_empty() { format!("#{i}") } else { w.id.clone() };
    let violations = validate_workflow(&w)
        .into_iter()
        .map(|mut v| {
            v.workflow_id = label.clone();
            v.field = format!("workflow[{i}].{}", v.field);
            v
        })
        .collect();
    (w, violations)
}

fn from_entries(entries: Vec<Entry>) -> Result<Repository, RepoFileError> {
    let mut workflows: Vec<GoalWorkflow> = Vec::new();
    let mut violations = Vec::new();
    for (i, entry) in entries.into_iter().enumerate() {
        let (w, mut v) = build_entry(i, entry);
        if !w.id.is_empty() && workflows.iter().any(|o| o.id == w.id) {
            v.push(Violation {
                code: ViolationCode::DuplicateId,
                workflow_id: w.id.clone(),
                field: format!("workflow[{i}].id"),
                message: format!("id {:?} is used by an earlier workflow", w.id),
            });
        }
        violations.extend(v);
        workflows.push(w);
    }
    if !violations.is_empty() {
        return Err(RepoFileError::Invalid(violations));
    }
    Repository::from_workflows(workflows).map_err(|e| match e {
        goalflow_core::goal::RepoError::Invalid(v) => RepoFileError::Invalid(v),
        goalflow_core::goal::RepoError::DuplicateId(id) => RepoFileError::Invalid(vec![Violation {
            code: ViolationCode::DuplicateId,
            workflow_id: id.clone(),
            field: "id".into(),
            message: format!("id {id:?} is used by an earlier workflow"),
        }]),
    })
}

/// Parse a repository document. Empty text is an empty repository. When
/// the text does not parse as written, one indentation repair pass is
/// tried; the original error is reported if the repair does not help.
pub fn parse_repository(text: &str) -> Result<Repository, RepoFileError> {
    if text.trim().is_empty() {
        return Ok(Repository::new());
    }
    let entries = match decode(text) {
        Ok(entries) => entries,
        Err(original @ RepoFileError::Syntax { .. }) => {
            let repaired = repair_indentation(text);
            match decode(&repaired) {
                Ok(entries) => entries,
                Err(_) => return Err(original),
            }
        }
        Err(e) => return Err(e),
    };
    from_entries(entries.unwrap_or_default())
}

/// Serialize in the on-disk schema. Ids are always written so references
/// stay stable even if the goal text is edited later.
pub fn serialize_repository(repo: &Repository) -> String {
    let entries: Vec<Entry> = repo.workflows().iter().map(entry_of).collect();
    serde_yaml::to_string(&FileDoc { workflow: Some(entries) }).expect("repository serializes")
}

pub fn serialize_workflow(w: &GoalWorkflow) -> String {
    serde_yaml::to_string(&FileDoc {
        workflow: Some(vec![entry_of(w)]),
    })
    .expect("workflow serializes")
}

fn entry_of(w: &GoalWorkflow) -> Entry {
    Entry {
        id: Some(w.id.clone()),
        goal: Some(w.goal.clone()),
        steps: (!w.steps.is_empty()).then(|| {
            w.steps
                .iter()
                .map(|s| StepEntry {
                    name: Some(s.name.clone()),
                    description: Some(s.description.clone()),
                })
                .collect()
        }),
        slots: (!w.slots.is_empty()).then(|| {
            w.slots
                .iter()
                .map(|s| SlotEntry {
                    name: Some(s.name.clone()),
                    description: s.description.clone(),
                    required: (!s.required).then_some(false),
                    pattern: s.pattern.clone(),
                })
                .collect()
        }),
    }
}

pub fn load(path: &Path) -> Result<Repository, RepoFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| RepoFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_repository(&text)?.with_source(RepoSource::File(path.display().to_string())))
}

/// Write atomically next to the target, then rename over it.
pub fn save(path: &Path, repo: &Repository) -> Result<(), RepoFileError> {
    let io = |source| RepoFileError::Io {
        path: path.display().to_string(),
        source,
    };
    crate::fsutil::write_atomic(path, serialize_repository(repo).as_bytes()).map_err(io)
}
