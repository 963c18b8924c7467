//! Goal workflows and the repository that holds them.
//!
//! A workflow is either a guidance workflow (an ordered list of steps) or a
//! slot-filling workflow (a list of slots to collect). The presence of
//! `slots` is what selects the slot-filling paradigm; a workflow carrying
//! both is rejected.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::text::{is_valid_slug, slugify};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Guidance,
    SlotFilling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default = "default_required")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

fn default_required() -> bool {
    true
}

impl SlotSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: None,
            required: true,
            pattern: None,
        }
    }

    pub fn with_pattern(mut self, pattern: impl Into<String>) -> Self {
        self.pattern = Some(pattern.into());
        self
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalWorkflow {
    pub id: String,
    pub goal: String,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub slots: Vec<SlotSpec>,
}

impl GoalWorkflow {
    /// Guidance workflow from `(name, description)` pairs; the id is the slug
    /// of the goal text.
    pub fn guidance<N, D>(goal: &str, steps: impl IntoIterator<Item = (N, D)>) -> Self
    where
        N: Into<String>,
        D: Into<String>,
    {
        let steps = steps
            .into_iter()
            .enumerate()
            .map(|(index, (name, description))| Step {
                index,
                name: name.into(),
                description: description.into(),
            })
            .collect();
        Self {
            id: slugify(goal),
            goal: goal.to_string(),
            steps,
            slots: Vec::new(),
        }
    }

    pub fn slot_filling(goal: &str, slots: impl IntoIterator<Item = SlotSpec>) -> Self {
        Self {
            id: slugify(goal),
            goal: goal.to_string(),
            steps: Vec::new(),
            slots: slots.into_iter().collect(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Slot-filling iff any slots are declared. Only meaningful for workflows
    /// that pass [`validate_workflow`].
    pub fn paradigm(&self) -> Paradigm {
        if self.slots.is_empty() {
            Paradigm::Guidance
        } else {
            Paradigm::SlotFilling
        }
    }

    pub fn step(&self, index: usize) -> Option<&Step> {
        self.steps.get(index)
    }

    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCode {
    EmptyGoal,
    InvalidId,
    NoParadigm,
    MixedParadigm,
    EmptyStepName,
    EmptyStepDescription,
    StepIndexOutOfOrder,
    EmptySlotName,
    DuplicateSlotName,
    InvalidSlotPattern,
    DuplicateId,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EmptyGoal => "EmptyGoal",
            Self::InvalidId => "InvalidId",
            Self::NoParadigm => "NoParadigm",
            Self::MixedParadigm => "MixedParadigm",
            Self::EmptyStepName => "EmptyStepName",
            Self::EmptyStepDescription => "EmptyStepDescription",
            Self::StepIndexOutOfOrder => "StepIndexOutOfOrder",
            Self::EmptySlotName => "EmptySlotName",
            Self::DuplicateSlotName => "DuplicateSlotName",
            Self::InvalidSlotPattern => "InvalidSlotPattern",
            Self::DuplicateId => "DuplicateId",
        }
    }
}

/// One broken workflow invariant. `field` is a path inside the workflow such
/// as `steps[2].name`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub workflow_id: String,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, w: &GoalWorkflow, field: impl Into<String>, message: String) -> Self {
        Self {
            code,
            workflow_id: w.id.clone(),
            field: field.into(),
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {}",
            self.code.as_str(),
            self.workflow_id,
            self.field,
            self.message
        )
    }
}

/// Every broken invariant of `w`; empty iff the workflow is valid.
pub fn validate_workflow(w: &GoalWorkflow) -> Vec<Violation> {
    let mut out = Vec::new();
    if w.goal.trim().is_empty() {
        out.push(Violation::new(ViolationCode::EmptyGoal, w, "goal", "goal description is empty".into()));
    }
    if !is_valid_slug(&w.id) {
        out.push(Violation::new(
            ViolationCode::InvalidId,
            w,
            "id",
            format!("id {:?} must match [a-z0-9-]+", w.id),
        ));
    }
    match (w.steps.is_empty(), w.slots.is_empty()) {
        (true, true) => out.push(Violation::new(
            ViolationCode::NoParadigm,
            w,
            "steps/slots",
            "workflow declares neither steps nor slots".into(),
        )),
        (false, false) => out.push(Violation::new(
            ViolationCode::MixedParadigm,
            w,
            "steps/slots",
            "workflow declares both steps and slots; pick one paradigm".into(),
        )),
        _ => {}
    }
    for (i, step) in w.steps.iter().enumerate() {
        if step.index != i {
            out.push(Violation::new(
                ViolationCode::StepIndexOutOfOrder,
                w,
                format!("steps[{i}].index"),
                format!("expected index {i}, found {}", step.index),
            ));
        }
        if step.name.trim().is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptyStepName,
                w,
                format!("steps[{i}].name"),
                "step name is empty".into(),
            ));
        }
        if step.description.trim().is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptyStepDescription,
                w,
                format!("steps[{i}].description"),
                "step description is empty".into(),
            ));
        }
    }
    for (i, slot) in w.slots.iter().enumerate() {
        if slot.name.trim().is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptySlotName,
                w,
                format!("slots[{i}].name"),
                "slot name is empty".into(),
            ));
        } else if w.slots[..i].iter().any(|s| s.name == slot.name) {
            out.push(Violation::new(
                ViolationCode::DuplicateSlotName,
                w,
                format!("slots[{i}].name"),
                format!("slot {:?} is declared more than once", slot.name),
            ));
        }
        if let Some(pattern) = &slot.pattern {
            if let Err(e) = regex::Regex::new(pattern) {
                out.push(Violation::new(
                    ViolationCode::InvalidSlotPattern,
                    w,
                    format!("slots[{i}].pattern"),
                    format!("pattern does not compile: {e}"),
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum RepoSource {
    #[default]
    InMemory,
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepoError {
    Invalid(Vec<Violation>),
    DuplicateId(String),
}

impl fmt::Display for RepoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(v) => {
                write!(f, "{} violation(s)", v.len())?;
                for violation in v {
                    write!(f, "; {violation}")?;
                }
                Ok(())
            }
            Self::DuplicateId(id) => write!(f, "a workflow with id {id:?} already exists"),
        }
    }
}

/// Workflows in declaration order, ids unique, each one valid.
///
/// Values are immutable; [`Repository::add_workflow`] returns a new
/// repository so readers holding the old one are unaffected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Repository {
    workflows: Vec<GoalWorkflow>,
    #[serde(default)]
    source: RepoSource,
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_workflows(workflows: Vec<GoalWorkflow>) -> Result<Self, RepoError> {
        let mut violations = Vec::new();
        for (i, w) in workflows.iter().enumerate() {
            violations.extend(validate_workflow(w));
            if workflows[..i].iter().any(|o| o.id == w.id) {
                violations.push(Violation::new(
                    ViolationCode::DuplicateId,
                    w,
                    "id",
                    format!("id {:?} is used by an earlier workflow", w.id),
                ));
            }
        }
        if violations.is_empty() {
            Ok(Self {
                workflows,
                source: RepoSource::InMemory,
            })
        } else {
            Err(RepoError::Invalid(violations))
        }
    }

    pub fn with_source(mut self, source: RepoSource) -> Self {
        self.source = source;
        self
    }

    pub fn source(&self) -> &RepoSource {
        &self.source
    }

    pub fn add_workflow(&self, w: GoalWorkflow) -> Result<Self, RepoError> {
        if self.get(&w.id).is_some() {
            return Err(RepoError::DuplicateId(w.id));
        }
        let violations = validate_workflow(&w);
        if !violations.is_empty() {
            return Err(RepoError::Invalid(violations));
        }
        let mut next = self.clone();
        next.workflows.push(w);
        Ok(next)
    }

    pub fn get(&self, id: &str) -> Option<&GoalWorkflow> {
        self.workflows.iter().find(|w| w.id == id)
    }

    pub fn workflows(&self) -> &[GoalWorkflow] {
        &self.workflows
    }

    pub fn len(&self) -> usize {
        self.workflows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workflows.is_empty()
    }
}
