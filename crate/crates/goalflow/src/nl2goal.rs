//! Prose goal description to workflow, through the model when one is
//! available and through the enumeration parser otherwise.

use goalflow_core::enumerate::{count_markers, parse_enumerated};
use goalflow_core::gateway::{render, GatewayError, LlmGateway, TemplateName};
use goalflow_core::goal::{validate_workflow, GoalWorkflow, Violation};

use crate::repo_yaml::{parse_repository, RepoFileError};

#[derive(Debug, thiserror::Error)]
pub enum Nl2GoalError {
    #[error("goal description is empty")]
    EmptyDescription,
    #[error("model reply is not a valid goal document ({error})\n--- model reply ---\n{raw}")]
    Unparseable { raw: String, error: String },
    #[error("model reply holds {count} workflows, expected exactly one\n--- model reply ---\n{raw}")]
    WorkflowCount { raw: String, count: usize },
    #[error("model reply has {found} steps but the description enumerates {expected}\n--- model reply ---\n{raw}")]
    StepCountMismatch { raw: String, expected: usize, found: usize },
    #[error("translated workflow is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{reason}; the description has no enumerated steps for the offline parser")]
    NoEnumeration { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub workflow: GoalWorkflow,
    pub used_fallback: bool,
    /// Model reply, when the model path was taken.
    pub raw: Option<String>,
    /// Why the model path was not taken.
    pub gateway_error: Option<GatewayError>,
}

/// Drop a surrounding Markdown code fence, if any.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return raw;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body)
}

pub fn translate(description: &str, llm: &dyn LlmGateway) -> Result<Translation, Nl2GoalError> {
    let description = description.trim();
    if description.is_empty() {
        return Err(Nl2GoalError::EmptyDescription);
    }
    let prompt = render(TemplateName::Nl2goal, &[("new_goal", description)]).expect("nl2goal binds new_goal");
    match llm.complete(TemplateName::Nl2goal, &prompt) {
        Ok(raw) => from_model(description, raw),
        Err(e) => {
            let mut t = offline(description).map_err(|err| match err {
                Nl2GoalError::NoEnumeration { .. } => Nl2GoalError::NoEnumeration {
                    reason: format!("model unavailable ({e})"),
                },
                other => other,
            })?;
            t.gateway_error = Some(e);
            Ok(t)
        }
    }
}

fn from_model(description: &str, raw: String) -> Result<Translation, Nl2GoalError> {
    let repo = match parse_repository(strip_fence(&raw)) {
        Ok(repo) => repo,
        Err(RepoFileError::Invalid(v)) => return Err(Nl2GoalError::Invalid(v)),
        Err(e) => {
            return Err(Nl2GoalError::Unparseable {
                error: e.to_string(),
                raw,
            })
        }
    };
    if repo.len() != 1 {
        return Err(Nl2GoalError::WorkflowCount { count: repo.len(), raw });
    }
    let workflow = repo.workflows()[0].clone();
    if let Some(expected) = count_markers(description) {
        if !workflow.steps.is_empty() && workflow.steps.len() != expected {
            return Err(Nl2GoalError::StepCountMismatch {
                expected,
                found: workflow.steps.len(),
                raw,
            });
        }
    }
    Ok(Translation {
        workflow,
        used_fallback: false,
        raw: Some(raw),
        gateway_error: None,
    })
}

/// Deterministic translation with no model call.
pub fn offline(description: &str) -> Result<Translation, Nl2GoalError> {
    let description = description.trim();
    if description.is_empty() {
        return Err(Nl2GoalError::EmptyDescription);
    }
    let parsed = parse_enumerated(description).ok_or_else(|| Nl2GoalError::NoEnumeration {
        reason: "offline translation".into(),
    })?;
    let workflow = parsed.into_workflow();
    let violations = validate_workflow(&workflow);
    if !violations.is_empty() {
        return Err(Nl2GoalError::Invalid(violations));
    }
    Ok(Translation {
        workflow,
        used_fallback: true,
        raw: None,
        gateway_error: None,
    })
}
