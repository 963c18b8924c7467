//! Response generation: templates for guidance, the model-backed generator
//! for slot-filling, and QA dispatch.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::dialogue::{ClarifyReason, PolicyAction, Turn};
use crate::dst::{format_history, missing_required, BeliefState};
use crate::gateway::{placeholders_in, render, render_text, LlmGateway, TemplateName};
use crate::goal::{GoalWorkflow, Repository};
use crate::nlu::QuestionKind;
use crate::ops::{answer_operational, OperationalStore};
use crate::qa::{answer_product, AnswerBundle, KbIndex};
use crate::text::trim_terminator;

/// Placeholder sets, one entry per template the engine knows.
pub const TEMPLATE_SPECS: &[(&str, &[&str])] = &[
    ("overview", &["goal", "steps", "current_step"]),
    ("step", &["i", "n", "name", "description"]),
    ("restate_step", &["i", "name"]),
    ("transition_question", &["goal", "goal_gerund", "step_name"]),
    ("completion", &["goal"]),
    ("farewell", &[]),
    ("out_of_scope", &[]),
    ("transition_declined", &[]),
    ("apology", &[]),
    ("clarify", &[]),
    ("anything_else", &[]),
    ("step_out_of_range", &["requested", "n"]),
    ("step_already_covered", &["i", "name"]),
    ("execution_help", &[]),
    ("task_complete", &["goal"]),
    ("goal_unavailable", &[]),
    ("slot_request_fallback", &["slot"]),
    ("slot_summary_fallback", &["task", "task_lower", "filled"]),
];

const DEFAULT_TEMPLATES: &str = include_str!("templates.txt");

/// Marker the slot-filling model emits in place of a question's answer.
pub const ANSWER_TOKEN: &str = "<ANSWER>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateError {
    UnknownTemplate { line: usize, name: String },
    DuplicateTemplate { line: usize, name: String },
    UnknownPlaceholder { template: String, placeholder: String },
    TextOutsideSection { line: usize },
}

impl fmt::Display for TemplateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownTemplate { line, name } => write!(f, "line {line}: unknown template [{name}]"),
            Self::DuplicateTemplate { line, name } => write!(f, "line {line}: template [{name}] defined twice"),
            Self::UnknownPlaceholder { template, placeholder } => {
                write!(f, "template [{template}] uses unknown placeholder {{{placeholder}}}")
            }
            Self::TextOutsideSection { line } => write!(f, "line {line}: text before the first [section] header"),
        }
    }
}

fn spec_of(name: &str) -> Option<&'static [&'static str]> {
    TEMPLATE_SPECS.iter().find(|(n, _)| *n == name).map(|(_, p)| *p)
}

fn section_header(line: &str) -> Option<&str> {
    let inner = line.trim_end().strip_prefix('[')?.strip_suffix(']')?;
    let valid = !inner.is_empty() && inner.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
    valid.then_some(inner)
}

/// Named response templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::defaults()
    }
}

impl TemplateSet {
    /// The compiled-in set.
    pub fn defaults() -> Self {
        let templates = parse_sections(DEFAULT_TEMPLATES).expect("built-in templates are valid");
        Self { templates }
    }

    /// Parse an asset file. Sections it leaves out keep their defaults.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut set = Self::defaults();
        for (name, body) in parse_sections(text)? {
            set.templates.insert(name, body);
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> &str {
        self.templates.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    fn fill(&self, name: &str, bindings: &[(&str, &str)]) -> String {
        render_text(self.get(name), bindings).expect("template placeholders are checked at load")
    }
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, String>, TemplateError> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    let finish = |out: &mut BTreeMap<String, String>, (name, lines): (String, Vec<&str>)| -> Result<(), TemplateError> {
        let body = lines.join("\n");
        let body = body.trim_matches(|c| c == '\n' || c == '\r').trim_end().to_string();
        let allowed = spec_of(&name).unwrap_or(&[]);
        for p in placeholders_in(&body) {
            if !allowed.contains(&p.as_str()) {
                return Err(TemplateError::UnknownPlaceholder {
                    template: name,
                    placeholder: p,
                });
            }
        }
        out.insert(name, body);
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(name) = section_header(line) {
            if spec_of(name).is_none() {
                return Err(TemplateError::UnknownTemplate {
                    line: line_no,
                    name: name.to_string(),
                });
            }
            let duplicate = out.contains_key(name) || current.as_ref().is_some_and(|(n, _)| n == name);
            if duplicate {
                return Err(TemplateError::DuplicateTemplate {
                    line: line_no,
                    name: name.to_string(),
                });
            }
            if let Some(done) = current.take() {
                finish(&mut out, done)?;
            }
            current = Some((name.to_string(), Vec::new()));
            continue;
        }
        match current.as_mut() {
            Some((_, lines)) => lines.push(line),
            None if line.trim().is_empty() || line.starts_with('#') => {}
            None => return Err(TemplateError::TextOutsideSection { line: line_no }),
        }
    }
    if let Some(done) = current.take() {
        finish(&mut out, done)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RenderError {
    UnknownGoal(String),
    UnknownStep { goal_id: String, index: usize },
    NotGuidance(&'static str),
}

impl fmt::Display for RenderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownGoal(id) => write!(f, "goal {id:?} is not in the repository"),
            Self::UnknownStep { goal_id, index } => write!(f, "goal {goal_id:?} has no step {index}"),
            Self::NotGuidance(action) => write!(f, "{action} is not rendered from templates"),
        }
    }
}

const LEADING_VERBS: &[&str] = &[
    "add", "analyze", "book", "build", "check", "clean", "configure", "connect", "create", "debug", "delete",
    "deploy", "detect", "enable", "export", "find", "fix", "import", "install", "investigate", "list", "manage",
    "merge", "migrate", "monitor", "move", "open", "perform", "remove", "rename", "reset", "resolve", "restore",
    "review", "run", "schedule", "set", "setup", "share", "submit", "troubleshoot", "update", "upload",
];

/// Goal description as a verb phrase completing "Would you like to ...".
pub fn goal_phrase(goal: &str) -> String {
    let lower = trim_terminator(goal.trim()).to_lowercase();
    let first = lower.split_whitespace().next().unwrap_or("");
    if LEADING_VERBS.contains(&first) {
        lower
    } else {
        format!("work on {lower}")
    }
}

fn workflow<'a>(repo: &'a Repository, goal_id: &str) -> Result<&'a GoalWorkflow, RenderError> {
    repo.get(goal_id).ok_or_else(|| RenderError::UnknownGoal(goal_id.to_string()))
}

fn render_step(w: &GoalWorkflow, index: usize, templates: &TemplateSet) -> Result<String, RenderError> {
    let step = w.step(index).ok_or_else(|| RenderError::UnknownStep {
        goal_id: w.id.clone(),
        index,
    })?;
    let i = (index + 1).to_string();
    let n = w.steps.len().to_string();
    Ok(templates.fill(
        "step",
        &[
            ("i", &i),
            ("n", &n),
            ("name", trim_terminator(&step.name)),
            ("description", &step.description),
        ],
    ))
}

/// Text for every action that does not need the QA service or the model.
/// An overview also presents the first step.
pub fn render_guidance(
    action: &PolicyAction,
    repo: &Repository,
    templates: &TemplateSet,
) -> Result<String, RenderError> {
    match action {
        PolicyAction::PresentOverview { goal_id } => {
            let w = workflow(repo, goal_id)?;
            let steps = w
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| format!("Step {}: {}", i + 1, s.name))
                .collect::<Vec<_>>()
                .join("\n");
            let current = render_step(w, 0, templates)?;
            Ok(templates.fill("overview", &[("goal", &w.goal), ("steps", &steps), ("current_step", &current)]))
        }
        PolicyAction::PresentStep { goal_id, index } => render_step(workflow(repo, goal_id)?, *index, templates),
        PolicyAction::AskTransition { goal_id, step_index } => {
            let w = workflow(repo, goal_id)?;
            let step = w.step(*step_index).ok_or_else(|| RenderError::UnknownStep {
                goal_id: goal_id.clone(),
                index: *step_index,
            })?;
            Ok(templates.fill(
                "transition_question",
                &[
                    ("goal", &w.goal),
                    ("goal_gerund", &goal_phrase(&w.goal)),
                    ("step_name", trim_terminator(&step.name)),
                ],
            ))
        }
        PolicyAction::ConfirmCompletion { goal_id } => {
            let w = workflow(repo, goal_id)?;
            Ok(templates.fill("completion", &[("goal", &w.goal)]))
        }
        PolicyAction::Farewell => Ok(templates.fill("farewell", &[])),
        PolicyAction::DeclineTransition => Ok(templates.fill("transition_declined", &[])),
        PolicyAction::Clarify { reason } => Ok(match reason {
            ClarifyReason::NoActiveTask => templates.fill("clarify", &[]),
            ClarifyReason::AnythingElse => templates.fill("anything_else", &[]),
            ClarifyReason::ExecutionHelp => templates.fill("execution_help", &[]),
            ClarifyReason::GoalUnavailable => templates.fill("goal_unavailable", &[]),
            ClarifyReason::StepOutOfRange { requested, total } => templates.fill(
                "step_out_of_range",
                &[("requested", &requested.to_string()), ("n", &total.to_string())],
            ),
            ClarifyReason::StepAlreadyCovered { goal_id, step } => {
                let w = workflow(repo, goal_id)?;
                let name = w.step(*step).map(|s| trim_terminator(&s.name)).unwrap_or("");
                templates.fill("step_already_covered", &[("i", &(step + 1).to_string()), ("name", name)])
            }
            ClarifyReason::TaskAlreadyComplete { goal_id } => {
                templates.fill("task_complete", &[("goal", &workflow(repo, goal_id)?.goal)])
            }
        }),
        other => Err(RenderError::NotGuidance(other.name())),
    }
}

/// One-line reorientation after an in-task answer.
pub fn restatement(w: &GoalWorkflow, index: usize, templates: &TemplateSet) -> Option<String> {
    let step = w.step(index)?;
    Some(templates.fill(
        "restate_step",
        &[("i", &(index + 1).to_string()), ("name", trim_terminator(&step.name))],
    ))
}

/// The data services behind question answering.
#[derive(Clone, Copy)]
pub struct QaContext<'a> {
    pub kb: &'a KbIndex,
    pub store: &'a OperationalStore,
    pub llm: &'a dyn LlmGateway,
    pub templates: &'a TemplateSet,
}

pub fn render_qa(kind: QuestionKind, question: &str, qa: &QaContext<'_>) -> AnswerBundle {
    match kind {
        QuestionKind::ProductKnowledge => answer_product(question, qa.kb, qa.llm),
        QuestionKind::OperationalInsights => answer_operational(question, qa.store),
        QuestionKind::OutOfScope => AnswerBundle::plain(qa.templates.get("out_of_scope")),
    }
}

/// Result of rendering a slot-filling action.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRender {
    pub text: String,
    /// Set for slot requests: the missing slot the text asks about.
    pub last_requested_slot: Option<String>,
    pub answer: Option<AnswerBundle>,
    pub used_fallback: bool,
    pub diagnostics: Vec<String>,
}

fn slot_lines(belief: &BeliefState) -> String {
    belief
        .filled()
        .iter()
        .map(|(n, v)| format!("- {n}: {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The missing slot named earliest in `text`, if any.
fn mentioned_slot(text: &str, missing: &[String]) -> Option<String> {
    let lower = text.to_lowercase();
    missing
        .iter()
        .filter_map(|s| lower.find(&s.to_lowercase()).map(|at| (at, s)))
        .min_by_key(|(at, s)| (*at, usize::MAX - s.len()))
        .map(|(_, s)| s.clone())
}

/// Remove every answer token; a leading one is replaced by `answer`.
fn substitute_answer(raw: &str, answer: &str) -> String {
    let trimmed = raw.trim_start();
    let (head, rest) = match trimmed.strip_prefix(ANSWER_TOKEN) {
        Some(rest) => (Some(answer), rest),
        None => (None, trimmed),
    };
    let rest = rest.replace(ANSWER_TOKEN, "");
    let rest = rest.trim();
    match head {
        Some(a) if rest.is_empty() => a.trim().to_string(),
        Some(a) => format!("{} {}", a.trim(), rest),
        None => rest.to_string(),
    }
}

/// Render a slot request, an answer followed by a request, or the final
/// summary. Gateway failures and empty model output fall back to templates.
#[allow(clippy::too_many_arguments)]
pub fn render_slotfilling(
    action: &PolicyAction,
    belief: &BeliefState,
    w: &GoalWorkflow,
    history: &[Turn],
    utterance: &str,
    question_kind: QuestionKind,
    qa: &QaContext<'_>,
) -> Result<SlotRender, RenderError> {
    let requested = match action {
        PolicyAction::RequestSlot { slot } | PolicyAction::AnswerThenRequestSlot { slot, .. } => Some(slot.clone()),
        PolicyAction::SummarizeSlots => None,
        other => return Err(RenderError::NotGuidance(other.name())),
    };
    let missing = missing_required(belief);
    let mut diagnostics = Vec::new();
    let mut answer: Option<AnswerBundle> = None;
    let answer_for = |answer: &mut Option<AnswerBundle>| -> String {
        answer
            .get_or_insert_with(|| render_qa(question_kind, utterance, qa))
            .display_text()
    };
    if matches!(action, PolicyAction::AnswerThenRequestSlot { .. }) {
        answer_for(&mut answer);
    }

    let filled = slot_lines(belief);
    let missing_text = missing.join("\n");
    let history_text = format_history(history);
    let prompt = render(
        TemplateName::SlotfillRg,
        &[
            ("task", &w.goal),
            ("filled_slots", &filled),
            ("missing_slots", &missing_text),
            ("chat_history", &history_text),
            ("current_utterance", utterance),
        ],
    )
    .expect("slot-filling bindings are complete");

    let model_text = match qa.llm.complete(TemplateName::SlotfillRg, &prompt) {
        Ok(raw) => {
            let answer_text = if raw.trim_start().starts_with(ANSWER_TOKEN) {
                answer_for(&mut answer)
            } else {
                String::new()
            };
            let text = substitute_answer(&raw, &answer_text);
            if text.is_empty() {
                diagnostics.push("rg: model returned no text; using fallback template".to_string());
                None
            } else {
                Some(text)
            }
        }
        Err(e) => {
            diagnostics.push(format!("rg: {e}; using fallback template"));
            None
        }
    };

    let used_fallback = model_text.is_none();
    let text = match model_text {
        Some(t) => t,
        None => match &requested {
            Some(slot) => {
                let request = qa.templates.fill("slot_request_fallback", &[("slot", slot)]);
                match &answer {
                    Some(a) => format!("{}\n\n{}", a.display_text(), request),
                    None => request,
                }
            }
            None => qa.templates.fill(
                "slot_summary_fallback",
                &[("task", &w.goal), ("task_lower", &lower_first(trim_terminator(&w.goal))), ("filled", &filled)],
            ),
        },
    };
    let last_requested_slot = requested.map(|slot| {
        if used_fallback {
            slot
        } else {
            mentioned_slot(&text, &missing).unwrap_or(slot)
        }
    });
    Ok(SlotRender {
        text,
        last_requested_slot,
        answer,
        used_fallback,
        diagnostics,
    })
}

fn lower_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}
