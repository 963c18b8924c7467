//! Hierarchical dialogue state machine and dialogue policy.
//!
//! Two phases, each with fine-grained sub-states:
//!
//! ```text
//! GoalPending    AwaitingQuery
//!                ProposingTransition(goal, matched step)
//! GoalExecution  PresentingOverview     (guidance)
//!                ExecutingStep          (guidance)
//!                CollectingSlots        (slot-filling)
//!                Completed
//! ```
//!
//! [`step`] is total: every (state, intent, match) combination has a
//! successor and exactly one [`PolicyAction`]. Combinations with no useful
//! meaning resolve to [`PolicyAction::Clarify`].

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::dst::{missing_required, BeliefState};
use crate::goal::{GoalWorkflow, Paradigm, Repository};
use crate::nlu::{Intent, IntentLabel, NavDirection, QuestionKind};
use crate::retriever::MatchKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    GoalPending,
    GoalExecution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum SubState {
    AwaitingQuery,
    ProposingTransition {
        goal_id: String,
        step_index: usize,
        /// Set once the proposal has been repeated after an unclear reply.
        reasked: bool,
    },
    PresentingOverview,
    ExecutingStep,
    CollectingSlots,
    Completed,
}

impl SubState {
    pub fn phase(&self) -> Phase {
        match self {
            Self::AwaitingQuery | Self::ProposingTransition { .. } => Phase::GoalPending,
            _ => Phase::GoalExecution,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AwaitingQuery => "awaiting_query",
            Self::ProposingTransition { .. } => "proposing_transition",
            Self::PresentingOverview => "presenting_overview",
            Self::ExecutingStep => "executing_step",
            Self::CollectingSlots => "collecting_slots",
            Self::Completed => "completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueState {
    pub phase: Phase,
    pub sub_state: SubState,
    pub active_goal: Option<String>,
    pub step_cursor: Option<usize>,
    #[serde(default)]
    pub skipped_steps: BTreeSet<usize>,
    #[serde(default)]
    pub belief: Option<BeliefState>,
}

impl Default for DialogueState {
    fn default() -> Self {
        Self::pending()
    }
}

impl DialogueState {
    pub fn pending() -> Self {
        Self {
            phase: Phase::GoalPending,
            sub_state: SubState::AwaitingQuery,
            active_goal: None,
            step_cursor: None,
            skipped_steps: BTreeSet::new(),
            belief: None,
        }
    }

    pub fn proposing(goal_id: &str, step_index: usize, reasked: bool) -> Self {
        Self {
            sub_state: SubState::ProposingTransition {
                goal_id: goal_id.to_string(),
                step_index,
                reasked,
            },
            ..Self::pending()
        }
    }

    fn guidance(sub_state: SubState, goal_id: &str, cursor: usize, skipped: BTreeSet<usize>) -> Self {
        Self {
            phase: Phase::GoalExecution,
            sub_state,
            active_goal: Some(goal_id.to_string()),
            step_cursor: Some(cursor),
            skipped_steps: skipped,
            belief: None,
        }
    }

    pub fn overview(goal_id: &str, cursor: usize, skipped: BTreeSet<usize>) -> Self {
        Self::guidance(SubState::PresentingOverview, goal_id, cursor, skipped)
    }

    pub fn executing(goal_id: &str, cursor: usize, skipped: BTreeSet<usize>) -> Self {
        Self::guidance(SubState::ExecutingStep, goal_id, cursor, skipped)
    }

    pub fn completed_guidance(goal_id: &str, cursor: usize, skipped: BTreeSet<usize>) -> Self {
        Self::guidance(SubState::Completed, goal_id, cursor, skipped)
    }

    pub fn collecting(belief: BeliefState) -> Self {
        Self {
            phase: Phase::GoalExecution,
            sub_state: SubState::CollectingSlots,
            active_goal: Some(belief.workflow_id.clone()),
            step_cursor: None,
            skipped_steps: BTreeSet::new(),
            belief: Some(belief),
        }
    }

    pub fn completed_slots(belief: BeliefState) -> Self {
        Self {
            sub_state: SubState::Completed,
            ..Self::collecting(belief)
        }
    }

    /// Check the structural invariants against the repository the state
    /// refers to.
    pub fn check(&self, repo: &Repository) -> Result<(), String> {
        if self.phase != self.sub_state.phase() {
            return Err(format!("phase {:?} does not match sub-state {}", self.phase, self.sub_state.name()));
        }
        if self.phase == Phase::GoalPending {
            if self.active_goal.is_some() || self.step_cursor.is_some() || self.belief.is_some() {
                return Err("pending state carries an active goal".into());
            }
            if let SubState::ProposingTransition { goal_id, step_index, .. } = &self.sub_state {
                let w = repo.get(goal_id).ok_or_else(|| format!("unknown goal {goal_id}"))?;
                if *step_index >= w.steps.len() {
                    return Err(format!("proposed step {step_index} out of range"));
                }
            }
            return Ok(());
        }
        let goal_id = self.active_goal.as_deref().ok_or("execution without an active goal")?;
        let w = repo.get(goal_id).ok_or_else(|| format!("unknown goal {goal_id}"))?;
        match w.paradigm() {
            Paradigm::Guidance => {
                let cursor = self.step_cursor.ok_or("guidance without a step cursor")?;
                if cursor >= w.steps.len() {
                    return Err(format!("cursor {cursor} out of range"));
                }
                if self.skipped_steps.contains(&cursor) && self.sub_state != SubState::Completed {
                    return Err(format!("cursor {cursor} is on a skipped step"));
                }
                if matches!(self.sub_state, SubState::CollectingSlots) {
                    return Err("collecting slots for a guidance goal".into());
                }
                if self.belief.is_some() {
                    return Err("guidance state carries a belief".into());
                }
            }
            Paradigm::SlotFilling => {
                let belief = self.belief.as_ref().ok_or("slot-filling without a belief")?;
                if !belief.matches_schema(w) {
                    return Err("belief slots differ from the workflow".into());
                }
                if matches!(self.sub_state, SubState::PresentingOverview | SubState::ExecutingStep) {
                    return Err("guidance sub-state for a slot-filling goal".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<Intent>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl Turn {
    pub fn new(index: usize, speaker: Speaker, text: &str, timestamp: u64) -> Self {
        Self {
            index,
            speaker,
            text: text.to_string(),
            intent: None,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum ClarifyReason {
    NoActiveTask,
    AnythingElse,
    StepOutOfRange { requested: usize, total: usize },
    StepAlreadyCovered { goal_id: String, step: usize },
    ExecutionHelp,
    TaskAlreadyComplete { goal_id: String },
    GoalUnavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum PolicyAction {
    PresentOverview { goal_id: String },
    PresentStep { goal_id: String, index: usize },
    AskTransition { goal_id: String, step_index: usize },
    /// Question answered by the QA service; during guidance the current step
    /// is restated afterwards.
    AnswerQuestion { kind: QuestionKind, restate_step: Option<usize> },
    RequestSlot { slot: String },
    SummarizeSlots,
    AnswerThenRequestSlot { slot: String, kind: QuestionKind },
    ConfirmCompletion { goal_id: String },
    Farewell,
    /// Non-question utterance that triggered no goal, answered through QA.
    FallbackQa { kind: QuestionKind, restate_step: Option<usize> },
    DeclineTransition,
    Clarify { reason: ClarifyReason },
}

impl PolicyAction {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PresentOverview { .. } => "present_overview",
            Self::PresentStep { .. } => "present_step",
            Self::AskTransition { .. } => "ask_transition",
            Self::AnswerQuestion { .. } => "answer_question",
            Self::RequestSlot { .. } => "request_slot",
            Self::SummarizeSlots => "summarize_slots",
            Self::AnswerThenRequestSlot { .. } => "answer_then_request_slot",
            Self::ConfirmCompletion { .. } => "confirm_completion",
            Self::Farewell => "farewell",
            Self::FallbackQa { .. } => "fallback_qa",
            Self::DeclineTransition => "decline_transition",
            Self::Clarify { .. } => "clarify",
        }
    }

    /// Slot-filling actions are rendered by the model-backed generator.
    pub fn is_slot_action(&self) -> bool {
        matches!(
            self,
            Self::RequestSlot { .. } | Self::SummarizeSlots | Self::AnswerThenRequestSlot { .. }
        )
    }
}

/// Everything the policy needs to know about the current utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnInput {
    pub intent: IntentLabel,
    pub matched: MatchKind,
    pub question_kind: QuestionKind,
}

fn next_open(cursor: usize, total: usize, skipped: &BTreeSet<usize>) -> Option<usize> {
    (cursor + 1..total).find(|i| !skipped.contains(i))
}

fn prev_open(cursor: usize, skipped: &BTreeSet<usize>) -> Option<usize> {
    (0..cursor).rev().find(|i| !skipped.contains(i))
}

fn first_open(total: usize, skipped: &BTreeSet<usize>) -> Option<usize> {
    (0..total).find(|i| !skipped.contains(i))
}

fn start_goal(w: &GoalWorkflow) -> (DialogueState, PolicyAction) {
    match w.paradigm() {
        Paradigm::Guidance => (
            DialogueState::overview(&w.id, 0, BTreeSet::new()),
            PolicyAction::PresentOverview { goal_id: w.id.clone() },
        ),
        Paradigm::SlotFilling => slot_progress(BeliefState::new(w), None),
    }
}

/// Request the next missing slot, or conclude when none is missing.
fn slot_progress(mut belief: BeliefState, question: Option<QuestionKind>) -> (DialogueState, PolicyAction) {
    match missing_required(&belief).into_iter().next() {
        Some(slot) => {
            belief.last_requested_slot = Some(slot.clone());
            let action = match question {
                Some(kind) => PolicyAction::AnswerThenRequestSlot { slot, kind },
                None => PolicyAction::RequestSlot { slot },
            };
            (DialogueState::collecting(belief), action)
        }
        None => (DialogueState::completed_slots(belief), PolicyAction::SummarizeSlots),
    }
}

fn propose(w: &GoalWorkflow, step_index: usize) -> (DialogueState, PolicyAction) {
    (
        DialogueState::proposing(&w.id, step_index, false),
        PolicyAction::AskTransition {
            goal_id: w.id.clone(),
            step_index,
        },
    )
}

fn clarify(state: &DialogueState, reason: ClarifyReason) -> (DialogueState, PolicyAction) {
    (state.clone(), PolicyAction::Clarify { reason })
}

/// A goal-triggering utterance while nothing (or a finished goal) is active.
fn handle_query(input: &TurnInput, repo: &Repository) -> (DialogueState, PolicyAction) {
    match &input.matched {
        MatchKind::HighLevel { goal_id } => match repo.get(goal_id) {
            Some(w) => start_goal(w),
            None => (DialogueState::pending(), PolicyAction::Clarify { reason: ClarifyReason::GoalUnavailable }),
        },
        MatchKind::SubGoal { goal_id, step_index } => match repo.get(goal_id) {
            Some(w) if *step_index < w.steps.len() => propose(w, *step_index),
            Some(w) => start_goal(w),
            None => (DialogueState::pending(), PolicyAction::Clarify { reason: ClarifyReason::GoalUnavailable }),
        },
        MatchKind::NoMatch => {
            let kind = input.question_kind;
            let action = if input.intent == IntentLabel::Question {
                PolicyAction::AnswerQuestion { kind, restate_step: None }
            } else {
                PolicyAction::FallbackQa { kind, restate_step: None }
            };
            (DialogueState::pending(), action)
        }
    }
}

fn accept_transition(w: &GoalWorkflow, matched: usize) -> (DialogueState, PolicyAction) {
    let skipped: BTreeSet<usize> = [matched].into_iter().collect();
    match first_open(w.steps.len(), &skipped) {
        Some(cursor) => (
            DialogueState::executing(&w.id, cursor, skipped),
            PolicyAction::PresentStep {
                goal_id: w.id.clone(),
                index: cursor,
            },
        ),
        None => (
            DialogueState::completed_guidance(&w.id, matched, skipped),
            PolicyAction::ConfirmCompletion { goal_id: w.id.clone() },
        ),
    }
}

fn guidance_step(
    state: &DialogueState,
    input: &TurnInput,
    w: &GoalWorkflow,
    repo: &Repository,
) -> (DialogueState, PolicyAction) {
    let total = w.steps.len();
    let skipped = &state.skipped_steps;
    let cursor = state.step_cursor.unwrap_or(0).min(total.saturating_sub(1));
    let goal_id = w.id.as_str();
    let present = |index: usize| {
        (
            DialogueState::executing(goal_id, index, skipped.clone()),
            PolicyAction::PresentStep {
                goal_id: goal_id.to_string(),
                index,
            },
        )
    };
    let complete = || {
        (
            DialogueState::completed_guidance(goal_id, cursor, skipped.clone()),
            PolicyAction::ConfirmCompletion {
                goal_id: goal_id.to_string(),
            },
        )
    };
    match input.intent {
        IntentLabel::Stop => (DialogueState::pending(), PolicyAction::Farewell),
        IntentLabel::TaskCompletion => complete(),
        IntentLabel::Acknowledge | IntentLabel::Navigation { direction: NavDirection::Next } => {
            match next_open(cursor, total, skipped) {
                Some(i) => present(i),
                None => complete(),
            }
        }
        IntentLabel::Navigation { direction: NavDirection::Prev } => {
            present(prev_open(cursor, skipped).unwrap_or(cursor))
        }
        IntentLabel::Navigation { direction: NavDirection::Repeat } => {
            if state.sub_state == SubState::PresentingOverview {
                (state.clone(), PolicyAction::PresentOverview { goal_id: goal_id.to_string() })
            } else {
                present(cursor)
            }
        }
        IntentLabel::Navigation { direction: NavDirection::GotoStep(n) } => {
            if n == 0 || n > total {
                clarify(state, ClarifyReason::StepOutOfRange { requested: n, total })
            } else if skipped.contains(&(n - 1)) {
                clarify(state, ClarifyReason::StepAlreadyCovered { goal_id: goal_id.to_string(), step: n - 1 })
            } else {
                present(n - 1)
            }
        }
        IntentLabel::Negation => clarify(state, ClarifyReason::ExecutionHelp),
        IntentLabel::Question => (
            state.clone(),
            PolicyAction::AnswerQuestion {
                kind: input.question_kind,
                restate_step: Some(cursor),
            },
        ),
        IntentLabel::GoalTrigger => match &input.matched {
            MatchKind::SubGoal { goal_id: g, step_index } if g == goal_id => {
                if skipped.contains(step_index) {
                    clarify(state, ClarifyReason::StepAlreadyCovered { goal_id: goal_id.to_string(), step: *step_index })
                } else if *step_index < total {
                    present(*step_index)
                } else {
                    clarify(state, ClarifyReason::StepOutOfRange { requested: step_index + 1, total })
                }
            }
            // Asking for the same goal again starts it over.
            MatchKind::HighLevel { goal_id: g } if g == goal_id => start_goal(w),
            MatchKind::HighLevel { .. } | MatchKind::SubGoal { .. } => handle_query(input, repo),
            MatchKind::NoMatch => (
                state.clone(),
                PolicyAction::FallbackQa {
                    kind: input.question_kind,
                    restate_step: Some(cursor),
                },
            ),
        },
    }
}

fn slot_step(state: &DialogueState, input: &TurnInput) -> (DialogueState, PolicyAction) {
    let belief = state.belief.clone().expect("slot-filling state has a belief");
    match input.intent {
        IntentLabel::Stop => (DialogueState::pending(), PolicyAction::Farewell),
        IntentLabel::Question => slot_progress(belief, Some(input.question_kind)),
        _ => slot_progress(belief, None),
    }
}

fn completed_step(state: &DialogueState, input: &TurnInput, w: &GoalWorkflow, repo: &Repository) -> (DialogueState, PolicyAction) {
    match input.intent {
        IntentLabel::Stop => (DialogueState::pending(), PolicyAction::Farewell),
        IntentLabel::GoalTrigger | IntentLabel::Question => handle_query(input, repo),
        IntentLabel::Acknowledge | IntentLabel::Negation | IntentLabel::TaskCompletion => (
            DialogueState::pending(),
            PolicyAction::Clarify { reason: ClarifyReason::AnythingElse },
        ),
        IntentLabel::Navigation { direction: NavDirection::Prev } if w.paradigm() == Paradigm::Guidance => {
            let total = w.steps.len();
            match (0..total).rev().find(|i| !state.skipped_steps.contains(i)) {
                Some(last) => (
                    DialogueState::executing(&w.id, last, state.skipped_steps.clone()),
                    PolicyAction::PresentStep {
                        goal_id: w.id.clone(),
                        index: last,
                    },
                ),
                None => clarify(state, ClarifyReason::TaskAlreadyComplete { goal_id: w.id.clone() }),
            }
        }
        IntentLabel::Navigation { .. } => clarify(state, ClarifyReason::TaskAlreadyComplete { goal_id: w.id.clone() }),
    }
}

/// One policy decision. The slot-filling belief in `state` must already
/// include this turn's tracking update.
pub fn step(state: &DialogueState, input: &TurnInput, repo: &Repository) -> (DialogueState, PolicyAction) {
    match &state.sub_state {
        SubState::AwaitingQuery => match input.intent {
            IntentLabel::Stop => (DialogueState::pending(), PolicyAction::Farewell),
            IntentLabel::GoalTrigger | IntentLabel::Question => handle_query(input, repo),
            _ => clarify(state, ClarifyReason::NoActiveTask),
        },
        SubState::ProposingTransition { goal_id, step_index, reasked } => {
            let Some(w) = repo.get(goal_id) else {
                return (DialogueState::pending(), PolicyAction::Clarify { reason: ClarifyReason::GoalUnavailable });
            };
            match input.intent {
                IntentLabel::Acknowledge => accept_transition(w, *step_index),
                IntentLabel::Negation => (DialogueState::pending(), PolicyAction::DeclineTransition),
                IntentLabel::Stop => (DialogueState::pending(), PolicyAction::Farewell),
                _ if !reasked => (
                    DialogueState::proposing(goal_id, *step_index, true),
                    PolicyAction::AskTransition {
                        goal_id: goal_id.clone(),
                        step_index: *step_index,
                    },
                ),
                _ => (DialogueState::pending(), PolicyAction::DeclineTransition),
            }
        }
        SubState::PresentingOverview | SubState::ExecutingStep | SubState::CollectingSlots | SubState::Completed => {
            let Some(w) = state.active_goal.as_deref().and_then(|g| repo.get(g)) else {
                return (DialogueState::pending(), PolicyAction::Clarify { reason: ClarifyReason::GoalUnavailable });
            };
            match (&state.sub_state, w.paradigm()) {
                (SubState::Completed, _) => completed_step(state, input, w, repo),
                (_, Paradigm::SlotFilling) if state.belief.is_some() => slot_step(state, input),
                (_, Paradigm::Guidance) if w.steps.is_empty() => {
                    (DialogueState::pending(), PolicyAction::Clarify { reason: ClarifyReason::GoalUnavailable })
                }
                (_, Paradigm::Guidance) => guidance_step(state, input, w, repo),
                _ => (DialogueState::pending(), PolicyAction::Clarify { reason: ClarifyReason::GoalUnavailable }),
            }
        }
    }
}
