//! One dialogue turn end to end.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dialogue::{self, DialogueState, PolicyAction, Speaker, SubState, Turn, TurnInput};
use crate::dst::{self, BeliefState};
use crate::gateway::LlmGateway;
use crate::goal::{Paradigm, Repository};
use crate::nlu::{classify, HeuristicRouter, Intent, IntentLabel, KeywordLists, NluError, QuestionKind, QuestionRouter};
use crate::ops::OperationalStore;
use crate::qa::{AnswerBundle, KbIndex};
use crate::respond::{render_guidance, render_qa, render_slotfilling, restatement, QaContext, TemplateSet};
use crate::retriever::{EmbedError, GoalIndex, MatchKind, MatchResult};

/// A conversation and its dialogue state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub dialogue_state: DialogueState,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

impl Session {
    pub fn new(session_id: &str, now: u64) -> Self {
        Self {
            session_id: session_id.to_string(),
            turns: Vec::new(),
            dialogue_state: DialogueState::pending(),
            created_at: now,
            updated_at: now,
        }
    }

    /// Turn indices are dense and timestamps never go backwards.
    pub fn check_turns(&self) -> Result<(), String> {
        for (i, t) in self.turns.iter().enumerate() {
            if t.index != i {
                return Err(format!("turn {i} has index {}", t.index));
            }
        }
        if self.turns.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err("turn timestamps go backwards".into());
        }
        Ok(())
    }
}

/// Guidance progress for display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepView {
    pub goal_id: String,
    /// 0-based.
    pub index: usize,
    pub total: usize,
    pub name: String,
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TurnDiagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "match")]
    pub matched: Option<MatchResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_kind: Option<QuestionKind>,
    pub dst_fallback: bool,
    pub rg_fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantReply {
    pub text: String,
    pub intent: Intent,
    /// Absent when the turn failed and an apology was sent instead.
    pub action: Option<PolicyAction>,
    pub state: DialogueState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BeliefState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub citations: Vec<String>,
    pub diagnostics: TurnDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineError {
    EmptyUtterance,
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyUtterance => write!(f, "utterance is empty"),
        }
    }
}

/// Immutable snapshot of everything a turn reads. Cheap to share; replace
/// the whole engine to change the repository or knowledge base.
#[derive(Clone)]
pub struct Engine {
    repo: Repository,
    index: GoalIndex,
    keywords: KeywordLists,
    router: Arc<dyn QuestionRouter>,
    kb: KbIndex,
    store: OperationalStore,
    templates: TemplateSet,
    llm: Arc<dyn LlmGateway>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("goals", &self.repo.len())
            .field("index", &self.index)
            .field("documents", &self.kb.doc_count())
            .field("llm", &self.llm.kind())
            .finish()
    }
}

struct Rendered {
    text: String,
    state: DialogueState,
    citations: Vec<String>,
}

impl Engine {
    /// Engine with the default keyword lists, router, templates and
    /// retriever.
    pub fn new(repo: Repository, kb: KbIndex, store: OperationalStore, llm: Arc<dyn LlmGateway>) -> Self {
        let index = GoalIndex::with_default_embedder(&repo);
        Self {
            repo,
            index,
            keywords: KeywordLists::default(),
            router: Arc::new(HeuristicRouter),
            kb,
            store,
            templates: TemplateSet::defaults(),
            llm,
        }
    }

    /// Replace the match index. It must have been built over this
    /// engine's repository.
    pub fn with_index(mut self, index: GoalIndex) -> Self {
        self.index = index;
        self
    }

    /// Swap the repository and rebuild the match index with the same
    /// embedder and configuration.
    pub fn with_repository(mut self, repo: Repository) -> Result<Self, EmbedError> {
        self.index = self.index.rebuild(&repo)?;
        self.repo = repo;
        Ok(self)
    }

    pub fn with_keywords(mut self, keywords: KeywordLists) -> Self {
        self.keywords = keywords;
        self
    }

    pub fn with_router(mut self, router: Arc<dyn QuestionRouter>) -> Self {
        self.router = router;
        self
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_kb(mut self, kb: KbIndex) -> Self {
        self.kb = kb;
        self
    }

    pub fn with_llm(mut self, llm: Arc<dyn LlmGateway>) -> Self {
        self.llm = llm;
        self
    }

    pub fn repo(&self) -> &Repository {
        &self.repo
    }

    pub fn index(&self) -> &GoalIndex {
        &self.index
    }

    pub fn kb(&self) -> &KbIndex {
        &self.kb
    }

    pub fn store(&self) -> &OperationalStore {
        &self.store
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn keywords(&self) -> &KeywordLists {
        &self.keywords
    }

    pub fn llm(&self) -> &dyn LlmGateway {
        self.llm.as_ref()
    }

    fn qa(&self) -> QaContext<'_> {
        QaContext {
            kb: &self.kb,
            store: &self.store,
            llm: self.llm.as_ref(),
            templates: &self.templates,
        }
    }

    /// Guidance progress for `state`, if a guidance goal is active.
    pub fn step_view(&self, state: &DialogueState) -> Option<StepView> {
        let w = self.repo.get(state.active_goal.as_deref()?)?;
        if w.paradigm() != Paradigm::Guidance {
            return None;
        }
        let index = state.step_cursor?;
        Some(StepView {
            goal_id: w.id.clone(),
            index,
            total: w.steps.len(),
            name: w.step(index)?.name.clone(),
            skipped: state.skipped_steps.iter().copied().collect(),
        })
    }

    /// Run one turn and append the user turn and the reply to `session`.
    /// Downstream failures produce an apology and leave the dialogue state
    /// as it was.
    pub fn handle_turn(&self, session: &mut Session, utterance: &str, now: u64) -> Result<AssistantReply, EngineError> {
        let intent = match classify(utterance, &self.keywords) {
            Ok(i) => i,
            Err(NluError::EmptyUtterance) => return Err(EngineError::EmptyUtterance),
            Err(e) => unreachable!("classify only fails on empty input: {e}"),
        };
        let mut diag = TurnDiagnostics::default();
        let outcome = self.process(session, utterance, &intent, &mut diag);

        let (text, action, state, citations) = match outcome {
            Ok((action, r)) => (r.text, Some(action), r.state, r.citations),
            Err(message) => {
                diag.error = Some(message);
                (
                    self.templates.get("apology").to_string(),
                    None,
                    session.dialogue_state.clone(),
                    Vec::new(),
                )
            }
        };

        let now = now.max(session.turns.last().map_or(0, |t| t.timestamp));
        let mut user = Turn::new(session.turns.len(), Speaker::User, utterance, now);
        user.intent = Some(intent.clone());
        session.turns.push(user);
        session
            .turns
            .push(Turn::new(session.turns.len(), Speaker::Assistant, &text, now));
        session.dialogue_state = state.clone();
        session.updated_at = now;

        Ok(AssistantReply {
            text,
            intent,
            action,
            belief: state.belief.clone(),
            step: self.step_view(&state),
            state,
            citations,
            diagnostics: diag,
        })
    }

    fn process(
        &self,
        session: &Session,
        utterance: &str,
        intent: &Intent,
        diag: &mut TurnDiagnostics,
    ) -> Result<(PolicyAction, Rendered), String> {
        let current = &session.dialogue_state;
        let is_query = matches!(intent.label, IntentLabel::Question | IntentLabel::GoalTrigger);
        let question_kind = if is_query {
            let kind = self.router.route(utterance, &self.kb);
            diag.question_kind = Some(kind);
            kind
        } else {
            QuestionKind::OutOfScope
        };
        let needs_match = is_query
            && !matches!(
                current.sub_state,
                SubState::CollectingSlots | SubState::ProposingTransition { .. }
            );
        let matched = if needs_match {
            let m = self.index.match_query(utterance).map_err(|e| format!("retriever: {e}"))?;
            let kind = m.kind.clone();
            diag.matched = Some(m);
            kind
        } else {
            MatchKind::NoMatch
        };

        let mut tracked = current.clone();
        if current.sub_state == SubState::CollectingSlots && intent.label != IntentLabel::Stop {
            let belief = current.belief.as_ref().ok_or("collecting slots without a belief")?;
            let w = self
                .repo
                .get(&belief.workflow_id)
                .ok_or_else(|| format!("goal {:?} is no longer available", belief.workflow_id))?;
            let outcome = dst::update(belief, w, &session.turns, utterance, self.llm.as_ref());
            diag.dst_fallback = outcome.used_fallback;
            diag.notes.extend(outcome.diagnostics);
            tracked.belief = Some(outcome.belief);
        }

        let input = TurnInput {
            intent: intent.label,
            matched,
            question_kind,
        };
        let (next, action) = dialogue::step(&tracked, &input, &self.repo);
        let rendered = self.render(&action, next, session, utterance, question_kind, diag)?;
        Ok((action, rendered))
    }

    fn render(
        &self,
        action: &PolicyAction,
        mut next: DialogueState,
        session: &Session,
        utterance: &str,
        question_kind: QuestionKind,
        diag: &mut TurnDiagnostics,
    ) -> Result<Rendered, String> {
        let qa = self.qa();
        match action {
            PolicyAction::RequestSlot { .. } | PolicyAction::AnswerThenRequestSlot { .. } | PolicyAction::SummarizeSlots => {
                let belief = next.belief.clone().ok_or("slot action without a belief")?;
                let w = self
                    .repo
                    .get(&belief.workflow_id)
                    .ok_or_else(|| format!("goal {:?} is no longer available", belief.workflow_id))?;
                let r = render_slotfilling(action, &belief, w, &session.turns, utterance, question_kind, &qa)
                    .map_err(|e| format!("response: {e}"))?;
                diag.rg_fallback = r.used_fallback;
                diag.notes.extend(r.diagnostics);
                if let (Some(slot), Some(b)) = (r.last_requested_slot, next.belief.as_mut()) {
                    b.last_requested_slot = Some(slot);
                }
                let citations = r.answer.map(|a| collect_notes(a, diag)).unwrap_or_default();
                Ok(Rendered {
                    text: r.text,
                    state: next,
                    citations,
                })
            }
            PolicyAction::AnswerQuestion { kind, restate_step } | PolicyAction::FallbackQa { kind, restate_step } => {
                let bundle = render_qa(*kind, utterance, &qa);
                let mut text = bundle.display_text();
                let restated = restate_step.and_then(|i| {
                    let w = self.repo.get(next.active_goal.as_deref()?)?;
                    restatement(w, i, &self.templates)
                });
                if let Some(line) = restated {
                    text.push_str("\n\n");
                    text.push_str(&line);
                }
                Ok(Rendered {
                    text,
                    state: next,
                    citations: collect_notes(bundle, diag),
                })
            }
            other => Ok(Rendered {
                text: render_guidance(other, &self.repo, &self.templates).map_err(|e| format!("response: {e}"))?,
                state: next,
                citations: vec![],
            }),
        }
    }
}

/// Keep the answer's diagnostics and hand back its citations.
fn collect_notes(bundle: AnswerBundle, diag: &mut TurnDiagnostics) -> Vec<String> {
    diag.notes.extend(bundle.diagnostics);
    bundle.citations
}
