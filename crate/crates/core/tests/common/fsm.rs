// Exhaustive exploration of the dialogue state machine over a small
// repository: one guidance goal and one slot-filling goal.

use goalflow_core::dialogue::{step, DialogueState, PolicyAction, SubState, TurnInput};
use goalflow_core::dst::missing_required;
use goalflow_core::goal::{Paradigm, Repository};
use goalflow_core::nlu::{IntentLabel, NavDirection, QuestionKind};
use goalflow_core::retriever::MatchKind;
use std::collections::{BTreeSet, HashMap, VecDeque};

#[derive(Debug, Default)]
pub struct Exploration {
    pub states: usize,
    pub transitions: usize,
    pub sub_states: BTreeSet<&'static str>,
    pub cursors: BTreeSet<usize>,
}

fn key(s: &DialogueState) -> String {
    serde_json::to_string(s).expect("state serializes")
}

/// Every intent label with every navigation direction, including
/// out-of-range step numbers.
pub fn intents(steps: usize) -> Vec<IntentLabel> {
    let mut out = vec![
        IntentLabel::Acknowledge,
        IntentLabel::Negation,
        IntentLabel::Stop,
        IntentLabel::TaskCompletion,
        IntentLabel::Question,
        IntentLabel::GoalTrigger,
    ];
    for d in [NavDirection::Next, NavDirection::Prev, NavDirection::Repeat] {
        out.push(IntentLabel::Navigation { direction: d });
    }
    for n in 0..=steps + 1 {
        out.push(IntentLabel::Navigation {
            direction: NavDirection::GotoStep(n),
        });
    }
    out
}

pub fn match_kinds(repo: &Repository) -> Vec<MatchKind> {
    let mut out = vec![MatchKind::NoMatch];
    for w in repo.workflows() {
        out.push(MatchKind::HighLevel { goal_id: w.id.clone() });
        if w.paradigm() == Paradigm::Guidance {
            for k in 0..w.steps.len() {
                out.push(MatchKind::SubGoal {
                    goal_id: w.id.clone(),
                    step_index: k,
                });
            }
        }
    }
    out
}

/// States the policy may see: the state itself, plus for slot collection
/// the state after tracking filled one more slot.
fn policy_views(s: &DialogueState) -> Vec<DialogueState> {
    let mut out = vec![s.clone()];
    if s.sub_state == SubState::CollectingSlots {
        if let Some(b) = &s.belief {
            if let Some(slot) = missing_required(b).first() {
                let mut filled = s.clone();
                let fb = filled.belief.as_mut().unwrap();
                fb.slots.iter_mut().find(|v| &v.name == slot).unwrap().value = format!("value of {slot}");
                out.push(filled);
            }
        }
    }
    out
}

fn successors(repo: &Repository, s: &DialogueState, steps: usize) -> Vec<(DialogueState, TurnInput, DialogueState, PolicyAction)> {
    let mut out = Vec::new();
    for view in policy_views(s) {
        for intent in intents(steps) {
            for matched in match_kinds(repo) {
                let input = TurnInput {
                    intent,
                    matched,
                    question_kind: QuestionKind::OutOfScope,
                };
                let (next, action) = step(&view, &input, repo);
                out.push((view.clone(), input, next, action));
            }
        }
    }
    out
}

/// Breadth-first search from the initial state. Every transition must land
/// in a valid state and must never present a step already covered.
/// Also checks that a completed state is reachable from every state.
pub fn explore(repo: &Repository) -> Result<Exploration, String> {
    let steps = repo.workflows().iter().map(|w| w.steps.len()).max().unwrap_or(0);
    let mut report = Exploration::default();
    let start = DialogueState::pending();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut states: Vec<DialogueState> = Vec::new();
    let mut edges: Vec<Vec<usize>> = vec![Vec::new()];
    ids.insert(key(&start), 0);
    states.push(start);
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let s = states[id].clone();
        report.states += 1;
        report.sub_states.insert(s.sub_state.name());
        if s.sub_state == SubState::ExecutingStep {
            report.cursors.insert(s.step_cursor.unwrap());
        }
        let mut out = Vec::new();
        for (view, input, next, action) in successors(repo, &s, steps) {
            report.transitions += 1;
            next.check(repo)
                .map_err(|e| format!("{} --{:?}/{:?}--> invalid state: {e}", view.sub_state.name(), input.intent, input.matched))?;
            if let PolicyAction::PresentStep { goal_id, index } = &action {
                if next.active_goal.as_deref() != Some(goal_id) || next.step_cursor != Some(*index) {
                    return Err(format!("presented step {index} of {goal_id} but state is {next:?}"));
                }
                if next.skipped_steps.contains(index) {
                    return Err(format!("presented skipped step {index} from {view:?} on {input:?}"));
                }
            }
            let same_execution = view.active_goal.is_some()
                && view.active_goal == next.active_goal
                && !matches!(action, PolicyAction::PresentOverview { .. });
            if same_execution && !view.skipped_steps.is_subset(&next.skipped_steps) {
                return Err(format!("skipped steps shrank from {view:?} to {next:?}"));
            }
            let k = key(&next);
            let next_id = match ids.get(&k) {
                Some(&i) => i,
                None => {
                    let i = states.len();
                    ids.insert(k, i);
                    states.push(next);
                    edges.push(Vec::new());
                    queue.push_back(i);
                    i
                }
            };
            out.push(next_id);
        }
        edges[id] = out;
    }

    // Backward fixpoint: which states can reach a completed state.
    let mut can_complete: Vec<bool> = states.iter().map(|s| s.sub_state == SubState::Completed).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for (i, outs) in edges.iter().enumerate() {
            if !can_complete[i] && outs.iter().any(|&j| can_complete[j]) {
                can_complete[i] = true;
                changed = true;
            }
        }
    }
    if let Some(i) = (0..states.len()).find(|&i| !can_complete[i]) {
        return Err(format!("completion unreachable from {:?}", states[i]));
    }
    Ok(report)
}

/// Full model check: validity, completion, and every sub-state and
/// guidance cursor reachable.
pub fn model_check(repo: &Repository) -> Result<Exploration, String> {
    let report = explore(repo)?;
    let all: BTreeSet<&str> = [
        "awaiting_query",
        "proposing_transition",
        "presenting_overview",
        "executing_step",
        "collecting_slots",
        "completed",
    ]
    .into_iter()
    .collect();
    if report.sub_states != all {
        return Err(format!("unreached sub-states: {:?}", all.difference(&report.sub_states).collect::<Vec<_>>()));
    }
    let guidance_steps = repo
        .workflows()
        .iter()
        .filter(|w| w.paradigm() == Paradigm::Guidance)
        .map(|w| w.steps.len())
        .max()
        .unwrap_or(0);
    let cursors: BTreeSet<usize> = (0..guidance_steps).collect();
    if !cursors.is_subset(&report.cursors) {
        return Err(format!("unreached cursors: {:?}", cursors.difference(&report.cursors).collect::<Vec<_>>()));
    }
    Ok(report)
}
