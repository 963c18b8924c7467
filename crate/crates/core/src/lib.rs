//! Core of a goal-driven task-oriented dialogue engine.
//!
//! The engine unifies two dialogue paradigms over one goal repository:
//! step-by-step guidance, where the user is walked through an ordered list
//! of steps, and slot-filling, where named pieces of information are
//! collected until a task can be summarized.
//!
//! A turn flows through these pieces:
//!
//! - [`nlu`] labels the utterance with an [`nlu::Intent`] and routes
//!   questions to one of three answer kinds,
//! - [`retriever`] matches the utterance against goal descriptions and
//!   individual steps, deciding whether a high-level goal or a sub-goal
//!   was triggered,
//! - [`dialogue`] is the hierarchical state machine (goal pending / goal
//!   execution) and the dialogue policy,
//! - [`dst`] tracks slot values for slot-filling goals,
//! - [`respond`] turns policy actions into text, and
//! - [`qa`] and [`ops`] answer product-documentation and operational
//!   metadata questions.
//!
//! [`engine::Engine`] wires these together for one turn. Everything here is
//! `no_std` + `alloc`; file formats, HTTP and persistence live in the
//! companion `goalflow` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dialogue;
pub mod dst;
pub mod engine;
pub mod enumerate;
pub mod gateway;
pub mod goal;
pub mod nlu;
pub mod ops;
pub mod qa;
pub mod respond;
pub mod retriever;
pub mod text;

pub use dialogue::{DialogueState, Phase, PolicyAction, Speaker, SubState, Turn};
pub use dst::BeliefState;
pub use engine::{AssistantReply, Engine, Session};
pub use gateway::{GatewayError, LlmGateway, TemplateName};
pub use goal::{GoalWorkflow, Paradigm, Repository, SlotSpec, Step, Violation, ViolationCode};
pub use nlu::{Intent, IntentLabel, NavDirection, QuestionKind};
pub use retriever::{GoalIndex, MatchKind, MatchResult};
