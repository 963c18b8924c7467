//! Host side of the goal-driven dialogue engine: YAML goal repositories,
//! goal translation, configuration, model providers, session persistence,
//! and the HTTP service. The dialogue logic itself lives in
//! `goalflow_core`.

pub mod app;
pub mod assets;
pub mod config;
pub mod corpus;
pub mod fsutil;
pub mod nl2goal;
pub mod provider;
pub mod repo_yaml;
pub mod service;
pub mod sessions;

pub use goalflow_core as core;
