//! Demo assets compiled into the binary, used when no configuration file
//! is given.

pub const GOALS: &str = include_str!("../assets/goals.yaml");
pub const FIXTURES: &str = include_str!("../assets/fixtures.json");
pub const STORE: &str = include_str!("../assets/ops_seed.json");
pub const TEMPLATES: &str = include_str!("../assets/templates.txt");
pub const KEYWORDS: &str = include_str!("../assets/keywords.txt");

/// Sample translator input with three ordinal-word steps.
pub const PIPELINE_GOAL: &str = include_str!("../assets/pipeline_goal.txt");

/// `(file stem, markdown)` for each knowledge-base document.
pub const KB: &[(&str, &str)] = &[
    ("segments", include_str!("../assets/kb/segments.md")),
    ("destinations", include_str!("../assets/kb/destinations.md")),
    ("datasets", include_str!("../assets/kb/datasets.md")),
];
