use goalflow_core::goal::{GoalWorkflow, Repository, SlotSpec};

pub fn data_hygiene() -> GoalWorkflow {
    GoalWorkflow::guidance(
        "Data Hygiene for Audience Segments",
        [
            ("Detect duplicate segments by definition or outcome.", "Compare segment rules and membership."),
            ("List segment references by relevant business entities.", "Find every consumer of each duplicate."),
            ("Remove or unlink non-essential segment references and relink to essential ones when necessary.", "Point consumers at the kept segment."),
            ("Delete non-essential segments.", "Delete the redundant segments."),
        ],
    )
    .with_id("data-hygiene")
}

pub fn ticket() -> GoalWorkflow {
    GoalWorkflow::slot_filling(
        "Create a support ticket on the platform",
        [
            SlotSpec::new("ticket title"),
            SlotSpec::new("detailed ticket description"),
            SlotSpec::new("priority"),
            SlotSpec::new("phone number").with_pattern(r"\b\d{10}\b"),
        ],
    )
    .with_id("create-ticket")
}

pub fn repo() -> Repository {
    Repository::from_workflows(vec![data_hygiene(), ticket()]).unwrap()
}
