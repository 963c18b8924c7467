//! Model gateway: the prompt templates, placeholder rendering, the provider
//! trait, and two in-process providers (scripted and disabled).
//!
//! All prompt text in the engine comes from the templates in this module.
//! The slot tracking, slot response and goal translation prompts are kept
//! verbatim; callers only bind placeholders.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

const DST_PROMPT: &str = include_str!("prompts/dst.txt");
const SLOTFILL_RG_PROMPT: &str = include_str!("prompts/slotfill_rg.txt");
const NL2GOAL_PROMPT: &str = include_str!("prompts/nl2goal.txt");
const PRODUCT_QA_PROMPT: &str = include_str!("prompts/product_qa.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Dst,
    SlotfillRg,
    Nl2goal,
    ProductQa,
}

impl TemplateName {
    pub const ALL: [TemplateName; 4] = [Self::Dst, Self::SlotfillRg, Self::Nl2goal, Self::ProductQa];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dst => "dst",
            Self::SlotfillRg => "slotfill_rg",
            Self::Nl2goal => "nl2goal",
            Self::ProductQa => "product_qa",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }

    pub fn text(self) -> &'static str {
        match self {
            Self::Dst => DST_PROMPT,
            Self::SlotfillRg => SLOTFILL_RG_PROMPT,
            Self::Nl2goal => NL2GOAL_PROMPT,
            Self::ProductQa => PRODUCT_QA_PROMPT,
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for seg in scan(self.text()) {
            if let Segment::Placeholder(name) = seg {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_' || b.is_ascii_digit())
}

/// Split template text into literals and `{name}` placeholders. Braces that
/// do not enclose a lowercase identifier are literal text.
fn scan(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    let mut literal_start = 0usize;
    let mut offset = 0usize;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let abs_open = offset + open;
                if abs_open > literal_start {
                    out.push(Segment::Literal(&text[literal_start..abs_open]));
                }
                out.push(Segment::Placeholder(&after[..close]));
                let consumed = open + 1 + close + 1;
                offset += consumed;
                literal_start = offset;
                rest = &rest[consumed..];
            }
            _ => {
                offset += open + 1;
                rest = &rest[open + 1..];
            }
        }
    }
    if literal_start < text.len() {
        out.push(Segment::Literal(&text[literal_start..]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnboundPlaceholder(pub String);

impl fmt::Display for UnboundPlaceholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "placeholder {{{}}} is not bound", self.0)
    }
}

/// Single-pass substitution of `{name}` placeholders. Bound values are not
/// rescanned, so a value containing braces is inserted as-is.
pub fn render_text(template: &str, bindings: &[(&str, &str)]) -> Result<String, UnboundPlaceholder> {
    let mut out = String::with_capacity(template.len());
    for seg in scan(template) {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Placeholder(name) => {
                let value = bindings
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| UnboundPlaceholder(name.to_string()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

/// Placeholder names referenced by arbitrary template text.
pub fn placeholders_in(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for seg in scan(template) {
        if let Segment::Placeholder(name) = seg {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
    }
    out
}

pub fn render(template: TemplateName, bindings: &[(&str, &str)]) -> Result<String, UnboundPlaceholder> {
    render_text(template.text(), bindings)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GatewayError {
    /// The provider is disabled; callers use their deterministic fallback.
    Unavailable,
    Timeout,
    Http { status: u16, body: String },
    Transport { message: String },
    FixtureMiss { template: String },
    BadResponse { message: String },
}

impl fmt::Display for GatewayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unavailable => write!(f, "model provider is disabled"),
            Self::Timeout => write!(f, "model provider timed out"),
            Self::Http { status, body } => write!(f, "model provider returned HTTP {status}: {body}"),
            Self::Transport { message } => write!(f, "model provider transport error: {message}"),
            Self::FixtureMiss { template } => {
                write!(f, "no scripted response matches the {template} prompt")
            }
            Self::BadResponse { message } => write!(f, "unexpected provider response: {message}"),
        }
    }
}

/// A text-completion provider. Implementations must tolerate concurrent
/// calls.
pub trait LlmGateway: Send + Sync {
    fn complete(&self, template: TemplateName, prompt: &str) -> Result<String, GatewayError>;

    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DisabledProvider;

impl LlmGateway for DisabledProvider {
    fn complete(&self, _: TemplateName, _: &str) -> Result<String, GatewayError> {
        Err(GatewayError::Unavailable)
    }

    fn kind(&self) -> &'static str {
        "disabled"
    }
}

/// One scripted rule: fires when the template matches (if given) and every
/// substring occurs in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    pub response: String,
}

/// Deterministic provider backed by an ordered rule list. The first
/// matching rule wins.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    rules: Vec<FixtureRule>,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<FixtureRule>) -> Self {
        Self { rules }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(json)?))
    }

    pub fn rules(&self) -> &[FixtureRule] {
        &self.rules
    }
}

impl LlmGateway for ScriptedProvider {
    fn complete(&self, template: TemplateName, prompt: &str) -> Result<String, GatewayError> {
        self.rules
            .iter()
            .find(|r| {
                r.template.as_deref().is_none_or(|t| t == template.as_str())
                    && r.contains.iter().all(|s| prompt.contains(s.as_str()))
            })
            .map(|r| r.response.clone())
            .ok_or_else(|| GatewayError::FixtureMiss {
                template: template.as_str().to_string(),
            })
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}

/// Owned bindings helper for call sites that build values on the fly.
#[derive(Debug, Default, Clone)]
pub struct Bindings(BTreeMap<&'static str, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &'static str, value: impl Into<String>) -> Self {
        self.0.insert(name, value.into());
        self
    }

    pub fn render(&self, template: TemplateName) -> Result<String, UnboundPlaceholder> {
        let pairs: Vec<(&str, &str)> = self.0.iter().map(|(k, v)| (*k, v.as_str())).collect();
        render(template, &pairs)
    }
}

pub(crate) fn describe_error(e: &GatewayError) -> String {
    format!("gateway: {e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn templates_expose_expected_placeholders() {
        assert_eq!(TemplateName::Dst.placeholders(), vec!["slots", "chat_history", "current_utterance"]);
        assert_eq!(
            TemplateName::SlotfillRg.placeholders(),
            vec!["task", "filled_slots", "missing_slots", "chat_history", "current_utterance"]
        );
        assert_eq!(TemplateName::Nl2goal.placeholders(), vec!["new_goal"]);
        assert_eq!(TemplateName::ProductQa.placeholders(), vec!["passages", "question"]);
    }

    #[test]
    fn verbatim_prompt_anchors() {
        assert!(DST_PROMPT.starts_with("Capture entity values from last utterance of the conversation"));
        assert!(DST_PROMPT.contains("Format the output in JSON.\nIf not specified, leave the value empty."));
        assert!(SLOTFILL_RG_PROMPT.starts_with("You are a task-oriented dialogue system"));
        assert!(SLOTFILL_RG_PROMPT.contains("exactly start the placeholder <ANSWER> as the response"));
        assert!(SLOTFILL_RG_PROMPT.ends_with("<<ai-assistant>>: "));
        assert!(NL2GOAL_PROMPT.contains("generate a YAML snippet"));
        assert!(NL2GOAL_PROMPT.ends_with("Generate the corresponding YAML snippet:"));
    }

    #[test]
    fn dst_render_with_ticket_slots() {
        let slots = "ticket title\ndetailed ticket description\npriority\nphone number";
        let out = render(
            TemplateName::Dst,
            &[("slots", slots), ("chat_history", ""), ("current_utterance", "hi")],
        )
        .unwrap();
        for name in ["ticket title", "detailed ticket description", "priority", "phone number"] {
            assert!(out.contains(name));
        }
        assert!(out.contains("Format the output in JSON"));
        assert!(out.contains("### Here is the conversation between user and ai-assistant:\n\n<<user>>: hi"));
        assert!(!out.contains("{slots}"));
    }

    #[test]
    fn missing_binding_is_named() {
        let err = render(TemplateName::Dst, &[("slots", "a"), ("chat_history", "")]).unwrap_err();
        assert_eq!(err, UnboundPlaceholder("current_utterance".into()));
    }

    #[test]
    fn values_are_not_rescanned() {
        let out = render_text("x {a} y", &[("a", "{a}")]).unwrap();
        assert_eq!(out, "x {a} y");
        assert_eq!(render_text("{Not A Placeholder} {}", &[]).unwrap(), "{Not A Placeholder} {}");
    }

    #[test]
    fn scripted_rules_first_match_wins() {
        let p = ScriptedProvider::from_json(
            r#"[{"template":"dst","contains":["priority"],"response":"{\"priority\":\"high\"}"},
                {"contains":["priority"],"response":"second"}]"#,
        )
        .unwrap();
        assert_eq!(p.complete(TemplateName::Dst, "the priority").unwrap(), r#"{"priority":"high"}"#);
        assert_eq!(p.complete(TemplateName::SlotfillRg, "the priority").unwrap(), "second");
        assert_eq!(
            p.complete(TemplateName::Dst, "nothing"),
            Err(GatewayError::FixtureMiss { template: "dst".into() })
        );
    }

    #[test]
    fn disabled_is_unavailable() {
        assert_eq!(DisabledProvider.complete(TemplateName::Dst, "x"), Err(GatewayError::Unavailable));
    }
}
