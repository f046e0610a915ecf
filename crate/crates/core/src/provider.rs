//! Reasoning-engine contract and the deterministic scripted provider.
//!
//! The scripted provider evaluates a rule table: the highest-priority rule
//! whose scope, pattern and tool requirement match wins, with file order
//! breaking ties. A winning response that calls a tool the caller does not
//! have is downgraded to a refusal carrying the classified intent. That
//! downgrade is what makes the concierge refuse before an expert exists and
//! the expert succeed afterwards.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cold_storage::ToolSchema;
use crate::event_log::{EventRecord, IntentDescriptor};
use crate::text;

/// Refusal openings recognised by the listener. Shared by generator and
/// detector so they cannot drift.
pub const REFUSAL_PHRASES: [&str; 3] = [
    "I lack the capability",
    "I cannot do that",
    "I currently lack the capability",
];

pub const FALLBACK_TEXT: &str = "I'm not sure how to help with that.";
pub const DEFAULT_REFUSAL_TEXT: &str = "I currently lack the capability to help with that.";
pub const DEFAULT_TOPIC: &str = "General";

/// Longest canonical phrase that `text` starts with.
pub fn canonical_phrase(text: &str) -> Option<&'static str> {
    REFUSAL_PHRASES
        .iter()
        .copied()
        .filter(|p| text.starts_with(p))
        .max_by_key(|p| p.len())
}

/// Which agent is asking the provider for a completion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AgentRole {
    Concierge,
    Expert(String),
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentRole::Concierge => f.write_str("concierge"),
            AgentRole::Expert(n) => write!(f, "expert:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderRequest {
    pub agent: AgentRole,
    pub system_prompt: String,
    pub context: Vec<EventRecord>,
    pub latest_user_text: String,
    pub available_tools: Vec<ToolSchema>,
}

impl ProviderRequest {
    pub fn has_tool(&self, name: &str) -> bool {
        self.available_tools.iter().any(|t| t.tool_name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool_name: String,
    #[serde(default)]
    pub arguments: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub tool_invocations: Vec<ToolInvocation>,
    pub intent: IntentDescriptor,
    pub is_refusal: bool,
}

/// A reasoning engine. Implementations must be reentrant: the concierge and
/// every expert may call the same provider concurrently.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> ProviderResponse;
    fn classify_intent(&self, text: &str) -> IntentDescriptor;
}

/// Which callers a rule applies to. Written as `any`, `concierge`, `expert`
/// (every expert) or `expert:<Name>`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum AuthorScope {
    #[default]
    Any,
    Concierge,
    AnyExpert,
    Expert(String),
}

impl AuthorScope {
    pub fn admits(&self, agent: &AgentRole) -> bool {
        match (self, agent) {
            (AuthorScope::Any, _) => true,
            (AuthorScope::Concierge, AgentRole::Concierge) => true,
            (AuthorScope::AnyExpert, AgentRole::Expert(_)) => true,
            (AuthorScope::Expert(want), AgentRole::Expert(name)) => want == name,
            _ => false,
        }
    }
}

impl fmt::Display for AuthorScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuthorScope::Any => f.write_str("any"),
            AuthorScope::Concierge => f.write_str("concierge"),
            AuthorScope::AnyExpert => f.write_str("expert"),
            AuthorScope::Expert(n) => write!(f, "expert:{n}"),
        }
    }
}

impl FromStr for AuthorScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "any" => Ok(AuthorScope::Any),
            "concierge" => Ok(AuthorScope::Concierge),
            "expert" => Ok(AuthorScope::AnyExpert),
            _ => match s.strip_prefix("expert:") {
                Some(n) if !n.is_empty() => Ok(AuthorScope::Expert(n.into())),
                _ => Err(alloc::format!("unknown author scope `{s}`")),
            },
        }
    }
}

impl Serialize for AuthorScope {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AuthorScope {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    #[serde(default)]
    pub author_scope: AuthorScope,
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_tool: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentTemplate {
    #[serde(default)]
    pub action: String,
    #[serde(default = "default_topic")]
    pub topic: String,
}

impl Default for IntentTemplate {
    fn default() -> Self {
        Self {
            action: String::new(),
            topic: default_topic(),
        }
    }
}

fn default_topic() -> String {
    DEFAULT_TOPIC.into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTemplate {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tool_invocations: Vec<ToolInvocation>,
    #[serde(default)]
    pub intent: IntentTemplate,
    #[serde(default)]
    pub is_refusal: bool,
    /// Text used when the response is downgraded to a refusal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: RuleMatch,
    pub produce: ResponseTemplate,
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule {index}: pattern is empty")]
    EmptyPattern { index: usize },
    #[error("rule {index}: refusal text `{text}` does not start with a canonical phrase")]
    NonCanonicalRefusal { index: usize, text: String },
    #[error("rule {index}: refusal rule has no intent action")]
    RefusalWithoutAction { index: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedProvider {
    rules: Vec<ScriptRule>,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, RuleError> {
        for (index, rule) in rules.iter().enumerate() {
            if rule.matcher.pattern.is_empty() {
                return Err(RuleError::EmptyPattern { index });
            }
            let p = &rule.produce;
            if p.is_refusal {
                if canonical_phrase(&p.text).is_none() {
                    return Err(RuleError::NonCanonicalRefusal {
                        index,
                        text: p.text.clone(),
                    });
                }
                if p.intent.action.is_empty() {
                    return Err(RuleError::RefusalWithoutAction { index });
                }
            }
            if let Some(t) = &p.refusal_text {
                if canonical_phrase(t).is_none() {
                    return Err(RuleError::NonCanonicalRefusal {
                        index,
                        text: t.clone(),
                    });
                }
            }
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    /// Index and captures of the winning rule for a request.
    pub fn select(&self, request: &ProviderRequest) -> Option<(usize, Vec<String>)> {
        let mut best: Option<(usize, Vec<String>)> = None;
        for (i, rule) in self.rules.iter().enumerate() {
            if !rule.matcher.author_scope.admits(&request.agent) {
                continue;
            }
            if let Some(tool) = &rule.matcher.required_tool {
                if !request.has_tool(tool) {
                    continue;
                }
            }
            let Some(caps) = text::match_pattern(&rule.matcher.pattern, &request.latest_user_text)
            else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((j, _)) => rule.priority > self.rules[*j].priority,
            };
            if better {
                best = Some((i, caps));
            }
        }
        best
    }

    fn render(&self, index: usize, caps: &[String], request: &ProviderRequest) -> ProviderResponse {
        let produce = &self.rules[index].produce;
        let intent = IntentDescriptor::new(
            text::fill_captures(&produce.intent.action, caps),
            text::fill_captures(&produce.intent.topic, caps),
            request.latest_user_text.clone(),
        );
        let text_out = text::fill_captures(&produce.text, caps);
        if produce.is_refusal {
            return ProviderResponse {
                text: text_out,
                tool_invocations: Vec::new(),
                intent,
                is_refusal: true,
            };
        }
        let invocations: Vec<ToolInvocation> = produce
            .tool_invocations
            .iter()
            .map(|inv| ToolInvocation {
                tool_name: inv.tool_name.clone(),
                arguments: fill_json(&inv.arguments, caps),
            })
            .collect();
        if let Some(missing) = invocations.iter().find(|inv| !request.has_tool(&inv.tool_name)) {
            let mut intent = intent;
            if intent.action.is_empty() {
                intent.action = camel_case(&missing.tool_name);
            }
            return ProviderResponse {
                text: produce
                    .refusal_text
                    .as_ref()
                    .map(|t| text::fill_captures(t, caps))
                    .unwrap_or_else(|| DEFAULT_REFUSAL_TEXT.into()),
                tool_invocations: Vec::new(),
                intent,
                is_refusal: true,
            };
        }
        ProviderResponse {
            text: text_out,
            tool_invocations: invocations,
            intent,
            is_refusal: false,
        }
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &ProviderRequest) -> ProviderResponse {
        match self.select(request) {
            Some((i, caps)) => self.render(i, &caps, request),
            None => ProviderResponse {
                text: FALLBACK_TEXT.into(),
                tool_invocations: Vec::new(),
                intent: IntentDescriptor::new("", DEFAULT_TOPIC, request.latest_user_text.clone()),
                is_refusal: false,
            },
        }
    }

    fn classify_intent(&self, utterance: &str) -> IntentDescriptor {
        let mut best: Option<(usize, Vec<String>)> = None;
        for (i, rule) in self.rules.iter().enumerate() {
            let Some(caps) = text::match_pattern(&rule.matcher.pattern, utterance) else {
                continue;
            };
            if best
                .as_ref()
                .is_none_or(|(j, _)| rule.priority > self.rules[*j].priority)
            {
                best = Some((i, caps));
            }
        }
        match best {
            Some((i, caps)) => {
                let t = &self.rules[i].produce.intent;
                IntentDescriptor::new(
                    text::fill_captures(&t.action, &caps),
                    text::fill_captures(&t.topic, &caps),
                    utterance,
                )
            }
            None => IntentDescriptor::new("", DEFAULT_TOPIC, utterance),
        }
    }
}

fn fill_json(value: &serde_json::Value, caps: &[String]) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::String(s) => Value::String(text::fill_captures(s, caps)),
        Value::Array(items) => Value::Array(items.iter().map(|v| fill_json(v, caps)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), fill_json(v, caps)))
                .collect(),
        ),
        other => other.clone(),
    }
}

/// `send_email` -> `SendEmail`.
fn camel_case(snake: &str) -> String {
    let mut out = String::new();
    for part in snake.split(|c: char| !c.is_alphanumeric()).filter(|p| !p.is_empty()) {
        let mut chars = part.chars();
        if let Some(first) = chars.next() {
            out.extend(first.to_uppercase());
            out.push_str(chars.as_str());
        }
    }
    out
}
