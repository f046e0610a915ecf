//! Tool execution against the canned fixture corpus, and the concierge's two
//! generic tools.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cold_storage::ToolSchema;
use crate::text;

pub const GENERIC_SEARCH: &str = "generic_search";
pub const GENERIC_EVAL: &str = "generic_eval";
pub const NO_RESULTS: &str = "No results found.";

pub fn is_generic(tool_name: &str) -> bool {
    tool_name == GENERIC_SEARCH || tool_name == GENERIC_EVAL
}

pub fn generic_tool_schemas() -> Vec<ToolSchema> {
    alloc::vec![
        ToolSchema {
            tool_name: GENERIC_SEARCH.into(),
            parameters: serde_json::json!({
                "type": "object",
                "properties": {"query": {"type": "string"}},
                "required": ["query"]
            }),
            description: "Search the web and return a text digest of the results.".into(),
        },
        ToolSchema {
            tool_name: GENERIC_EVAL.into(),
            parameters: serde_json::json!({
                "type": "object",
                "properties": {"expression": {"type": "string"}},
                "required": ["expression"]
            }),
            description: "Evaluate an arithmetic expression.".into(),
        },
    ]
}

/// A nested agent consulted by a tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delegation {
    pub agent: String,
    #[serde(default)]
    pub system_prompt: String,
    pub text: String,
}

/// One canned tool outcome. `key` is the normalized argument text; `*` or
/// an empty key matches any arguments. Exactly one of `result`, `error` or
/// `delegate` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolFixture {
    pub tool: String,
    #[serde(default)]
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delegate: Option<Delegation>,
}

impl ToolFixture {
    fn is_wildcard(&self) -> bool {
        self.key.is_empty() || self.key == "*"
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FixtureOutcome<'a> {
    Result(&'a str),
    Error(&'a str),
    Delegate(&'a Delegation),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    Unknown(String),
    #[error("fixture {index} for `{tool}` must set exactly one of result, error, delegate")]
    MalformedFixture { index: usize, tool: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToolFixtures {
    entries: Vec<ToolFixture>,
}

impl ToolFixtures {
    pub fn new(entries: Vec<ToolFixture>) -> Result<Self, ToolError> {
        for (index, f) in entries.iter().enumerate() {
            let set = [f.result.is_some(), f.error.is_some(), f.delegate.is_some()]
                .iter()
                .filter(|b| **b)
                .count();
            if set != 1 {
                return Err(ToolError::MalformedFixture {
                    index,
                    tool: f.tool.clone(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ToolFixture] {
        &self.entries
    }

    /// Exact key match first, then a wildcard entry for the tool.
    pub fn lookup(&self, tool: &str, arguments: &serde_json::Value) -> Option<FixtureOutcome<'_>> {
        let key = argument_key(arguments);
        let for_tool = || self.entries.iter().filter(move |f| f.tool == tool);
        let hit = for_tool()
            .find(|f| !f.is_wildcard() && text::normalize_query(&f.key) == key)
            .or_else(|| for_tool().find(|f| f.is_wildcard()))?;
        Some(if let Some(r) = &hit.result {
            FixtureOutcome::Result(r)
        } else if let Some(e) = &hit.error {
            FixtureOutcome::Error(e)
        } else {
            FixtureOutcome::Delegate(hit.delegate.as_ref()?)
        })
    }
}

/// Normalized text of every string (and number) in the arguments, in key
/// order.
pub fn argument_key(arguments: &serde_json::Value) -> String {
    fn collect(v: &serde_json::Value, out: &mut Vec<String>) {
        match v {
            serde_json::Value::String(s) => out.push(s.clone()),
            serde_json::Value::Number(n) => out.push(n.to_string()),
            serde_json::Value::Array(items) => items.iter().for_each(|i| collect(i, out)),
            serde_json::Value::Object(map) => map.values().for_each(|i| collect(i, out)),
            _ => {}
        }
    }
    let mut parts = Vec::new();
    collect(arguments, &mut parts);
    text::normalize_query(&parts.join(" "))
}

/// Short digest stored in an event's tool call record.
pub fn summarize(result: &str) -> String {
    const MAX: usize = 80;
    match result.char_indices().nth(MAX) {
        Some((cut, _)) => format!("{}...", &result[..cut]),
        None => result.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericToolOutput {
    pub text: String,
    pub topic: String,
}

/// Runs `generic_search` (fixture corpus keyed by normalized query) or
/// `generic_eval` (arithmetic). The output is tagged with `topic`.
pub fn run_generic_tool(
    name: &str,
    arguments: &serde_json::Value,
    topic: &str,
    fixtures: &ToolFixtures,
) -> Result<GenericToolOutput, ToolError> {
    let text = match name {
        GENERIC_SEARCH => match fixtures.lookup(GENERIC_SEARCH, arguments) {
            Some(FixtureOutcome::Result(r)) => r.into(),
            Some(FixtureOutcome::Error(e)) => format!("Error: {e}"),
            _ => NO_RESULTS.into(),
        },
        GENERIC_EVAL => {
            let expr = arguments
                .get("expression")
                .and_then(|v| v.as_str())
                .unwrap_or_default();
            match eval_arithmetic(expr) {
                Ok(v) => format_number(v),
                Err(e) => format!("Error: {e}"),
            }
        }
        other => return Err(ToolError::Unknown(other.into())),
    };
    Ok(GenericToolOutput {
        text,
        topic: topic.into(),
    })
}

fn format_number(v: f64) -> String {
    if v.is_finite() && libm::trunc(v) == v && libm::fabs(v) < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Evaluates `+ - * /`, parentheses, unary minus and decimal literals.
pub fn eval_arithmetic(expr: &str) -> Result<f64, String> {
    let tokens: Vec<char> = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if tokens.is_empty() {
        return Err("empty expression".into());
    }
    let mut p = Parser { s: &tokens, i: 0 };
    let v = p.sum()?;
    if p.i != tokens.len() {
        return Err(format!("unexpected `{}`", tokens[p.i]));
    }
    Ok(v)
}

struct Parser<'a> {
    s: &'a [char],
    i: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.s.get(self.i).copied()
    }

    fn sum(&mut self) -> Result<f64, String> {
        let mut v = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.i += 1;
            let rhs = self.product()?;
            v = if op == '+' { v + rhs } else { v - rhs };
        }
        Ok(v)
    }

    fn product(&mut self) -> Result<f64, String> {
        let mut v = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek() {
            self.i += 1;
            let rhs = self.unary()?;
            if op == '/' {
                if rhs == 0.0 {
                    return Err("division by zero".into());
                }
                v /= rhs;
            } else {
                v *= rhs;
            }
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<f64, String> {
        if self.peek() == Some('-') {
            self.i += 1;
            return Ok(-self.unary()?);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some('(') => {
                self.i += 1;
                let v = self.sum()?;
                if self.peek() != Some(')') {
                    return Err("missing `)`".into());
                }
                self.i += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.i;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
                    self.i += 1;
                }
                let lit: String = self.s[start..self.i].iter().collect();
                lit.parse::<f64>().map_err(|_| format!("bad number `{lit}`"))
            }
            Some(c) => Err(format!("unexpected `{c}`")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn corpus() -> ToolFixtures {
        ToolFixtures::new(vec![
            ToolFixture {
                tool: GENERIC_SEARCH.into(),
                key: "India vs Australia score".into(),
                result: Some("India 287/4".into()),
                error: None,
                delegate: None,
            },
            ToolFixture {
                tool: "get_match_score".into(),
                key: "*".into(),
                result: Some("{}".into()),
                error: None,
                delegate: None,
            },
        ])
        .unwrap()
    }

    #[test]
    fn search_is_keyed_by_normalized_query() {
        let out = run_generic_tool(
            GENERIC_SEARCH,
            &json!({"query": "india VS  australia, score"}),
            "Sports",
            &corpus(),
        )
        .unwrap();
        assert_eq!(out.text, "India 287/4");
        assert_eq!(out.topic, "Sports");
        let miss =
            run_generic_tool(GENERIC_SEARCH, &json!({"query": "weather"}), "General", &corpus())
                .unwrap();
        assert_eq!(miss.text, NO_RESULTS);
    }

    #[test]
    fn eval_and_unknown_tool() {
        let f = ToolFixtures::default();
        let out = run_generic_tool(GENERIC_EVAL, &json!({"expression": "1+1"}), "Math", &f).unwrap();
        assert_eq!(out.text, "2");
        assert_eq!(eval_arithmetic("2*(3+4)/-7").unwrap(), -2.0);
        assert_eq!(eval_arithmetic("1.5*2").unwrap(), 3.0);
        assert!(eval_arithmetic("1/0").is_err());
        assert!(eval_arithmetic("1+").is_err());
        assert!(eval_arithmetic("(1").is_err());
        assert_eq!(
            run_generic_tool("python", &json!({}), "x", &f),
            Err(ToolError::Unknown("python".into()))
        );
    }

    #[test]
    fn wildcard_fixtures_catch_everything() {
        assert_eq!(
            corpus().lookup("get_match_score", &json!({"match": "anything"})),
            Some(FixtureOutcome::Result("{}"))
        );
        assert_eq!(corpus().lookup("nope", &json!({})), None);
    }

    #[test]
    fn malformed_fixture_rejected() {
        let bad = ToolFixture {
            tool: "t".into(),
            key: String::new(),
            result: Some("a".into()),
            error: Some("b".into()),
            delegate: None,
        };
        assert!(ToolFixtures::new(vec![bad]).is_err());
    }

    #[test]
    fn summaries_truncate() {
        let long: String = "x".repeat(100);
        assert_eq!(summarize(&long).len(), 83);
        assert_eq!(summarize("short"), "short");
    }
}
