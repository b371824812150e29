//! Deterministic replay provider.
//!
//! A script is either `{"turns": [...]}` or
//! `{"conversations": [{"match": "...", "system": "...", "turns": [...]}]}`.
//! A conversation is selected by substring match on the first user message
//! (and optionally the system prompt); the first match wins. The turn served
//! is the one at index "number of assistant messages already in the
//! request", so replay is stateless and safe to share across threads.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ChatMessage, CompletionRequest, LlmError, Provider, Role, ToolCall, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    LastMessageContains(String),
    LastToolResultContains(String),
    SystemContains(String),
    AnyMessageContains(String),
    ToolsInclude(String),
    MessageCount(usize),
}

impl Expectation {
    fn check(&self, req: &CompletionRequest<'_>) -> bool {
        let msgs = req.messages;
        match self {
            Expectation::LastMessageContains(s) => msgs.last().is_some_and(|m| m.text().contains(s.as_str())),
            Expectation::LastToolResultContains(s) => msgs
                .iter()
                .rev()
                .find(|m| m.role == Role::Tool)
                .is_some_and(|m| m.text().contains(s.as_str())),
            Expectation::SystemContains(s) => {
                msgs.iter().filter(|m| m.role == Role::System).any(|m| m.text().contains(s.as_str()))
            }
            Expectation::AnyMessageContains(s) => msgs.iter().any(|m| m.text().contains(s.as_str())),
            Expectation::ToolsInclude(name) => req.tools.iter().any(|t| &t.name == name),
            Expectation::MessageCount(n) => msgs.len() == *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    #[serde(default)]
    pub id: Option<String>,
    pub name: String,
    #[serde(default)]
    pub arguments: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedError {
    ContextOverflow,
    Unavailable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect: Vec<Expectation>,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ScriptedCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ScriptedError>,
}

impl ScriptedTurn {
    pub fn text(content: impl Into<String>) -> Self {
        ScriptedTurn { content: content.into(), ..Default::default() }
    }

    pub fn call(name: &str, arguments: Json) -> Self {
        ScriptedTurn {
            tool_calls: vec![ScriptedCall { id: None, name: name.into(), arguments }],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    #[serde(rename = "match", default)]
    pub matches: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub turns: Vec<ScriptedTurn>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Single { turns: Vec<ScriptedTurn> },
    Many { conversations: Vec<Conversation> },
}

#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    conversations: Vec<Conversation>,
}

/// Rough deterministic token estimate for scripts without explicit usage.
fn estimate_tokens(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

impl ScriptedProvider {
    pub fn new(turns: Vec<ScriptedTurn>) -> Self {
        ScriptedProvider { conversations: vec![Conversation { matches: String::new(), system: None, turns }] }
    }

    pub fn with_conversations(conversations: Vec<Conversation>) -> Self {
        ScriptedProvider { conversations }
    }

    pub fn parse(json: &str) -> Result<Self, LlmError> {
        let file: ScriptFile =
            serde_json::from_str(json).map_err(|e| LlmError::InvalidRequest(format!("script: {e}")))?;
        Ok(match file {
            ScriptFile::Single { turns } => Self::new(turns),
            ScriptFile::Many { conversations } => Self::with_conversations(conversations),
        })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidRequest(format!("script {}: {e}", path.display())))?;
        Self::parse(&s)
    }

    pub fn conversations(&self) -> &[Conversation] {
        &self.conversations
    }

    fn select(&self, msgs: &[ChatMessage]) -> Option<&Conversation> {
        let first_user = msgs.iter().find(|m| m.role == Role::User).map(|m| m.text()).unwrap_or_default();
        let system = msgs.iter().find(|m| m.role == Role::System).map(|m| m.text()).unwrap_or_default();
        self.conversations.iter().find(|c| {
            first_user.contains(c.matches.as_str()) && c.system.as_deref().is_none_or(|s| system.contains(s))
        })
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<(ChatMessage, Usage), LlmError> {
        let conv = self
            .select(req.messages)
            .ok_or_else(|| LlmError::ProviderUnavailable("no scripted conversation matches the request".into()))?;
        let index = req.messages.iter().filter(|m| m.role == Role::Assistant).count();
        let turn = conv
            .turns
            .get(index)
            .ok_or_else(|| LlmError::ProviderUnavailable(format!("script exhausted after {} turns", conv.turns.len())))?;
        if let Some(failed) = turn.expect.iter().find(|e| !e.check(req)) {
            return Err(LlmError::ProviderUnavailable(format!("script expectation failed at turn {index}: {failed:?}")));
        }
        match turn.error {
            Some(ScriptedError::ContextOverflow) => return Err(LlmError::ContextOverflow),
            Some(ScriptedError::Unavailable) => return Err(LlmError::ProviderUnavailable("scripted outage".into())),
            None => {}
        }
        let calls: Vec<ToolCall> = turn
            .tool_calls
            .iter()
            .enumerate()
            .map(|(i, c)| ToolCall {
                id: c.id.clone().unwrap_or_else(|| format!("call_{index}_{i}")),
                name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        let usage = turn.usage.unwrap_or_else(|| {
            let input: usize = req.messages.iter().map(|m| m.text().chars().count()).sum();
            let output = turn.content.chars().count()
                + calls.iter().map(|c| c.name.len() + c.arguments.to_string().chars().count()).sum::<usize>();
            Usage { input_tokens: estimate_tokens(input), output_tokens: estimate_tokens(output), reasoning_tokens: 0 }
        });
        let message = if turn.content.is_empty() && !calls.is_empty() {
            ChatMessage { parts: Vec::new(), ..ChatMessage::assistant("") }
        } else {
            ChatMessage::assistant(turn.content.clone())
        };
        Ok((message.with_tool_calls(calls), usage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn req<'a>(msgs: &'a [ChatMessage]) -> CompletionRequest<'a> {
        CompletionRequest { model: "m", messages: msgs, tools: &[] }
    }

    #[test]
    fn replays_in_order_then_exhausts() {
        let p = ScriptedProvider::new(vec![ScriptedTurn::text("one"), ScriptedTurn::text("two")]);
        let mut msgs = vec![ChatMessage::user("q")];
        let (a, _) = p.complete(&req(&msgs)).unwrap();
        assert_eq!(a.text(), "one");
        msgs.push(a);
        msgs.push(ChatMessage::user("more"));
        let (b, _) = p.complete(&req(&msgs)).unwrap();
        assert_eq!(b.text(), "two");
        msgs.push(b);
        assert!(matches!(p.complete(&req(&msgs)), Err(LlmError::ProviderUnavailable(_))));
    }

    #[test]
    fn selects_conversation_and_checks_expectations() {
        let script = json!({"conversations": [
            {"match": "trees", "turns": [{"content": "about trees", "usage": {"input_tokens": 5, "output_tokens": 2, "reasoning_tokens": 1}}]},
            {"match": "", "turns": [{"expect": [{"last_message_contains": "zzz"}], "content": "fallback"}]}
        ]});
        let p = ScriptedProvider::parse(&script.to_string()).unwrap();
        let (m, u) = p.complete(&req(&[ChatMessage::user("how many trees?")])).unwrap();
        assert_eq!(m.text(), "about trees");
        assert_eq!(u.reasoning_tokens, 1);
        assert!(p.complete(&req(&[ChatMessage::user("other")])).is_err());
        assert_eq!(p.complete(&req(&[ChatMessage::user("zzz")])).unwrap().0.text(), "fallback");
    }

    #[test]
    fn estimated_usage_is_deterministic() {
        let p = ScriptedProvider::new(vec![ScriptedTurn::call("search", json!({"query": "parks"}))]);
        let msgs = [ChatMessage::user("12345678")];
        let (m1, u1) = p.complete(&req(&msgs)).unwrap();
        let (m2, u2) = p.complete(&req(&msgs)).unwrap();
        assert_eq!((m1.clone(), u1), (m2, u2));
        assert_eq!(u1.input_tokens, 2);
        assert_eq!(m1.tool_calls[0].id, "call_0_0");
        assert!(m1.parts.is_empty());
    }
}
