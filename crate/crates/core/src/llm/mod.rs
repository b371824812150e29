//! Provider-agnostic chat completion with tool calling, token accounting and
//! a per-model cost model.

mod gateway;
mod openai;
mod pricing;
mod scripted;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

pub use gateway::{Gateway, RetryPolicy};
pub use openai::{OpenAiConfig, OpenAiProvider};
pub use pricing::{estimate_cost, ModelPricing, PricingTable, BUNDLED_PRICING};
pub use scripted::{Conversation as ScriptedConversation, Expectation, ScriptedCall, ScriptedError, ScriptedProvider, ScriptedTurn};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    /// Transport failure worth retrying; surfaces as `ProviderUnavailable`
    /// once retries are exhausted.
    #[error("transient provider error: {0}")]
    Transient(String),
    #[error("malformed arguments for tool call {call_id}: {reason}")]
    MalformedToolArguments {
        call_id: String,
        reason: String,
        message: Box<ChatMessage>,
        usage: Usage,
    },
    #[error("context window exceeded")]
    ContextOverflow,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no pricing for model {0}")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Part {
    Text { text: String },
    Image { media_type: String, data_base64: String },
    Document { markdown: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON Schema for the arguments object.
    pub parameters: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn text_message(role: Role, text: impl Into<String>) -> Self {
        ChatMessage { role, parts: vec![Part::Text { text: text.into() }], tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::text_message(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::text_message(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::text_message(Role::Assistant, text)
    }

    pub fn tool(call_id: impl Into<String>, text: impl Into<String>) -> Self {
        ChatMessage { tool_call_id: Some(call_id.into()), ..Self::text_message(Role::Tool, text) }
    }

    pub fn with_tool_calls(mut self, calls: Vec<ToolCall>) -> Self {
        self.tool_calls = calls;
        self
    }

    /// Concatenated text and document parts.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for p in &self.parts {
            let s = match p {
                Part::Text { text } => text,
                Part::Document { markdown } => markdown,
                Part::Image { .. } => continue,
            };
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(s);
        }
        out
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.role == Role::Tool && self.tool_call_id.is_none() {
            return Err(LlmError::InvalidRequest("tool message without tool_call_id".into()));
        }
        if self.role != Role::Assistant && !self.tool_calls.is_empty() {
            return Err(LlmError::InvalidRequest("only assistant messages carry tool calls".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub reasoning_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens + self.reasoning_tokens
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;
    fn add(self, o: Usage) -> Usage {
        Usage {
            input_tokens: self.input_tokens + o.input_tokens,
            output_tokens: self.output_tokens + o.output_tokens,
            reasoning_tokens: self.reasoning_tokens + o.reasoning_tokens,
        }
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, o: Usage) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub tools: &'a [ToolSpec],
}

/// A single backend. Providers must be shareable across threads.
pub trait Provider: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<(ChatMessage, Usage), LlmError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_json_shape() {
        let m = ChatMessage::assistant("hi").with_tool_calls(vec![ToolCall {
            id: "c1".into(),
            name: "t".into(),
            arguments: serde_json::json!({"a": 1}),
        }]);
        let j = serde_json::to_value(&m).unwrap();
        assert_eq!(j["role"], "assistant");
        assert_eq!(j["parts"][0]["type"], "text");
        assert_eq!(j["tool_calls"][0]["arguments"]["a"], 1);
        let back: ChatMessage = serde_json::from_value(j).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::to_value(ChatMessage::user("q")).unwrap().get("tool_calls").is_none());
    }

    #[test]
    fn tool_role_needs_call_id() {
        let mut m = ChatMessage::tool("c", "out");
        assert!(m.validate().is_ok());
        m.tool_call_id = None;
        assert!(m.validate().is_err());
    }
}
