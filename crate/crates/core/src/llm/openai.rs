use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{ChatMessage, CompletionRequest, LlmError, Part, Provider, Role, ToolCall, Usage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenAiConfig {
    /// Base URL up to and including the version segment.
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: Option<f64>,
}

fn default_timeout() -> u64 {
    120
}

/// Any server speaking the common `/chat/completions` tool-calling format.
pub struct OpenAiProvider {
    config: OpenAiConfig,
    client: reqwest::blocking::Client,
}

impl OpenAiProvider {
    pub fn new(config: OpenAiConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        Ok(OpenAiProvider { config, client })
    }
}

fn role_str(r: Role) -> &'static str {
    match r {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    }
}

pub(crate) fn encode_message(m: &ChatMessage) -> Json {
    let plain = m.parts.iter().all(|p| !matches!(p, Part::Image { .. }));
    let content = if plain || m.role != Role::User {
        Json::String(m.text())
    } else {
        Json::Array(
            m.parts
                .iter()
                .map(|p| match p {
                    Part::Text { text } => json!({"type": "text", "text": text}),
                    Part::Document { markdown } => json!({"type": "text", "text": markdown}),
                    Part::Image { media_type, data_base64 } => {
                        json!({"type": "image_url", "image_url": {"url": format!("data:{media_type};base64,{data_base64}")}})
                    }
                })
                .collect(),
        )
    };
    let mut out = json!({"role": role_str(m.role), "content": content});
    if !m.tool_calls.is_empty() {
        out["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| json!({"id": c.id, "type": "function", "function": {"name": c.name, "arguments": c.arguments.to_string()}}))
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        out["tool_call_id"] = json!(id);
    }
    out
}

pub(crate) fn decode_response(body: &Json) -> Result<(ChatMessage, Usage), LlmError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::ProviderUnavailable("response has no choices".into()))?;
    let text = msg.get("content").and_then(Json::as_str).unwrap_or_default();
    let calls = msg
        .get("tool_calls")
        .and_then(Json::as_array)
        .map(|calls| {
            calls
                .iter()
                .map(|c| {
                    let raw = c.pointer("/function/arguments").and_then(Json::as_str).unwrap_or("{}");
                    ToolCall {
                        id: c.get("id").and_then(Json::as_str).unwrap_or_default().to_string(),
                        name: c.pointer("/function/name").and_then(Json::as_str).unwrap_or_default().to_string(),
                        // unparseable arguments stay a raw string and fail schema validation
                        arguments: serde_json::from_str(raw).unwrap_or_else(|_| Json::String(raw.to_string())),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    let num = |p: &str| body.pointer(p).and_then(Json::as_u64).unwrap_or(0);
    let reasoning = num("/usage/completion_tokens_details/reasoning_tokens");
    let usage = Usage {
        input_tokens: num("/usage/prompt_tokens"),
        output_tokens: num("/usage/completion_tokens").saturating_sub(reasoning),
        reasoning_tokens: reasoning,
    };
    Ok((ChatMessage::assistant(text).with_tool_calls(calls), usage))
}

impl Provider for OpenAiProvider {
    fn name(&self) -> String {
        format!("openai-compatible:{}", self.config.endpoint)
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<(ChatMessage, Usage), LlmError> {
        let mut body = json!({
            "model": req.model,
            "messages": req.messages.iter().map(encode_message).collect::<Vec<_>>(),
        });
        if !req.tools.is_empty() {
            body["tools"] = req
                .tools
                .iter()
                .map(|t| json!({"type": "function", "function": {"name": t.name, "description": t.description, "parameters": t.parameters}}))
                .collect();
        }
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let key = std::env::var(&self.config.api_key_env).unwrap_or_default();
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let resp = self.client.post(url).bearer_auth(key).json(&body).send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                LlmError::Transient(e.to_string())
            } else {
                LlmError::ProviderUnavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.parse::<f64>().ok())
                .map(Duration::from_secs_f64);
            return Err(LlmError::RateLimited { retry_after });
        }
        let text = resp.text().map_err(|e| LlmError::Transient(e.to_string()))?;
        if status.is_server_error() {
            return Err(LlmError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            if text.contains("context_length_exceeded") {
                return Err(LlmError::ContextOverflow);
            }
            return Err(LlmError::ProviderUnavailable(format!("HTTP {status}: {}", text.chars().take(500).collect::<String>())));
        }
        let json: Json = serde_json::from_str(&text).map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;
        decode_response(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves exactly one canned HTTP response and returns the request body.
    fn serve_once(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (status, body) = (status.to_string(), body.to_string());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            let mut w = stream;
            write!(w, "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len()).unwrap();
            String::from_utf8(req).unwrap()
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn provider(endpoint: String) -> OpenAiProvider {
        OpenAiProvider::new(OpenAiConfig { endpoint, api_key_env: "ODQA_TEST_NO_KEY".into(), timeout_secs: 10, temperature: None })
            .unwrap()
    }

    #[test]
    fn parses_tool_calls_and_usage() {
        let body = json!({
            "choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
                {"id": "c1", "type": "function", "function": {"name": "search_datasets", "arguments": "{\"query\":\"parks\",\"top_k\":5}"}}
            ]}}],
            "usage": {"prompt_tokens": 100, "completion_tokens": 50, "completion_tokens_details": {"reasoning_tokens": 20}}
        });
        let (url, h) = serve_once("200 OK", &body.to_string());
        let msgs = [ChatMessage::system("s"), ChatMessage::user("q")];
        let (m, u) = provider(url).complete(&CompletionRequest { model: "gpt-4.1", messages: &msgs, tools: &[] }).unwrap();
        assert_eq!(m.tool_calls[0].arguments["top_k"], 5);
        assert_eq!(u, Usage { input_tokens: 100, output_tokens: 30, reasoning_tokens: 20 });
        let sent: Json = serde_json::from_str(&h.join().unwrap()).unwrap();
        assert_eq!(sent["model"], "gpt-4.1");
        assert_eq!(sent["messages"][1]["content"], "q");
    }

    #[test]
    fn maps_rate_limit() {
        let (url, _h) = serve_once("429 Too Many Requests", "{}");
        let msgs = [ChatMessage::user("q")];
        let err = provider(url).complete(&CompletionRequest { model: "m", messages: &msgs, tools: &[] }).unwrap_err();
        assert!(matches!(err, LlmError::RateLimited { .. }));
    }

    #[test]
    fn bad_argument_json_kept_raw() {
        let body = json!({"choices": [{"message": {"tool_calls": [{"id": "c", "function": {"name": "t", "arguments": "{oops"}}]}}]});
        let (m, _) = decode_response(&body).unwrap();
        assert_eq!(m.tool_calls[0].arguments, Json::String("{oops".into()));
    }

    #[test]
    fn images_become_data_urls() {
        let m = ChatMessage {
            parts: vec![Part::Text { text: "see".into() }, Part::Image { media_type: "image/png".into(), data_base64: "AAAA".into() }],
            ..ChatMessage::user("")
        };
        let j = encode_message(&m);
        assert_eq!(j["content"][1]["image_url"]["url"], "data:image/png;base64,AAAA");
    }
}
