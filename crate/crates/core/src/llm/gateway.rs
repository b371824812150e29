use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{ChatMessage, CompletionRequest, LlmError, Provider, Role, ToolCall, ToolSpec, Usage};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { max_retries: 0, ..Default::default() }
    }

    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        hint.unwrap_or(exp).min(self.max_delay)
    }
}

struct Slots {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap();
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap();
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// A provider bound to one model, with retries, an in-flight limit and
/// tool-argument validation. Cheap to clone; clones share the limit.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    model: String,
    retry: RetryPolicy,
    slots: Arc<Slots>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, model: impl Into<String>) -> Gateway {
        Gateway {
            provider,
            model: model.into(),
            retry: RetryPolicy::default(),
            slots: Arc::new(Slots { used: Mutex::new(0), freed: Condvar::new(), limit: 8 }),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Gateway {
        self.retry = retry;
        self
    }

    pub fn with_in_flight(mut self, limit: usize) -> Gateway {
        self.slots = Arc::new(Slots { used: Mutex::new(0), freed: Condvar::new(), limit: limit.max(1) });
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn provider_name(&self) -> String {
        self.provider.name()
    }

    pub fn complete(&self, messages: &[ChatMessage], tools: &[ToolSpec]) -> Result<(ChatMessage, Usage), LlmError> {
        match messages.first().map(|m| m.role) {
            Some(Role::System | Role::User) => {}
            Some(_) => return Err(LlmError::InvalidRequest("first message must be system or user".into())),
            None => return Err(LlmError::InvalidRequest("no messages".into())),
        }
        for m in messages {
            m.validate()?;
        }
        let req = CompletionRequest { model: &self.model, messages, tools };
        let mut attempt = 0;
        let (message, usage) = loop {
            let result = {
                let _permit = self.slots.acquire();
                self.provider.complete(&req)
            };
            match result {
                Ok(r) => break r,
                Err(e @ (LlmError::RateLimited { .. } | LlmError::Transient(_))) => {
                    if attempt >= self.retry.max_retries {
                        return Err(match e {
                            LlmError::Transient(msg) => LlmError::ProviderUnavailable(msg),
                            other => other,
                        });
                    }
                    let hint = match e {
                        LlmError::RateLimited { retry_after } => retry_after,
                        _ => None,
                    };
                    tracing::warn!(attempt, error = %e, "retrying provider call");
                    std::thread::sleep(self.retry.delay(attempt, hint));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        if message.role != Role::Assistant {
            return Err(LlmError::ProviderUnavailable("provider returned a non-assistant message".into()));
        }
        for call in &message.tool_calls {
            if let Err(reason) = check_call(call, tools) {
                return Err(LlmError::MalformedToolArguments {
                    call_id: call.id.clone(),
                    reason,
                    message: Box::new(message.clone()),
                    usage,
                });
            }
        }
        Ok((message, usage))
    }
}

fn check_call(call: &ToolCall, tools: &[ToolSpec]) -> Result<(), String> {
    let spec = tools.iter().find(|t| t.name == call.name).ok_or_else(|| format!("unknown tool {:?}", call.name))?;
    let validator = jsonschema::validator_for(&spec.parameters).map_err(|e| format!("tool schema: {e}"))?;
    let errors: Vec<String> = validator.iter_errors(&call.arguments).map(|e| e.to_string()).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
        error: fn() -> LlmError,
    }

    impl Provider for Flaky {
        fn name(&self) -> String {
            "flaky".into()
        }
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<(ChatMessage, Usage), LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err((self.error)())
            } else {
                Ok((ChatMessage::assistant("ok"), Usage::default()))
            }
        }
    }

    fn flaky(failures: usize, error: fn() -> LlmError) -> Arc<Flaky> {
        Arc::new(Flaky { failures, calls: AtomicUsize::new(0), error })
    }

    #[test]
    fn retries_up_to_three_times() {
        let p = flaky(3, || LlmError::RateLimited { retry_after: None });
        let gw = Gateway::new(p.clone(), "m").with_retry(RetryPolicy::immediate(3));
        assert!(gw.complete(&[ChatMessage::user("q")], &[]).is_ok());
        assert_eq!(p.calls.load(Ordering::SeqCst), 4);

        let p = flaky(4, || LlmError::Transient("reset".into()));
        let gw = Gateway::new(p.clone(), "m").with_retry(RetryPolicy::immediate(3));
        assert!(matches!(gw.complete(&[ChatMessage::user("q")], &[]), Err(LlmError::ProviderUnavailable(_))));
        assert_eq!(p.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn no_retry_on_other_errors() {
        let p = flaky(1, || LlmError::ContextOverflow);
        let gw = Gateway::new(p.clone(), "m").with_retry(RetryPolicy::immediate(3));
        assert!(matches!(gw.complete(&[ChatMessage::user("q")], &[]), Err(LlmError::ContextOverflow)));
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let r = RetryPolicy::default();
        assert_eq!(r.delay(0, None), Duration::from_millis(500));
        assert_eq!(r.delay(2, None), Duration::from_secs(2));
        assert_eq!(r.delay(10, None), Duration::from_secs(8));
        assert_eq!(r.delay(0, Some(Duration::from_secs(1))), Duration::from_secs(1));
    }

    #[test]
    fn rejects_bad_first_message() {
        let gw = Gateway::new(flaky(0, || LlmError::ContextOverflow), "m");
        assert!(matches!(gw.complete(&[], &[]), Err(LlmError::InvalidRequest(_))));
        assert!(matches!(gw.complete(&[ChatMessage::assistant("x")], &[]), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn schema_validation() {
        let spec = ToolSpec {
            name: "search".into(),
            description: String::new(),
            parameters: json!({"type":"object","properties":{"query":{"type":"string"}},"required":["query"]}),
        };
        let call = |args| ToolCall { id: "c".into(), name: "search".into(), arguments: args };
        assert!(check_call(&call(json!({"query": "x"})), std::slice::from_ref(&spec)).is_ok());
        assert!(check_call(&call(json!({"query": 3})), std::slice::from_ref(&spec)).is_err());
        assert!(check_call(&call(json!({})), std::slice::from_ref(&spec)).is_err());
        assert!(check_call(&call(json!("raw")), std::slice::from_ref(&spec)).is_err());
        let other = ToolCall { id: "c".into(), name: "nope".into(), arguments: json!({}) };
        assert!(check_call(&other, &[spec]).is_err());
    }
}
