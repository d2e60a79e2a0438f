//! Chat-completion providers: an OpenAI-compatible HTTP client and a scripted mock.
//!
//! Wire shape (POST `{endpoint}/chat/completions`):
//!
//! ```json
//! {
//!   "model": "...",
//!   "messages": [{"role": "system", "content": "..."}, {"role": "user", "content": "..."}],
//!   "temperature": 0.7,
//!   "max_tokens": 8192,
//!   "tools": [{"type": "function", "function": {"name": "suggest_experiments", "parameters": {...}}}],
//!   "tool_choice": {"type": "function", "function": {"name": "suggest_experiments"}}
//! }
//! ```
//!
//! plus `"reasoning_effort": "<level>"` or `"thinking": {"type": "enabled", "budget_tokens": n}`
//! when a thinking budget is configured. The reply text is taken from the first
//! tool call's `arguments`, falling back to the message `content`.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::parse::TOOL_NAME;
use super::{LlmProviderConfig, ThinkingBudget, DEFAULT_MAX_CONCURRENT};
use crate::space::{Assignment, ParameterSpace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Schema of the forced function's arguments.
    pub schema: Value,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub thinking_budget: Option<ThinkingBudget>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingKey(String),
    #[error("mock script exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("invalid mock script: {0}")]
    Script(String),
}

pub trait Provider: Send {
    /// Returns the raw text of the model's structured reply.
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// One scripted reply.
#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Text(String),
    Error(String),
}

impl MockReply {
    /// A schema-conforming reply proposing `assignments`.
    pub fn suggest(space: &ParameterSpace, assignments: &[Assignment], reasoning: &str) -> Self {
        let suggestions: Vec<Value> = assignments
            .iter()
            .map(|a| {
                Value::Object(
                    space
                        .parameters()
                        .iter()
                        .zip(a.labels())
                        .map(|(p, l)| (p.name.clone(), Value::String(l.clone())))
                        .collect(),
                )
            })
            .collect();
        MockReply::Text(
            json!({
                "analysis": format!("analysis: {reasoning}"),
                "hypothesis": format!("hypothesis: {reasoning}"),
                "reasoning": reasoning,
                "suggestions": suggestions,
            })
            .to_string(),
        )
    }

    /// Script entries are strings (raw reply text), `{"error": "..."}` for a
    /// transport failure, or any other object (serialized as the reply).
    fn from_value(v: Value) -> Self {
        match v {
            Value::String(s) => MockReply::Text(s),
            Value::Object(ref m) if m.len() == 1 && m.get("error").is_some_and(Value::is_string) => {
                MockReply::Error(m["error"].as_str().unwrap_or_default().to_string())
            }
            other => MockReply::Text(other.to_string()),
        }
    }
}

/// Replays a fixed script, one reply per request, and records every request.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    replies: VecDeque<MockReply>,
    served: usize,
    requests: Vec<ChatRequest>,
}

impl MockProvider {
    pub fn new(replies: impl IntoIterator<Item = MockReply>) -> Self {
        Self {
            replies: replies.into_iter().collect(),
            served: 0,
            requests: Vec::new(),
        }
    }

    /// Parses a JSON array script.
    pub fn from_script_str(text: &str) -> Result<Self, ProviderError> {
        let v: Value = serde_json::from_str(text).map_err(|e| ProviderError::Script(e.to_string()))?;
        let Value::Array(items) = v else {
            return Err(ProviderError::Script("expected a JSON array".into()));
        };
        Ok(Self::new(items.into_iter().map(MockReply::from_value)))
    }

    pub fn from_script_path(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
        Self::from_script_str(&text)
    }

    pub fn requests(&self) -> &[ChatRequest] {
        &self.requests
    }
}

impl Provider for MockProvider {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.requests.push(request.clone());
        match self.replies.pop_front() {
            Some(MockReply::Text(t)) => {
                self.served += 1;
                Ok(t)
            }
            Some(MockReply::Error(e)) => Err(ProviderError::Scripted(e)),
            None => Err(ProviderError::ScriptExhausted(self.served)),
        }
    }
}

/// Process-wide cap on in-flight provider requests.
#[derive(Debug)]
pub struct RequestLimiter {
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a RequestLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.0.state.lock().unwrap_or_else(|e| e.into_inner());
        s.0 -= 1;
        self.0.freed.notify_one();
    }
}

impl RequestLimiter {
    pub fn new(capacity: usize) -> Self {
        Self {
            state: Mutex::new((0, capacity.max(1))),
            freed: Condvar::new(),
        }
    }

    pub fn global() -> &'static RequestLimiter {
        static GLOBAL: OnceLock<RequestLimiter> = OnceLock::new();
        GLOBAL.get_or_init(|| RequestLimiter::new(DEFAULT_MAX_CONCURRENT))
    }

    pub fn set_capacity(&self, capacity: usize) {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).1 = capacity.max(1);
        self.freed.notify_all();
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).0
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while s.0 >= s.1 {
            s = self.freed.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        s.0 += 1;
        Permit(self)
    }
}

pub struct HttpProvider {
    config: LlmProviderConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: LlmProviderConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| ProviderError::MissingKey(config.api_key_env.clone()))?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: LlmProviderConfig, api_key: impl Into<String>) -> Result<Self, ProviderError> {
        RequestLimiter::global().set_capacity(config.max_concurrent_requests);
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        Ok(Self {
            config,
            api_key: api_key.into(),
            client,
        })
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "tools": [{
                "type": "function",
                "function": {
                    "name": TOOL_NAME,
                    "description": "Report the analysis, hypothesis, reasoning and the next batch of experiments.",
                    "parameters": request.schema,
                }
            }],
            "tool_choice": { "type": "function", "function": { "name": TOOL_NAME } },
        });
        match &request.thinking_budget {
            Some(ThinkingBudget::Level(level)) => body["reasoning_effort"] = json!(level),
            Some(ThinkingBudget::Tokens(n)) => body["thinking"] = json!({ "type": "enabled", "budget_tokens": n }),
            None => {}
        }
        body
    }

    fn backoff(&self, attempt: u32, retry_after: Option<u64>) -> Duration {
        let r = &self.config.retry;
        let exp = r.initial_backoff_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(retry_after.map_or(exp, |s| s * 1000).min(r.max_backoff_ms))
    }
}

/// Structured reply text from a chat-completion response body.
pub fn extract_reply(body: &Value) -> Option<String> {
    let message = body.get("choices")?.get(0)?.get("message")?;
    if let Some(args) = message
        .get("tool_calls")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("function"))
        .and_then(|f| f.get("arguments"))
    {
        return Some(match args {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        });
    }
    message.get("content").and_then(Value::as_str).map(str::to_string)
}

impl Provider for HttpProvider {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = self.request_body(request);
        let attempts = self.config.retry.max_attempts.max(1);
        let mut last = ProviderError::Unreachable("no attempt made".into());
        for attempt in 0..attempts {
            let response = {
                let _permit = RequestLimiter::global().acquire();
                self.client.post(self.url()).bearer_auth(&self.api_key).json(&body).send()
            };
            let wait = match response {
                Err(e) => {
                    last = ProviderError::Unreachable(e.to_string());
                    None
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let retry_after = resp
                        .headers()
                        .get("retry-after")
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok());
                    let text = resp.text().unwrap_or_default();
                    if (200..300).contains(&status) {
                        // unrecognized bodies fall through to the parser and are retried there
                        return Ok(serde_json::from_str::<Value>(&text)
                            .ok()
                            .and_then(|v| extract_reply(&v))
                            .unwrap_or(text));
                    }
                    last = ProviderError::Http { status, body: text };
                    if status != 429 && status < 500 {
                        return Err(last);
                    }
                    retry_after
                }
            };
            if attempt + 1 < attempts {
                std::thread::sleep(self.backoff(attempt, wait));
            }
        }
        Err(last)
    }
}
