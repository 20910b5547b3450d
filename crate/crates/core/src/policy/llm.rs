use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{Action, ActionKind};

use super::parse::parse_decision;
use super::prompt::{ChatMessage, Role};
use super::tokens::estimate_tokens;
use super::{DecisionInput, DecisionOutcome, Policy, PolicyDecision, PolicyEvent, Usage};

pub const ENV_ENDPOINT: &str = "ASMB_ENDPOINT";
pub const ENV_MODEL: &str = "ASMB_MODEL";
pub const ENV_API_KEY: &str = "ASMB_API_KEY";

/// Connection and retry settings for a chat-style inference endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: usize,
    pub temperature: f64,
    /// Base delay before retrying a transport failure; doubles per attempt.
    pub backoff: Duration,
    /// Simultaneous requests allowed across all tasks.
    pub max_in_flight: usize,
    /// Record every prompt and response verbatim in the run log.
    pub trace: bool,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            temperature: 0.0,
            backoff: Duration::from_millis(500),
            max_in_flight: 4,
            trace: false,
        }
    }

    /// Reads `ASMB_ENDPOINT`, `ASMB_MODEL` and `ASMB_API_KEY`; `None` when no
    /// endpoint is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_ENDPOINT).ok().filter(|u| !u.trim().is_empty())?;
        let model = std::env::var(ENV_MODEL).unwrap_or_default();
        let mut cfg = EndpointConfig::new(url, model);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Some(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.url.trim().is_empty() {
            return Err("endpoint url is empty".into());
        }
        if self.model.trim().is_empty() {
            return Err("endpoint model is empty".into());
        }
        if self.timeout.is_zero() {
            return Err("endpoint timeout must be > 0".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err("temperature must be a finite non-negative number".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    /// Reserved for screenshot upload; never populated yet.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: Option<usize>,
    pub completion_tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// Blocking JSON-over-HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &EndpointConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(HttpTransport { client, url: config.url.clone(), api_key: config.api_key.clone() })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            let mut body = body;
            body.truncate(500);
            return Err(TransportError::Status { status: status.as_u16(), body });
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| TransportError::Malformed(e.to_string()))?;
        response_from_json(&value)
    }
}

/// Accepts OpenAI-style `choices[0].message.content` bodies or a top-level
/// `content`/`text` field; usage counts are optional.
pub fn response_from_json(value: &Value) -> Result<ChatResponse, TransportError> {
    let text = value
        .pointer("/choices/0/message/content")
        .or_else(|| value.pointer("/choices/0/text"))
        .or_else(|| value.get("content"))
        .or_else(|| value.get("text"))
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Malformed("no generated text in response".into()))?;
    let count = |key: &str| value.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).map(|n| n as usize);
    Ok(ChatResponse {
        text: text.to_string(),
        prompt_tokens: count("prompt_tokens"),
        completion_tokens: count("completion_tokens"),
    })
}

/// Counting semaphore bounding concurrent endpoint requests.
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.count.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct LlmPolicy {
    config: EndpointConfig,
    transport: Box<dyn ChatTransport>,
    in_flight: InFlight,
}

fn correction_note(error: &str) -> String {
    format!(
        "Your previous reply could not be used: {error}. Reply again with a single JSON object in exactly the required output format."
    )
}

impl LlmPolicy {
    pub fn new(config: EndpointConfig, transport: Box<dyn ChatTransport>) -> Self {
        let cap = config.max_in_flight.max(1);
        LlmPolicy { config, transport, in_flight: InFlight { count: Mutex::new(0), freed: Condvar::new(), cap } }
    }

    pub fn http(config: EndpointConfig) -> Result<Self, TransportError> {
        let transport = HttpTransport::new(&config)?;
        Ok(LlmPolicy::new(config, Box::new(transport)))
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }
}

impl Policy for LlmPolicy {
    fn name(&self) -> String {
        format!("llm:model={}", self.config.model)
    }

    fn writes_summary(&self) -> bool {
        true
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn decide(&self, input: &DecisionInput<'_>) -> DecisionOutcome {
        let start = Instant::now();
        let mut messages = input.bundle.messages.clone();
        let mut events = Vec::new();
        let mut usage = Usage::default();
        let mut calls = 0;
        let mut last_error = String::new();

        for attempt in 0..=self.config.max_retries {
            let request = ChatRequest {
                model: self.config.model.clone(),
                messages: messages.clone(),
                temperature: self.config.temperature,
                attachments: Vec::new(),
            };
            calls += 1;
            let result = {
                let _slot = self.in_flight.acquire();
                self.transport.complete(&request)
            };
            match result {
                Ok(resp) => {
                    let prompt = resp
                        .prompt_tokens
                        .unwrap_or_else(|| messages.iter().map(|m| estimate_tokens(&m.content)).sum());
                    let completion = resp.completion_tokens.unwrap_or_else(|| estimate_tokens(&resp.text));
                    usage.prompt_tokens += prompt;
                    usage.completion_tokens += completion;
                    usage.estimated |= resp.prompt_tokens.is_none() || resp.completion_tokens.is_none();
                    if self.config.trace {
                        events.push(PolicyEvent::Exchange {
                            attempt,
                            messages: messages.clone(),
                            response: resp.text.clone(),
                        });
                    }
                    match parse_decision(&resp.text, input.mode) {
                        Ok(decision) => {
                            usage.wall_time_seconds = start.elapsed().as_secs_f64();
                            return DecisionOutcome { decision, usage, events, failed: false, endpoint_calls: calls };
                        }
                        Err(e) => {
                            last_error = e.to_string();
                            events.push(PolicyEvent::ParseFailure { attempt, error: last_error.clone() });
                            messages.push(ChatMessage::new(Role::Assistant, resp.text));
                            messages.push(ChatMessage::new(Role::User, correction_note(&last_error)));
                        }
                    }
                }
                Err(e) => {
                    last_error = e.to_string();
                    events.push(PolicyEvent::TransportFailure { attempt, error: last_error.clone() });
                    if attempt < self.config.max_retries {
                        let factor = 1u32 << attempt.min(6);
                        thread::sleep(self.config.backoff * factor);
                    }
                }
            }
        }

        events.push(PolicyEvent::DecisionFailure { attempts: calls, last_error });
        usage.wall_time_seconds = start.elapsed().as_secs_f64();
        DecisionOutcome {
            decision: PolicyDecision::action_only(Action::bare(ActionKind::Wait)),
            usage,
            events,
            failed: true,
            endpoint_calls: calls,
        }
    }
}
