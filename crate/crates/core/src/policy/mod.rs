//! Decision functions: a chat-endpoint policy and two scripted policies.
//!
//! Every policy sees the same prompt bundle for a step; only the history
//! block inside it depends on the mode. Scripted policies additionally get
//! the task so they can replay ground truth.

mod llm;
mod parse;
mod prompt;
mod scripted;
mod tokens;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{validate_action, Action, Anchor, Task};
use crate::memory::{HistoryContext, HistoryMode};

pub use crate::memory::AnchorProposal;
pub use llm::{ChatRequest, ChatResponse, ChatTransport, EndpointConfig, HttpTransport, LlmPolicy, TransportError};
pub use parse::{extract_json_object, parse_decision, ParseError};
pub use prompt::{build_prompt, observation_block, system_template, ChatMessage, PromptBundle, Role, TEMPLATE_VERSION};
pub use scripted::{ForgetfulPolicy, OraclePolicy, UNKNOWN_VALUE};
pub use tokens::{estimate_tokens, tokens_for_words, TOKENS_PER_WORD_TENTHS};

/// A validated decision for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_proposal: Option<AnchorProposal>,
}

impl PolicyDecision {
    pub fn action_only(action: Action) -> Self {
        PolicyDecision { action, summary_text: None, anchor_proposal: None }
    }

    /// Invariant violations; empty for every decision a policy may return.
    /// Anchor types and relations are closed enums, so only the action and
    /// the proposal's content can be wrong.
    pub fn violations(&self) -> Vec<String> {
        let mut out = validate_action(&self.action);
        if self.action != self.action.clone().normalized() {
            out.push("unused action fields are set".to_string());
        }
        if let Some(p) = &self.anchor_proposal {
            if p.content.trim().is_empty() {
                out.push("empty anchor content".to_string());
            }
            if p.links.iter().any(|l| l.source.trim().is_empty()) {
                out.push("link with empty source".to_string());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    /// True when any count came from the fallback estimator.
    pub estimated: bool,
    pub wall_time_seconds: f64,
}

impl Usage {
    pub fn total_tokens(&self) -> usize {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PolicyEvent {
    ParseFailure {
        attempt: usize,
        error: String,
    },
    TransportFailure {
        attempt: usize,
        error: String,
    },
    DecisionFailure {
        attempts: usize,
        last_error: String,
    },
    /// Verbatim prompt/response pair, recorded only when tracing.
    Exchange {
        attempt: usize,
        messages: Vec<ChatMessage>,
        response: String,
    },
}

pub struct DecisionInput<'a> {
    pub task: &'a Task,
    pub step_index: usize,
    pub mode: HistoryMode,
    pub bundle: &'a PromptBundle,
    pub context: &'a HistoryContext,
    /// Anchors retrieved for this step (asm mode only).
    pub retrieved: &'a [Anchor],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutcome {
    pub decision: PolicyDecision,
    pub usage: Usage,
    pub events: Vec<PolicyEvent>,
    /// Retries were exhausted and `decision` is the fallback wait.
    pub failed: bool,
    pub endpoint_calls: usize,
}

pub trait Policy: Send + Sync {
    /// Canonical spec string, e.g. `forgetful:window=5`.
    fn name(&self) -> String;

    /// Raw-trace window the policy can see; `None` for the full trace.
    fn history_window(&self) -> Option<usize> {
        None
    }

    /// Whether the policy writes its own `summary_en`. Scripted policies
    /// read the scripted summarizer instead.
    fn writes_summary(&self) -> bool {
        false
    }

    /// Same inputs always give the same outcome.
    fn is_deterministic(&self) -> bool {
        true
    }

    fn decide(&self, input: &DecisionInput<'_>) -> DecisionOutcome;
}

/// Parsed `--policy` value: `oracle`, `forgetful[:window=N]`, `llm[:model=NAME]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Oracle,
    Forgetful { window: usize },
    Llm { model: Option<String> },
}

pub const DEFAULT_FORGETFUL_WINDOW: usize = 5;

impl PolicySpec {
    pub fn is_scripted(&self) -> bool {
        !matches!(self, PolicySpec::Llm { .. })
    }

    /// Builds the policy. LLM specs need an endpoint; a model named in the
    /// spec overrides the endpoint's.
    pub fn build(&self, endpoint: Option<&EndpointConfig>) -> Result<Box<dyn Policy>, String> {
        match self {
            PolicySpec::Oracle => Ok(Box::new(OraclePolicy)),
            PolicySpec::Forgetful { window } => Ok(Box::new(ForgetfulPolicy::new(*window))),
            PolicySpec::Llm { model } => {
                let mut cfg =
                    endpoint.cloned().ok_or_else(|| "llm policy requires an endpoint (ASMB_ENDPOINT)".to_string())?;
                if let Some(m) = model {
                    cfg.model = m.clone();
                }
                cfg.validate()?;
                Ok(Box::new(LlmPolicy::http(cfg).map_err(|e| e.to_string())?))
            }
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Oracle => f.write_str("oracle"),
            PolicySpec::Forgetful { window } => write!(f, "forgetful:window={window}"),
            PolicySpec::Llm { model: None } => f.write_str("llm"),
            PolicySpec::Llm { model: Some(m) } => write!(f, "llm:model={m}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, args) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let arg = |key: &str| -> Result<Option<String>, String> {
            let Some(a) = args else { return Ok(None) };
            match a.split_once('=') {
                Some((k, v)) if k.trim() == key && !v.trim().is_empty() => Ok(Some(v.trim().to_string())),
                _ => Err(format!("invalid policy argument `{a}` (expected {key}=...)")),
            }
        };
        match head {
            "oracle" if args.is_none() => Ok(PolicySpec::Oracle),
            "forgetful" => {
                let window = match arg("window")? {
                    Some(w) => w.parse::<usize>().map_err(|_| format!("invalid window: {w}"))?,
                    None => DEFAULT_FORGETFUL_WINDOW,
                };
                Ok(PolicySpec::Forgetful { window })
            }
            "llm" => Ok(PolicySpec::Llm { model: arg("model")? }),
            _ => Err(format!("unknown policy spec: {s} (expected oracle, forgetful[:window=N] or llm[:model=NAME])")),
        }
    }
}
