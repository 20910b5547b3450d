//! History representations handed to a policy: the raw trace, a coarse
//! running summary, and the anchored state memory bank.

mod bank;
mod render;
mod retrieve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bank::{
    AnchorProposal, BankError, BankSnapshot, LinkProposal, MemoryBank, ProposalOutcome, StatusChange, UpdateOutcome,
};
pub use render::{
    render_asm_context, render_raw_context, render_summary_context, scripted_summary, state_digest,
    SCRIPTED_SUMMARY_STEPS,
};
pub use retrieve::{retrieve, RetrievalStrategy};

pub(crate) use bank::strip_tag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    Raw,
    Summary,
    Asm,
}

impl HistoryMode {
    pub const ALL: [HistoryMode; 3] = [HistoryMode::Raw, HistoryMode::Summary, HistoryMode::Asm];

    pub fn as_str(self) -> &'static str {
        match self {
            HistoryMode::Raw => "raw",
            HistoryMode::Summary => "summary",
            HistoryMode::Asm => "asm",
        }
    }
}

impl fmt::Display for HistoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HistoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HistoryMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown history mode: {s} (expected raw, summary or asm)"))
    }
}

/// The history block for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryContext {
    pub mode: HistoryMode,
    pub rendered_text: String,
    pub token_estimate: usize,
    /// Step indices rendered into a raw context; empty for other modes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub visible_steps: Vec<usize>,
}

impl HistoryContext {
    pub fn new(mode: HistoryMode, rendered_text: String, visible_steps: Vec<usize>) -> Self {
        let token_estimate = crate::policy::estimate_tokens(&rendered_text);
        HistoryContext { mode, rendered_text, token_estimate, visible_steps }
    }
}
