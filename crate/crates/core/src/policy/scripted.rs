use std::time::Instant;

use crate::domain::{contains_token, normalize_content, Action, ActionKind, AnchorType, Step, Task};
use crate::memory::{AnchorProposal, HistoryMode, LinkProposal};

use super::tokens::estimate_tokens;
use super::{DecisionInput, DecisionOutcome, Policy, PolicyDecision, Usage, DEFAULT_FORGETFUL_WINDOW};

/// Placeholder a forgetful policy types when it cannot recall a value.
pub const UNKNOWN_VALUE: &str = "UNKNOWN";

fn step_mentions(step: &Step, value: &str) -> bool {
    step.state.element_texts().any(|t| contains_token(t, value))
}

/// Ground-truth anchor of `step` as a proposal. Links name the source
/// anchor by content, which is how the bank resolves them.
fn gt_proposal(task: &Task, step: &Step, recalled: Option<&str>) -> Option<AnchorProposal> {
    let anchor = step.gt_anchors.first()?;
    let mut proposal = AnchorProposal::new(anchor.kind, anchor.content.clone());
    proposal.description = anchor.description.clone();
    proposal.extracted_value = anchor.extracted_value().map(str::to_string);
    for link in &anchor.links {
        let source = task
            .anchor(&link.source_anchor_id)
            .map(|(_, a)| a.content.clone())
            .unwrap_or_else(|| link.source_anchor_id.clone());
        proposal.links.push(LinkProposal { source, relation: link.relation });
    }
    if let Some(gt_value) = recalled_mismatch(step, recalled) {
        proposal.content = proposal.content.replace(gt_value, UNKNOWN_VALUE);
        if proposal.extracted_value.as_deref() == Some(gt_value) {
            proposal.extracted_value = Some(UNKNOWN_VALUE.to_string());
        }
    }
    Some(proposal)
}

/// The ground-truth value when the policy typed something else.
fn recalled_mismatch<'a>(step: &'a Step, recalled: Option<&str>) -> Option<&'a str> {
    match recalled {
        Some(r) if step.action.kind == ActionKind::InputText && r != step.action.value => {
            Some(step.action.value.as_str())
        }
        _ => None,
    }
}

fn scripted_outcome(input: &DecisionInput<'_>, action: Action, start: Instant) -> DecisionOutcome {
    let step = &input.task.steps[input.step_index];
    let recalled = (action.kind == ActionKind::InputText).then_some(action.value.as_str());
    let mut decision = PolicyDecision::action_only(action.clone());
    match input.mode {
        HistoryMode::Raw => {}
        HistoryMode::Summary => {
            decision.summary_text = Some(step.summary.clone().unwrap_or_else(|| action.describe()));
        }
        HistoryMode::Asm => decision.anchor_proposal = gt_proposal(input.task, step, recalled),
    }
    let completion = serde_json::to_string(&decision).map(|s| estimate_tokens(&s)).unwrap_or(0);
    DecisionOutcome {
        decision,
        usage: Usage {
            prompt_tokens: input.bundle.token_estimate,
            completion_tokens: completion,
            estimated: true,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        },
        events: Vec::new(),
        failed: false,
        endpoint_calls: 0,
    }
}

/// Replays the ground-truth action (and anchor, in asm mode).
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".to_string()
    }

    fn decide(&self, input: &DecisionInput<'_>) -> DecisionOutcome {
        let start = Instant::now();
        let action = input.task.steps[input.step_index].action.clone();
        scripted_outcome(input, action, start)
    }
}

/// Acts like the oracle except when it must type a value seen on an
/// earlier screen: it recalls the value only from what its history context
/// shows, and types `UNKNOWN` otherwise.
///
/// Raw mode sees the last `window` steps; summary mode sees the summary
/// text; asm mode sees retrieved DEPENDENCY anchors' extracted values.
#[derive(Debug, Clone, Copy)]
pub struct ForgetfulPolicy {
    window: usize,
}

impl ForgetfulPolicy {
    pub fn new(window: usize) -> Self {
        ForgetfulPolicy { window }
    }

    /// Whether the value typed at `input.step_index` has to come from memory.
    fn needs_recall(input: &DecisionInput<'_>, value: &str) -> bool {
        let t = input.step_index;
        let task = input.task;
        !contains_token(&task.instruction, value)
            && !step_mentions(&task.steps[t], value)
            && task.steps[..t].iter().any(|s| step_mentions(s, value))
    }

    fn recalls(&self, input: &DecisionInput<'_>, value: &str) -> bool {
        match input.mode {
            HistoryMode::Raw => input.context.visible_steps.iter().any(|&i| {
                let s = &input.task.steps[i];
                step_mentions(s, value) || contains_token(&s.action.value, value)
            }),
            HistoryMode::Summary => contains_token(&input.context.rendered_text, value),
            HistoryMode::Asm => input.retrieved.iter().any(|a| {
                a.kind == AnchorType::Dependency
                    && a.extracted_value().is_some_and(|v| normalize_content(v) == normalize_content(value))
            }),
        }
    }
}

impl Default for ForgetfulPolicy {
    fn default() -> Self {
        ForgetfulPolicy::new(DEFAULT_FORGETFUL_WINDOW)
    }
}

impl Policy for ForgetfulPolicy {
    fn name(&self) -> String {
        format!("forgetful:window={}", self.window)
    }

    fn history_window(&self) -> Option<usize> {
        Some(self.window)
    }

    fn decide(&self, input: &DecisionInput<'_>) -> DecisionOutcome {
        let start = Instant::now();
        let mut action = input.task.steps[input.step_index].action.clone();
        if action.kind == ActionKind::InputText
            && Self::needs_recall(input, &action.value)
            && !self.recalls(input, &action.value)
        {
            action.value = UNKNOWN_VALUE.to_string();
        }
        scripted_outcome(input, action, start)
    }
}
