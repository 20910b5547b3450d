use serde::{Deserialize, Serialize};

use crate::domain::UiState;
use crate::memory::{state_digest, HistoryContext, HistoryMode};

use super::tokens::estimate_tokens;

/// Bumped whenever any template byte changes, so token counts stay comparable
/// only between runs that used the same templates.
pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    pub mode: HistoryMode,
    pub token_estimate: usize,
}

const HEADER: &str = "Mobile Assistant.";

const ACTION_SPACE: &str = r#"I. Action Space
Allowed actions: [{"label":"Tap","value":"tap"},{"label":"Input Text","value":"text"},{"label":"Need Feedback","value":"need_feedback"},{"label":"Long Press","value":"long_press"},{"label":"Swipe","value":"swipe"},{"label":"Swipe (Two Points)","value":"swipe_two_points"},{"label":"Wait","value":"wait"},{"label":"Finish","value":"FINISH"},{"label":"Open App","value":"open_app"},{"label":"Capture Screen","value":"capture_screen"},{"label":"Home","value":"home"},{"label":"Back","value":"back"}]"#;

const FIELD_REQUIREMENTS: &str = r#"II. Field Requirements
1. action.action: String. Must be in Action Space.
2. action.x,y,x_end,y_end: Use normalized coords 0-1000. (0,0)=Top-Left. (1000,1000)=Bottom-Right. For "tap"/"long_press" use (x,y). For "swipe_two_points" use start(x,y) & end(x_end,y_end). Unused=0.
3. action.value: String. Input text, feedback request, or app name.
4. action.direction: String. "up"|"down"|"left"|"right" (for "swipe").
5. action.distance: String. "long"|"medium"|"short" (for "swipe")."#;

const DECISION_PRINCIPLES: &str = r#"III. Decision Principles
Visual Evidence: Only act on what you see. If loading, use "wait".
Precision: Target UI element center. Use 0-1000 scale carefully.
Step-by-Step: Output ONE action per response."#;

const SUMMARY_GUIDELINES: &str = r#"IV. Summary Generation Guidelines
The summary_en field represents a compact, high-level abstraction of the current task progress and interface state. It serves as persistent context for subsequent decision steps.
When writing summary_en:
1. Describe the current goal-relevant state of the task, not low-level UI details.
2. Capture what has been accomplished so far and what remains unresolved.
3. Include critical constraints, user inputs, or system feedback that affect future actions.
4. Avoid step-by-step narration or coordinate-level descriptions.
5. Keep the summary concise, factual, and stable across steps unless the task state meaningfully changes.
The summary should enable future steps to reason about progress without access to full action history."#;

const SUMMARY_OUTPUT: &str = r#"V. Output Format
Return a single JSON object:
{ "action": { "action": "...", "x": 0, "y": 0, "value": "", "x_end": 0, "y_end": 0 }, "summary_en": "..." }"#;

const ANCHOR_GUIDELINES: &str = r#"IV. Anchor and Causal Structure Generation Guidelines
State anchors represent semantically meaningful task events that influence long-term planning and decision-making. Each anchor summarizes a key transition, dependency, or achievement. Beyond recording important states, the model should explicitly identify causal links between anchors so that the interaction history is organized as a structured dependency graph rather than a flat list of events.
Anchor categories:
[subgoal] Achievement of an intermediate objective.
[state_change] Entry into a new screen, mode, or functional state.
[dependency] Completion of a prerequisite required for future steps.
[exception] Errors, failures, or unexpected states requiring handling.
[context_info] Important parameters, settings, or user-provided information.
[finish] Final goal successfully completed.
Causal link types:
[prerequisite] A previous anchor must hold before the current one can occur.
[enables] A previous anchor creates the condition for a future action or subgoal.
[result_of] The current anchor is the direct result of a previous anchor or action outcome.
[blocks] An exception or state prevents progress until resolved.
When generating anchors and links:
1. content_en should be a concise, category-tagged semantic statement describing the current anchor.
2. description_en should explain why this anchor matters for subsequent reasoning and execution.
3. If the current anchor has a direct causal dependency on a previous anchor, generate a causal link identifying the source anchor and relation type.
4. Only create causal links for decision-critical dependencies, not for trivial temporal succession.
5. Only generate anchors for durable and task-relevant events; avoid trivial UI transitions.
6. Do not repeat previous anchors unless the task state fundamentally changes.
7. Preserve both key intermediate states and the causal structure connecting them."#;

const ANCHOR_OUTPUT: &str = r#"V. Output Format
Return a single JSON object:
{ "action": { "action": "...", "x": 0, "y": 0, "value": "", "x_end": 0, "y_end": 0 }, "content_en": "...", "description_en": "..." ,"causal_link": { "source": "...", "relation": "..." }}"#;

const RAW_OUTPUT: &str = r#"IV. Output Format
Return a single JSON object:
{ "action": { "action": "...", "x": 0, "y": 0, "value": "", "x_end": 0, "y_end": 0 } }"#;

/// System message for a history mode. Raw is the summary template without
/// its summary guidelines and with an action-only output format.
pub fn system_template(mode: HistoryMode) -> String {
    let sections: [&str; 6] = match mode {
        HistoryMode::Raw => [HEADER, ACTION_SPACE, FIELD_REQUIREMENTS, DECISION_PRINCIPLES, RAW_OUTPUT, ""],
        HistoryMode::Summary => {
            [HEADER, ACTION_SPACE, FIELD_REQUIREMENTS, DECISION_PRINCIPLES, SUMMARY_GUIDELINES, SUMMARY_OUTPUT]
        }
        HistoryMode::Asm => {
            [HEADER, ACTION_SPACE, FIELD_REQUIREMENTS, DECISION_PRINCIPLES, ANCHOR_GUIDELINES, ANCHOR_OUTPUT]
        }
    };
    sections.iter().filter(|s| !s.is_empty()).copied().collect::<Vec<_>>().join("\n\n")
}

/// The mode-independent part of the user message.
pub fn observation_block(instruction: &str, state: &UiState) -> String {
    format!(
        "Instruction: {}\n\nCurrent state:\nstep: {}\n{}",
        instruction.trim(),
        state.step_index,
        state_digest(state)
    )
}

pub fn build_prompt(mode: HistoryMode, instruction: &str, context: &HistoryContext, state: &UiState) -> PromptBundle {
    debug_assert_eq!(context.mode, mode, "context rendered for a different mode");
    let history = if context.rendered_text.is_empty() { "(none)" } else { context.rendered_text.as_str() };
    let user = format!("{}\n\nHistory:\n{}", observation_block(instruction, state), history);
    let system = system_template(mode);
    let token_estimate = estimate_tokens(&system) + estimate_tokens(&user);
    PromptBundle {
        messages: vec![ChatMessage::new(Role::System, system), ChatMessage::new(Role::User, user)],
        mode,
        token_estimate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{render_raw_context, render_summary_context};

    fn state() -> UiState {
        UiState { step_index: 4, screenshot_ref: "shot-4".into(), app: "Shop".into(), elements: None }
    }

    #[test]
    fn asm_template_lists_taxonomy() {
        let sys = system_template(HistoryMode::Asm);
        for tag in ["[subgoal]", "[state_change]", "[dependency]", "[exception]", "[context_info]", "[finish]"] {
            assert!(sys.contains(tag), "missing {tag}");
        }
        for tag in ["[prerequisite]", "[enables]", "[result_of]", "[blocks]"] {
            assert!(sys.contains(tag), "missing {tag}");
        }
        assert!(sys.contains("Only create causal links for decision-critical dependencies"));
    }

    #[test]
    fn summary_template_has_no_anchor_vocabulary() {
        let sys = system_template(HistoryMode::Summary);
        assert!(sys.contains("summary_en"));
        assert!(sys.contains("compact, high-level abstraction"));
        for word in ["anchor", "causal", "[dependency]", "content_en"] {
            assert!(!sys.contains(word), "unexpected {word}");
        }
    }

    #[test]
    fn raw_template_is_summary_minus_guidelines() {
        let raw = system_template(HistoryMode::Raw);
        let summary = system_template(HistoryMode::Summary);
        assert!(!raw.contains("summary_en"));
        assert!(
            raw.contains(r#"{ "action": { "action": "...", "x": 0, "y": 0, "value": "", "x_end": 0, "y_end": 0 } }"#)
        );
        let shared = [HEADER, ACTION_SPACE, FIELD_REQUIREMENTS, DECISION_PRINCIPLES].join("\n\n");
        assert!(raw.starts_with(&shared));
        assert!(summary.starts_with(&shared));
    }

    #[test]
    fn observation_identical_across_modes() {
        let raw = build_prompt(HistoryMode::Raw, "buy milk", &render_raw_context(&[], None, 100), &state());
        let sum =
            build_prompt(HistoryMode::Summary, "buy milk", &render_summary_context("went to shop", 100), &state());
        let obs = observation_block("buy milk", &state());
        assert!(raw.messages[1].content.starts_with(&obs));
        assert!(sum.messages[1].content.starts_with(&obs));
        assert!(sum.messages[1].content.ends_with("History:\nwent to shop"));
        assert!(raw.messages[1].content.ends_with("History:\n(none)"));
        assert!(raw.token_estimate > 0);
    }
}
