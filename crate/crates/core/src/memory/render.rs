use crate::domain::{Anchor, AnchorType, Step, UiState};
use crate::policy::{estimate_tokens, tokens_for_words};

use super::{HistoryContext, HistoryMode};

/// Number of step summaries the scripted summarizer keeps.
pub const SCRIPTED_SUMMARY_STEPS: usize = 5;

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn anchor_line(anchor: &Anchor, listed: &[Anchor]) -> String {
    let mut line = format!("{} [{}] {}", anchor.id, anchor.kind, anchor.content.trim());
    if !anchor.evidence.is_empty() {
        let steps: Vec<String> = anchor.evidence.iter().map(|e| e.step_index.to_string()).collect();
        line.push_str(&format!(" (evidence: steps {}", steps.join(",")));
        if let Some(v) = anchor.extracted_value() {
            line.push_str(&format!("; value: {v}"));
        }
        line.push(')');
    }
    if !anchor.links.is_empty() {
        let links: Vec<String> = anchor
            .links
            .iter()
            .map(|l| {
                let target = listed
                    .iter()
                    .find(|a| a.id == l.source_anchor_id)
                    .map(|a| a.content.trim())
                    .unwrap_or(l.source_anchor_id.as_str());
                format!("{}→{}", l.relation.as_str(), target)
            })
            .collect();
        line.push_str(&format!(" links: {}", links.join("; ")));
    }
    line
}

/// Drop order under budget pressure. DEPENDENCY and FINISH are never dropped.
const DROP_ORDER: [AnchorType; 4] =
    [AnchorType::ContextInfo, AnchorType::Subgoal, AnchorType::StateChange, AnchorType::Exception];

/// One line per anchor, newest last. Over budget, drops CONTEXT_INFO first,
/// then the oldest SUBGOALs, then STATE_CHANGE and EXCEPTION, keeping every
/// DEPENDENCY and FINISH anchor even if the budget is still exceeded.
pub fn render_asm_context(anchors: &[Anchor], budget: usize) -> HistoryContext {
    let lines: Vec<String> = anchors.iter().map(|a| anchor_line(a, anchors)).collect();
    let words: Vec<usize> = lines.iter().map(|l| word_count(l)).collect();
    let mut keep = vec![true; anchors.len()];
    let mut total: usize = words.iter().sum();

    'outer: for kind in DROP_ORDER {
        for i in 0..anchors.len() {
            if tokens_for_words(total) <= budget {
                break 'outer;
            }
            if keep[i] && anchors[i].kind == kind {
                keep[i] = false;
                total -= words[i];
            }
        }
    }
    let rendered_text =
        lines.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(l, _)| l).collect::<Vec<_>>().join("\n");
    HistoryContext::new(HistoryMode::Asm, rendered_text, Vec::new())
}

/// Textual digest of a UI state: app, screenshot ref and element texts.
pub fn state_digest(state: &UiState) -> String {
    let mut out = format!("app: {}\nscreenshot: {}", state.app, state.screenshot_ref);
    if let Some(elements) = &state.elements {
        out.push_str("\nelements:");
        for (i, e) in elements.iter().enumerate() {
            let b = e.bbox;
            out.push_str(&format!(
                "\n- [{i}] {} ({}) [{},{},{},{}]",
                e.text.as_deref().unwrap_or(""),
                e.role.as_deref().unwrap_or("element"),
                b.x_min,
                b.y_min,
                b.x_max,
                b.y_max
            ));
        }
    }
    out
}

fn raw_line(step: &Step) -> String {
    let texts: Vec<&str> = step.state.element_texts().collect();
    format!(
        "step {} | app: {} | screen: {} | action: {}",
        step.state.step_index,
        step.state.app,
        texts.join("; "),
        step.action.describe()
    )
}

/// Most recent (state digest, action) pairs, newest last. Only the last
/// `window` steps are considered when a window is set; older steps are
/// dropped first to fit the budget.
pub fn render_raw_context(steps_so_far: &[Step], window: Option<usize>, budget: usize) -> HistoryContext {
    let start = window.map_or(0, |w| steps_so_far.len().saturating_sub(w));
    let candidates = &steps_so_far[start..];
    let mut kept: Vec<(usize, String)> = Vec::new();
    let mut words = 0usize;
    for step in candidates.iter().rev() {
        let line = raw_line(step);
        let w = word_count(&line);
        if tokens_for_words(words + w) > budget {
            break;
        }
        words += w;
        kept.push((step.state.step_index, line));
    }
    kept.reverse();
    let visible = kept.iter().map(|(i, _)| *i).collect();
    let text = kept.into_iter().map(|(_, l)| l).collect::<Vec<_>>().join("\n");
    HistoryContext::new(HistoryMode::Raw, text, visible)
}

/// The running summary, verbatim when within budget; otherwise its most
/// recent words that fit.
pub fn render_summary_context(running_summary: &str, budget: usize) -> HistoryContext {
    if estimate_tokens(running_summary) <= budget {
        return HistoryContext::new(HistoryMode::Summary, running_summary.to_string(), Vec::new());
    }
    let words: Vec<&str> = running_summary.split_whitespace().collect();
    let mut n = words.len();
    while n > 0 && tokens_for_words(n) > budget {
        n -= 1;
    }
    let text = words[words.len() - n..].join(" ");
    HistoryContext::new(HistoryMode::Summary, text, Vec::new())
}

/// Summary used for scripted policies: the last few ground-truth step
/// summaries of the steps already taken, joined in order.
pub fn scripted_summary(steps_so_far: &[Step]) -> String {
    let parts: Vec<&str> =
        steps_so_far.iter().filter_map(|s| s.summary.as_deref()).filter(|s| !s.trim().is_empty()).collect();
    let start = parts.len().saturating_sub(SCRIPTED_SUMMARY_STEPS);
    parts[start..].join(" ")
}
