use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::action::{validate_action, Action, ActionKind, COORD_MAX};
use super::anchor::{Anchor, AnchorType};

/// Normalized bounding box, serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u16; 4]", into = "[u16; 4]")]
pub struct Bbox {
    pub x_min: u16,
    pub y_min: u16,
    pub x_max: u16,
    pub y_max: u16,
}

impl Bbox {
    pub fn new(x_min: u16, y_min: u16, x_max: u16, y_max: u16) -> Self {
        Bbox { x_min, y_min, x_max, y_max }
    }

    /// Inclusive on all edges.
    pub fn contains(&self, x: u16, y: u16) -> bool {
        self.x_min <= x && x <= self.x_max && self.y_min <= y && y <= self.y_max
    }

    pub fn center(&self) -> (u16, u16) {
        ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)
    }

    pub fn area(&self) -> u32 {
        u32::from(self.x_max.saturating_sub(self.x_min)) * u32::from(self.y_max.saturating_sub(self.y_min))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.x_min >= self.x_max {
            out.push("bbox x_min must be < x_max".to_string());
        }
        if self.y_min >= self.y_max {
            out.push("bbox y_min must be < y_max".to_string());
        }
        if self.x_max > COORD_MAX || self.y_max > COORD_MAX {
            out.push("bbox outside [0,1000]".to_string());
        }
        out
    }
}

impl From<[u16; 4]> for Bbox {
    fn from(v: [u16; 4]) -> Self {
        Bbox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Bbox> for [u16; 4] {
    fn from(b: Bbox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiElement {
    pub bbox: Bbox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiState {
    pub step_index: usize,
    pub screenshot_ref: String,
    pub app: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<UiElement>>,
}

impl UiState {
    /// Smallest annotated element containing the point, if any.
    pub fn element_at(&self, x: u16, y: u16) -> Option<&UiElement> {
        self.elements.as_deref()?.iter().filter(|e| e.bbox.contains(x, y)).min_by_key(|e| e.bbox.area())
    }

    pub fn element_texts(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().flatten().filter_map(|e| e.text.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub state: UiState,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default)]
    pub gt_anchors: Vec<Anchor>,
}

impl Step {
    /// Annotated target element of a point action, derived as the smallest
    /// element containing the ground-truth point.
    pub fn target_element(&self) -> Option<&UiElement> {
        match self.action.kind {
            ActionKind::Tap | ActionKind::LongPress => self.state.element_at(self.action.x, self.action.y),
            _ => None,
        }
    }
}

/// Primary intent of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Lookup,
    CompareDecide,
    PurchaseOrder,
    Booking,
    Communicate,
    ShareRecommend,
    CreateContent,
    ConfigureAuthorize,
}

impl Intent {
    pub const ALL: [Intent; 8] = [
        Intent::Lookup,
        Intent::CompareDecide,
        Intent::PurchaseOrder,
        Intent::Booking,
        Intent::Communicate,
        Intent::ShareRecommend,
        Intent::CreateContent,
        Intent::ConfigureAuthorize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Lookup => "lookup",
            Intent::CompareDecide => "compare_decide",
            Intent::PurchaseOrder => "purchase_order",
            Intent::Booking => "booking",
            Intent::Communicate => "communicate",
            Intent::ShareRecommend => "share_recommend",
            Intent::CreateContent => "create_content",
            Intent::ConfigureAuthorize => "configure_authorize",
        }
    }

    pub fn parse(name: &str) -> Option<Intent> {
        Intent::ALL.iter().copied().find(|i| i.as_str() == name.trim())
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An instruction with its ground-truth trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub intent: Intent,
    pub apps: Vec<String>,
    pub steps: Vec<Step>,
    pub final_anchor_id: String,
}

impl Task {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// All ground-truth anchors with the step that created them, in order.
    pub fn anchors(&self) -> impl Iterator<Item = (usize, &Anchor)> {
        self.steps.iter().enumerate().flat_map(|(i, s)| s.gt_anchors.iter().map(move |a| (i, a)))
    }

    pub fn anchor(&self, id: &str) -> Option<(usize, &Anchor)> {
        self.anchors().find(|(_, a)| a.id == id)
    }

    pub fn final_anchor(&self) -> Option<&Anchor> {
        self.anchor(&self.final_anchor_id).map(|(_, a)| a)
    }
}

/// Every domain-invariant violation of `task`; empty when valid.
pub fn validate_task(task: &Task) -> Vec<String> {
    let mut out = Vec::new();
    if task.id.trim().is_empty() {
        out.push("id must be non-empty".to_string());
    }
    if task.instruction.trim().is_empty() {
        out.push("instruction must be non-empty".to_string());
    }
    if task.steps.is_empty() {
        out.push("steps must be non-empty".to_string());
        return out;
    }
    let last = task.steps.len() - 1;
    for (i, step) in task.steps.iter().enumerate() {
        if step.state.step_index != i {
            out.push(format!("step {i}: step_index {} does not match position", step.state.step_index));
        }
        for v in validate_action(&step.action) {
            out.push(format!("step {i}: {v}"));
        }
        if step.action.kind == ActionKind::Finish && i != last {
            out.push(format!("step {i}: finish action before the last step"));
        }
        for el in step.state.elements.iter().flatten() {
            for v in el.bbox.violations() {
                out.push(format!("step {i}: {v}"));
            }
        }
    }

    // Anchor id -> (creation step, position within the step's list).
    let mut created: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, step) in task.steps.iter().enumerate() {
        for (j, a) in step.gt_anchors.iter().enumerate() {
            if created.insert(a.id.as_str(), (i, j)).is_some() {
                out.push(format!("duplicate anchor id: {}", a.id));
            }
        }
    }
    let finish_steps: Vec<usize> = task
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.gt_anchors.iter().any(|a| a.kind == AnchorType::Finish))
        .map(|(i, _)| i)
        .collect();
    if finish_steps.len() > 1 {
        out.push(format!("FINISH anchors on more than one step: {finish_steps:?}"));
    }
    match task.final_anchor() {
        None => out.push(format!("final_anchor_id {} does not resolve", task.final_anchor_id)),
        Some(a) if a.kind != AnchorType::Finish => out.push(format!("final anchor {} is not of type FINISH", a.id)),
        Some(_) => {}
    }
    for (i, step) in task.steps.iter().enumerate() {
        for (j, a) in step.gt_anchors.iter().enumerate() {
            for link in &a.links {
                match created.get(link.source_anchor_id.as_str()) {
                    None => out.push(format!("anchor {}: unknown causal link source {}", a.id, link.source_anchor_id)),
                    Some(&(si, sj)) if (si, sj) >= (i, j) => out.push(format!(
                        "anchor {}: causal link target not yet created ({})",
                        a.id, link.source_anchor_id
                    )),
                    Some(_) => {}
                }
            }
            for ev in &a.evidence {
                if ev.step_index > i {
                    out.push(format!("anchor {}: evidence step {} after creation step {i}", a.id, ev.step_index));
                }
                if let Some(b) = ev.element_bbox {
                    for v in b.violations() {
                        out.push(format!("anchor {}: evidence {v}", a.id));
                    }
                }
            }
        }
    }
    out
}
