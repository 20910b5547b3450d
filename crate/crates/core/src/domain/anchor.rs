use std::fmt;

use serde::{Deserialize, Serialize};

use super::action::ActionKind;
use super::task::Bbox;

/// The six anchor categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnchorType {
    Subgoal,
    StateChange,
    Dependency,
    Exception,
    ContextInfo,
    Finish,
}

impl AnchorType {
    pub const ALL: [AnchorType; 6] = [
        AnchorType::Subgoal,
        AnchorType::StateChange,
        AnchorType::Dependency,
        AnchorType::Exception,
        AnchorType::ContextInfo,
        AnchorType::Finish,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnchorType::Subgoal => "SUBGOAL",
            AnchorType::StateChange => "STATE_CHANGE",
            AnchorType::Dependency => "DEPENDENCY",
            AnchorType::Exception => "EXCEPTION",
            AnchorType::ContextInfo => "CONTEXT_INFO",
            AnchorType::Finish => "FINISH",
        }
    }

    /// Case-insensitive; accepts both `STATE_CHANGE` and `state_change`.
    pub fn parse(name: &str) -> Option<AnchorType> {
        let upper = name.trim().to_ascii_uppercase();
        AnchorType::ALL.iter().copied().find(|t| t.as_str() == upper)
    }
}

impl fmt::Display for AnchorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Active,
    Superseded,
    Invalidated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Prerequisite,
    Enables,
    ResultOf,
    Blocks,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Prerequisite, Relation::Enables, Relation::ResultOf, Relation::Blocks];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Prerequisite => "prerequisite",
            Relation::Enables => "enables",
            Relation::ResultOf => "result_of",
            Relation::Blocks => "blocks",
        }
    }

    pub fn parse(name: &str) -> Option<Relation> {
        let lowered = name.trim().to_ascii_lowercase();
        Relation::ALL.iter().copied().find(|r| r.as_str() == lowered)
    }
}

/// Edge from an anchor back to an earlier anchor it depends on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalLink {
    pub source_anchor_id: String,
    pub relation: Relation,
}

/// Points at the observation an anchor is grounded in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceRef {
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_bbox: Option<Bbox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_value: Option<String>,
}

/// Inclusive step window `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepRange {
    pub start: usize,
    pub end: usize,
}

impl StepRange {
    pub fn new(start: usize, end: usize) -> Self {
        StepRange { start, end }
    }

    pub fn single(step: usize) -> Self {
        StepRange { start: step, end: step }
    }

    pub fn contains(&self, step: usize) -> bool {
        self.start <= step && step <= self.end
    }
}

/// Machine-checkable success condition attached to a ground-truth anchor,
/// evaluated against a predicted action sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnchorPredicate {
    /// Some predicted action in `steps` has kind `action`.
    ActionKindAtStepRange { action: ActionKind, steps: StepRange },
    /// Some predicted `input_text` in `steps` contains `value`.
    ValueContains { value: String, steps: StepRange },
    /// Some predicted `input_text` in `steps` equals the value extracted by
    /// the evidence entry of `anchor_id` recorded at `evidence_step`.
    ValueEqualsEvidence { anchor_id: String, evidence_step: usize, steps: StepRange },
    /// Some predicted `open_app` in `steps` names `app`.
    ReachesStepWithApp { app: String, steps: StepRange },
    /// Some predicted action of kind `action` in `steps` occurs strictly after
    /// the step at which `anchor_id`'s own predicate was first satisfied.
    OrderedAfter { anchor_id: String, action: ActionKind, steps: StepRange },
}

impl AnchorPredicate {
    pub fn steps(&self) -> StepRange {
        match self {
            AnchorPredicate::ActionKindAtStepRange { steps, .. }
            | AnchorPredicate::ValueContains { steps, .. }
            | AnchorPredicate::ValueEqualsEvidence { steps, .. }
            | AnchorPredicate::ReachesStepWithApp { steps, .. }
            | AnchorPredicate::OrderedAfter { steps, .. } => *steps,
        }
    }

    /// Snake-case kind tag, as serialized.
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnchorPredicate::ActionKindAtStepRange { .. } => "action_kind_at_step_range",
            AnchorPredicate::ValueContains { .. } => "value_contains",
            AnchorPredicate::ValueEqualsEvidence { .. } => "value_equals_evidence",
            AnchorPredicate::ReachesStepWithApp { .. } => "reaches_step_with_app",
            AnchorPredicate::OrderedAfter { .. } => "ordered_after",
        }
    }

    /// Anchor this predicate depends on, if any.
    pub fn referenced_anchor(&self) -> Option<&str> {
        match self {
            AnchorPredicate::ValueEqualsEvidence { anchor_id, .. }
            | AnchorPredicate::OrderedAfter { anchor_id, .. } => Some(anchor_id),
            _ => None,
        }
    }
}

/// A typed intermediate-state record: type, content, evidence and links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: AnchorType,
    pub content: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub evidence: Vec<EvidenceRef>,
    #[serde(default)]
    pub links: Vec<CausalLink>,
    #[serde(default = "active")]
    pub status: AnchorStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<AnchorPredicate>,
}

fn active() -> AnchorStatus {
    AnchorStatus::Active
}

impl Anchor {
    pub fn is_active(&self) -> bool {
        self.status == AnchorStatus::Active
    }

    /// First evidence value, if the anchor carries one.
    pub fn extracted_value(&self) -> Option<&str> {
        self.evidence.iter().find_map(|e| e.extracted_value.as_deref())
    }
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_content(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// True if `needle` occurs in `haystack` with no alphanumeric character
/// directly on either side (case-insensitive).
pub fn contains_token(haystack: &str, needle: &str) -> bool {
    let needle = normalize_content(needle);
    if needle.is_empty() {
        return false;
    }
    let hay = normalize_content(haystack);
    let mut from = 0;
    while let Some(off) = hay[from..].find(&needle) {
        let start = from + off;
        let end = start + needle.len();
        let before_ok = hay[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = hay[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_content("  Logged   IN \n"), "logged in");
        assert_eq!(normalize_content(""), "");
    }

    #[test]
    fn type_names_round_trip() {
        for t in AnchorType::ALL {
            assert_eq!(AnchorType::parse(t.as_str()), Some(t));
            assert_eq!(AnchorType::parse(&t.as_str().to_lowercase()), Some(t));
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
        }
        assert_eq!(AnchorType::parse("milestone"), None);
    }

    #[test]
    fn predicate_wire_format() {
        let p = AnchorPredicate::ValueContains { value: "42".into(), steps: StepRange::new(3, 9) };
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"kind":"value_contains","value":"42","steps":{"start":3,"end":9}}"#);
    }

    #[test]
    fn token_bounded_matching() {
        assert!(contains_token("Price: ¥42", "42"));
        assert!(contains_token("still need 42 for the form", "42"));
        assert!(!contains_token("Order 1423", "42"));
        assert!(!contains_token("x420", "42"));
        assert!(contains_token("Meet at Blue Harbor.", "blue harbor"));
        assert!(!contains_token("anything", ""));
    }
}
