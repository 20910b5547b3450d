use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    contains_token, normalize_content, Action, ActionKind, Anchor, AnchorPredicate, AnchorType, Relation, StepRange,
    Task,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("anchor {anchor}: step range {start}-{end} outside task of {len} steps")]
    StepOutOfRange { anchor: String, start: usize, end: usize, len: usize },
    #[error("anchor {anchor}: references missing anchor {missing}")]
    MissingAnchor { anchor: String, missing: String },
    #[error("anchor {anchor}: no extracted value at evidence step {step}")]
    MissingEvidence { anchor: String, step: usize },
    #[error("anchor {anchor}: ordering constraints form a cycle")]
    Cycle { anchor: String },
}

/// Which anchors gate task success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TcrScope {
    /// FINISH plus everything reachable from it over prerequisite, result_of
    /// and enables links.
    #[default]
    Closure,
    /// Every annotated anchor.
    All,
}

impl fmt::Display for TcrScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TcrScope::Closure => "closure",
            TcrScope::All => "all",
        })
    }
}

impl FromStr for TcrScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "closure" => Ok(TcrScope::Closure),
            "all" => Ok(TcrScope::All),
            other => Err(format!("unknown tcr scope: {other} (expected closure or all)")),
        }
    }
}

fn digits_only(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit())
}

fn same_number(a: &str, b: &str) -> bool {
    let strip = |s: &str| {
        let t = s.trim_start_matches('0');
        if t.is_empty() { "0" } else { t }.to_string()
    };
    strip(a) == strip(b)
}

/// Exact match after whitespace/case normalization; digit strings compare
/// numerically (`042` equals `42`).
pub fn value_equals(predicted: &str, expected: &str) -> bool {
    let (p, e) = (predicted.trim(), expected.trim());
    if digits_only(p) && digits_only(e) {
        return same_number(p, e);
    }
    normalize_content(p) == normalize_content(e)
}

/// Whether `predicted` contains `expected` as a whole token run. Digit
/// strings must appear as a complete number (`1423` does not contain `42`).
pub fn value_contains(predicted: &str, expected: &str) -> bool {
    let e = expected.trim();
    if digits_only(e) {
        return predicted.split(|c: char| !c.is_ascii_digit()).any(|run| !run.is_empty() && same_number(run, e));
    }
    contains_token(predicted, e)
}

/// First predicted step satisfying each anchor's predicate, memoized.
pub struct PredicateEvaluator<'a> {
    task: &'a Task,
    actions: &'a [Action],
    memo: HashMap<String, Option<usize>>,
    visiting: HashSet<String>,
}

impl<'a> PredicateEvaluator<'a> {
    pub fn new(task: &'a Task, actions: &'a [Action]) -> Self {
        PredicateEvaluator { task, actions, memo: HashMap::new(), visiting: HashSet::new() }
    }

    fn range(&self, anchor: &Anchor, steps: StepRange) -> Result<std::ops::RangeInclusive<usize>, PredicateError> {
        let len = self.task.len();
        if steps.start > steps.end || steps.end >= len || steps.end >= self.actions.len() {
            return Err(PredicateError::StepOutOfRange {
                anchor: anchor.id.clone(),
                start: steps.start,
                end: steps.end,
                len,
            });
        }
        Ok(steps.start..=steps.end)
    }

    fn first_where(&self, range: std::ops::RangeInclusive<usize>, f: impl Fn(&Action) -> bool) -> Option<usize> {
        range.into_iter().find(|&t| f(&self.actions[t]))
    }

    /// Step at which `anchor`'s predicate first holds; `None` if it never
    /// does. Anchors without a predicate are vacuously satisfied at step 0.
    pub fn witness(&mut self, anchor: &Anchor) -> Result<Option<usize>, PredicateError> {
        if let Some(w) = self.memo.get(&anchor.id) {
            return Ok(*w);
        }
        let Some(pred) = &anchor.predicate else {
            return Ok(Some(0));
        };
        if !self.visiting.insert(anchor.id.clone()) {
            return Err(PredicateError::Cycle { anchor: anchor.id.clone() });
        }
        let result = self.evaluate(anchor, pred);
        self.visiting.remove(&anchor.id);
        let w = result?;
        self.memo.insert(anchor.id.clone(), w);
        Ok(w)
    }

    fn evaluate(&mut self, anchor: &Anchor, pred: &AnchorPredicate) -> Result<Option<usize>, PredicateError> {
        let range = self.range(anchor, pred.steps())?;
        let is_text = |a: &Action| a.kind == ActionKind::InputText;
        Ok(match pred {
            AnchorPredicate::ActionKindAtStepRange { action, .. } => self.first_where(range, |a| a.kind == *action),
            AnchorPredicate::ValueContains { value, .. } => {
                self.first_where(range, |a| is_text(a) && value_contains(&a.value, value))
            }
            AnchorPredicate::ValueEqualsEvidence { anchor_id, evidence_step, .. } => {
                let (_, source) = self.task.anchor(anchor_id).ok_or_else(|| PredicateError::MissingAnchor {
                    anchor: anchor.id.clone(),
                    missing: anchor_id.clone(),
                })?;
                let expected = source
                    .evidence
                    .iter()
                    .find(|e| e.step_index == *evidence_step)
                    .and_then(|e| e.extracted_value.clone())
                    .ok_or(PredicateError::MissingEvidence { anchor: anchor.id.clone(), step: *evidence_step })?;
                self.first_where(range, |a| is_text(a) && value_equals(&a.value, &expected))
            }
            AnchorPredicate::ReachesStepWithApp { app, .. } => {
                self.first_where(range, |a| a.kind == ActionKind::OpenApp && value_equals(&a.value, app))
            }
            AnchorPredicate::OrderedAfter { anchor_id, action, .. } => {
                let (_, earlier) = self.task.anchor(anchor_id).ok_or_else(|| PredicateError::MissingAnchor {
                    anchor: anchor.id.clone(),
                    missing: anchor_id.clone(),
                })?;
                match self.witness(earlier)? {
                    Some(after) => range.into_iter().find(|&t| t > after && self.actions[t].kind == *action),
                    None => None,
                }
            }
        })
    }
}

/// Whether a single anchor's predicate holds over `actions`.
pub fn check_anchor(anchor: &Anchor, task: &Task, actions: &[Action]) -> Result<bool, PredicateError> {
    Ok(PredicateEvaluator::new(task, actions).witness(anchor)?.is_some())
}

/// Ids of the anchors that gate success under `scope`, FINISH first.
pub fn gating_anchors(task: &Task, scope: TcrScope) -> Vec<String> {
    match scope {
        TcrScope::All => {
            let mut ids: Vec<String> = Vec::new();
            if let Some(f) = task.final_anchor() {
                ids.push(f.id.clone());
            }
            ids.extend(task.anchors().map(|(_, a)| a.id.clone()).filter(|id| *id != task.final_anchor_id));
            ids
        }
        TcrScope::Closure => {
            let Some(finish) = task.final_anchor() else { return Vec::new() };
            let mut seen: HashSet<String> = HashSet::from([finish.id.clone()]);
            let mut order = vec![finish.id.clone()];
            let mut queue = VecDeque::from([finish]);
            while let Some(a) = queue.pop_front() {
                for link in &a.links {
                    if !matches!(link.relation, Relation::Prerequisite | Relation::ResultOf | Relation::Enables) {
                        continue;
                    }
                    if let Some((_, src)) = task.anchor(&link.source_anchor_id) {
                        if seen.insert(src.id.clone()) {
                            order.push(src.id.clone());
                            queue.push_back(src);
                        }
                    }
                }
            }
            order
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorCheck {
    pub anchor_id: String,
    #[serde(rename = "type")]
    pub kind: AnchorType,
    pub satisfied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskOutcome {
    Success,
    Failure,
    /// Some gating anchor carries no predicate; excluded from TCR.
    NotEvaluable {
        reason: String,
    },
    /// A predicate could not be evaluated; excluded from TCR.
    EvaluationError {
        message: String,
    },
}

impl TaskOutcome {
    pub fn is_evaluable(&self) -> bool {
        matches!(self, TaskOutcome::Success | TaskOutcome::Failure)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCompletion {
    pub outcome: TaskOutcome,
    pub anchors: Vec<AnchorCheck>,
}

/// Success iff every gating anchor (FINISH included) is satisfied; ordering
/// constraints are part of the predicates themselves.
pub fn task_completion(task: &Task, actions: &[Action], scope: TcrScope) -> TaskCompletion {
    let gating = gating_anchors(task, scope);
    if gating.is_empty() {
        return TaskCompletion {
            outcome: TaskOutcome::NotEvaluable { reason: "task has no final anchor".into() },
            anchors: Vec::new(),
        };
    }
    let anchors: Vec<&Anchor> = gating.iter().filter_map(|id| task.anchor(id).map(|(_, a)| a)).collect();
    if let Some(a) = anchors.iter().find(|a| a.predicate.is_none()) {
        return TaskCompletion {
            outcome: TaskOutcome::NotEvaluable { reason: format!("anchor {} has no predicate", a.id) },
            anchors: Vec::new(),
        };
    }
    let mut eval = PredicateEvaluator::new(task, actions);
    let mut checks = Vec::with_capacity(anchors.len());
    for a in anchors {
        match eval.witness(a) {
            Ok(w) => checks.push(AnchorCheck {
                anchor_id: a.id.clone(),
                kind: a.kind,
                satisfied: w.is_some(),
                witness_step: w,
            }),
            Err(e) => {
                return TaskCompletion {
                    outcome: TaskOutcome::EvaluationError { message: e.to_string() },
                    anchors: checks,
                }
            }
        }
    }
    let outcome = if checks.iter().all(|c| c.satisfied) { TaskOutcome::Success } else { TaskOutcome::Failure };
    TaskCompletion { outcome, anchors: checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CausalLink, EvidenceRef, Intent, Step, UiState};

    fn anchor(id: &str, kind: AnchorType, predicate: Option<AnchorPredicate>, links: Vec<CausalLink>) -> Anchor {
        Anchor {
            id: id.into(),
            kind,
            content: id.into(),
            description: String::new(),
            evidence: vec![],
            links,
            status: crate::domain::AnchorStatus::Active,
            predicate,
        }
    }

    /// 6 steps: open Shop, long_press price, open Notes, input 42, back, finish.
    fn task() -> Task {
        let actions = [
            Action::open_app("Shop"),
            Action::long_press(500, 400),
            Action::open_app("Notes"),
            Action::input_text("42"),
            Action::bare(ActionKind::Back),
            Action::bare(ActionKind::Finish),
        ];
        let mut extract = anchor(
            "dep",
            AnchorType::Dependency,
            Some(AnchorPredicate::ValueContains { value: "42".into(), steps: StepRange::new(2, 4) }),
            vec![],
        );
        extract.evidence.push(EvidenceRef { step_index: 1, element_bbox: None, extracted_value: Some("42".into()) });
        let reuse = anchor(
            "reuse",
            AnchorType::Dependency,
            Some(AnchorPredicate::ValueEqualsEvidence {
                anchor_id: "dep".into(),
                evidence_step: 1,
                steps: StepRange::single(3),
            }),
            vec![CausalLink { source_anchor_id: "dep".into(), relation: Relation::ResultOf }],
        );
        let ctx = anchor(
            "ctx",
            AnchorType::ContextInfo,
            Some(AnchorPredicate::ReachesStepWithApp { app: "Shop".into(), steps: StepRange::single(0) }),
            vec![],
        );
        let finish = anchor(
            "fin",
            AnchorType::Finish,
            Some(AnchorPredicate::OrderedAfter {
                anchor_id: "reuse".into(),
                action: ActionKind::Finish,
                steps: StepRange::new(2, 5),
            }),
            vec![CausalLink { source_anchor_id: "reuse".into(), relation: Relation::Prerequisite }],
        );
        let mut gt: Vec<Vec<Anchor>> = vec![vec![ctx], vec![extract], vec![], vec![reuse], vec![], vec![finish]];
        let steps = actions
            .iter()
            .enumerate()
            .map(|(i, a)| Step {
                state: UiState { step_index: i, screenshot_ref: format!("s{i}"), app: "Shop".into(), elements: None },
                action: a.clone(),
                reasoning: None,
                summary: None,
                gt_anchors: std::mem::take(&mut gt[i]),
            })
            .collect();
        Task {
            id: "t".into(),
            instruction: "copy the price".into(),
            intent: Intent::Lookup,
            apps: vec!["Shop".into(), "Notes".into()],
            steps,
            final_anchor_id: "fin".into(),
        }
    }

    fn gt_actions(t: &Task) -> Vec<Action> {
        t.steps.iter().map(|s| s.action.clone()).collect()
    }

    #[test]
    fn oracle_succeeds() {
        let t = task();
        let c = task_completion(&t, &gt_actions(&t), TcrScope::Closure);
        assert_eq!(c.outcome, TaskOutcome::Success);
        assert_eq!(c.anchors.iter().map(|a| a.anchor_id.as_str()).collect::<Vec<_>>(), ["fin", "reuse", "dep"]);
    }

    #[test]
    fn unknown_value_fails_dependency() {
        let t = task();
        let mut actions = gt_actions(&t);
        actions[3] = Action::input_text("UNKNOWN");
        let c = task_completion(&t, &actions, TcrScope::Closure);
        assert_eq!(c.outcome, TaskOutcome::Failure);
        let dep = c.anchors.iter().find(|a| a.anchor_id == "dep").unwrap();
        assert!(!dep.satisfied);
    }

    #[test]
    fn ordering_violation_fails() {
        let t = task();
        let mut actions = gt_actions(&t);
        // a finish before the value reuse does not count
        actions[2] = Action::bare(ActionKind::Finish);
        actions[5] = Action::bare(ActionKind::Back);
        let c = task_completion(&t, &actions, TcrScope::Closure);
        assert_eq!(c.outcome, TaskOutcome::Failure);
    }

    #[test]
    fn scope_all_includes_context() {
        let t = task();
        let mut actions = gt_actions(&t);
        actions[0] = Action::open_app("Mail");
        assert_eq!(task_completion(&t, &actions, TcrScope::Closure).outcome, TaskOutcome::Success);
        assert_eq!(task_completion(&t, &actions, TcrScope::All).outcome, TaskOutcome::Failure);
    }

    #[test]
    fn out_of_range_is_evaluation_error() {
        let mut t = task();
        t.steps[5].gt_anchors[0].predicate =
            Some(AnchorPredicate::ActionKindAtStepRange { action: ActionKind::Finish, steps: StepRange::new(5, 9) });
        let c = task_completion(&t, &gt_actions(&t), TcrScope::Closure);
        assert!(matches!(c.outcome, TaskOutcome::EvaluationError { .. }));
    }

    #[test]
    fn missing_predicate_not_evaluable() {
        let mut t = task();
        t.steps[3].gt_anchors[0].predicate = None;
        let c = task_completion(&t, &gt_actions(&t), TcrScope::Closure);
        assert!(matches!(c.outcome, TaskOutcome::NotEvaluable { .. }));
    }

    #[test]
    fn value_rules() {
        assert!(value_equals("042", "42"));
        assert!(value_equals(" Blue  Harbor ", "blue harbor"));
        assert!(!value_equals("42.0", "42"));
        assert!(value_contains("pay 42 now", "42"));
        assert!(value_contains("0042", "42"));
        assert!(!value_contains("1423", "42"));
        assert!(value_contains("meet at Blue Harbor", "blue harbor"));
    }
}
