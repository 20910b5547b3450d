use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    normalize_content, Action, ActionKind, Anchor, AnchorStatus, AnchorType, CausalLink, EvidenceRef, Relation, UiState,
};

/// A link requested by a policy; `source` is an anchor id or its content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkProposal {
    pub source: String,
    pub relation: Relation,
}

/// What a policy asks the bank to record after a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorProposal {
    #[serde(rename = "type")]
    pub kind: AnchorType,
    pub content: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkProposal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalidate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_value: Option<String>,
}

impl AnchorProposal {
    pub fn new(kind: AnchorType, content: impl Into<String>) -> Self {
        AnchorProposal {
            kind,
            content: content.into(),
            description: String::new(),
            links: Vec::new(),
            invalidate: None,
            extracted_value: None,
        }
    }

    pub fn with_link(mut self, source: impl Into<String>, relation: Relation) -> Self {
        self.links.push(LinkProposal { source: source.into(), relation });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusChange {
    pub anchor_id: String,
    pub from: AnchorStatus,
    pub to: AnchorStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ProposalOutcome {
    NoProposal,
    Inserted { id: String },
    Duplicate { existing: String },
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateOutcome {
    pub proposal: ProposalOutcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub status_changes: Vec<StatusChange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BankError {
    #[error("step {step} precedes bank cursor {cursor}")]
    StaleStep { step: usize, cursor: usize },
    #[error("snapshot anchor {0} is duplicated")]
    DuplicateId(String),
    #[error("snapshot anchor {anchor} links to unknown or later anchor {source_id}")]
    BadLink { anchor: String, source_id: String },
}

/// Serialized form of a bank: anchors in insertion order, same format as
/// ground-truth anchors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankSnapshot {
    pub task_id: String,
    pub cursor: Option<usize>,
    pub anchors: Vec<Anchor>,
}

/// Per-task evolving anchor set and its link DAG.
///
/// Links may only name anchors already in the bank, so insertion order is a
/// topological order of the link graph. Status only moves away from
/// `Active`, never back.
#[derive(Debug, Clone, Default)]
pub struct MemoryBank {
    task_id: String,
    anchors: Vec<Anchor>,
    by_id: HashMap<String, usize>,
    /// (target, source) positions into `anchors`.
    link_edges: Vec<(usize, usize, Relation)>,
    cursor: Option<usize>,
    dedup_index: HashMap<(AnchorType, String), usize>,
}

impl MemoryBank {
    pub fn new(task_id: impl Into<String>) -> Self {
        MemoryBank { task_id: task_id.into(), ..Default::default() }
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn cursor(&self) -> Option<usize> {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// All anchors in insertion order, whatever their status.
    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn active(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter().filter(|a| a.is_active())
    }

    pub fn get(&self, id: &str) -> Option<&Anchor> {
        self.by_id.get(id).map(|&i| &self.anchors[i])
    }

    pub(crate) fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// (target id, source id, relation) for every link.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, Relation)> {
        self.link_edges.iter().map(|&(t, s, r)| (self.anchors[t].id.as_str(), self.anchors[s].id.as_str(), r))
    }

    /// Resolves an id, or failing that the normalized content (a leading
    /// `[category]` tag is ignored), to the most recent matching anchor.
    pub fn resolve(&self, reference: &str) -> Option<usize> {
        if let Some(&i) = self.by_id.get(reference.trim()) {
            return Some(i);
        }
        let wanted = normalize_content(strip_tag(reference));
        if wanted.is_empty() {
            return None;
        }
        self.anchors.iter().rposition(|a| normalize_content(strip_tag(&a.content)) == wanted)
    }

    /// Applies one step: advances the cursor and, if a proposal is given,
    /// inserts / dedups / rejects it and applies any status changes it implies.
    pub fn update(
        &mut self,
        state: &UiState,
        action: &Action,
        proposal: Option<&AnchorProposal>,
    ) -> Result<UpdateOutcome, BankError> {
        if let Some(cursor) = self.cursor {
            if state.step_index < cursor {
                return Err(BankError::StaleStep { step: state.step_index, cursor });
            }
        }
        self.cursor = Some(state.step_index);
        let Some(p) = proposal else {
            return Ok(UpdateOutcome { proposal: ProposalOutcome::NoProposal, status_changes: vec![] });
        };
        let rejected = |reason: String| {
            Ok(UpdateOutcome { proposal: ProposalOutcome::Rejected { reason }, status_changes: vec![] })
        };

        if normalize_content(&p.content).is_empty() {
            return rejected("empty anchor content".to_string());
        }
        let mut sources = Vec::with_capacity(p.links.len());
        for link in &p.links {
            match self.resolve(&link.source) {
                Some(i) => sources.push((i, link.relation)),
                None => return rejected(format!("unknown link source: {}", link.source)),
            }
        }
        let invalidate = match &p.invalidate {
            Some(target) => match self.resolve(target) {
                Some(i) => Some(i),
                None => return rejected(format!("unknown invalidation target: {target}")),
            },
            None => None,
        };

        let mut changes = Vec::new();
        if let Some(i) = invalidate {
            self.set_status(i, AnchorStatus::Invalidated, &mut changes);
        }

        let key = (p.kind, normalize_content(&p.content));
        if let Some(&existing) = self.dedup_index.get(&key) {
            if self.anchors[existing].is_active() {
                return Ok(UpdateOutcome {
                    proposal: ProposalOutcome::Duplicate { existing: self.anchors[existing].id.clone() },
                    status_changes: changes,
                });
            }
        }

        let pos = self.anchors.len();
        let id = format!("m{}", pos + 1);
        let element_bbox = match action.kind {
            ActionKind::Tap | ActionKind::LongPress => state.element_at(action.x, action.y).map(|e| e.bbox),
            _ => None,
        };
        let anchor = Anchor {
            id: id.clone(),
            kind: p.kind,
            content: p.content.trim().to_string(),
            description: p.description.trim().to_string(),
            evidence: vec![EvidenceRef {
                step_index: state.step_index,
                element_bbox,
                extracted_value: p.extracted_value.clone(),
            }],
            links: sources
                .iter()
                .map(|&(s, relation)| CausalLink { source_anchor_id: self.anchors[s].id.clone(), relation })
                .collect(),
            status: AnchorStatus::Active,
            predicate: None,
        };

        if p.kind == AnchorType::Finish {
            let previous: Vec<usize> = (0..pos)
                .filter(|&i| self.anchors[i].kind == AnchorType::Finish && self.anchors[i].is_active())
                .collect();
            for i in previous {
                self.set_status(i, AnchorStatus::Superseded, &mut changes);
            }
        }
        for &(s, relation) in &sources {
            if relation == Relation::ResultOf {
                self.set_status(s, AnchorStatus::Superseded, &mut changes);
            }
            self.link_edges.push((pos, s, relation));
        }
        self.anchors.push(anchor);
        self.by_id.insert(id.clone(), pos);
        self.dedup_index.insert(key, pos);
        Ok(UpdateOutcome { proposal: ProposalOutcome::Inserted { id }, status_changes: changes })
    }

    fn set_status(&mut self, i: usize, to: AnchorStatus, changes: &mut Vec<StatusChange>) {
        let a = &mut self.anchors[i];
        if a.status == AnchorStatus::Active && to != AnchorStatus::Active {
            changes.push(StatusChange { anchor_id: a.id.clone(), from: a.status, to });
            a.status = to;
        }
    }

    /// Kahn's algorithm over the link graph; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        let n = self.anchors.len();
        let mut indegree = vec![0usize; n];
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(target, source, _) in &self.link_edges {
            indegree[target] += 1;
            out_edges[source].push(target);
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(self.anchors[i].id.clone());
            for &t in &out_edges[i] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn snapshot(&self) -> BankSnapshot {
        BankSnapshot { task_id: self.task_id.clone(), cursor: self.cursor, anchors: self.anchors.clone() }
    }

    /// Rebuilds a bank from a snapshot; links must point to earlier anchors.
    pub fn restore(snapshot: BankSnapshot) -> Result<Self, BankError> {
        let mut bank = MemoryBank::new(snapshot.task_id);
        bank.cursor = snapshot.cursor;
        for (pos, anchor) in snapshot.anchors.into_iter().enumerate() {
            if bank.by_id.contains_key(&anchor.id) {
                return Err(BankError::DuplicateId(anchor.id));
            }
            for link in &anchor.links {
                match bank.by_id.get(&link.source_anchor_id) {
                    Some(&s) => bank.link_edges.push((pos, s, link.relation)),
                    None => {
                        return Err(BankError::BadLink {
                            anchor: anchor.id.clone(),
                            source_id: link.source_anchor_id.clone(),
                        })
                    }
                }
            }
            bank.by_id.insert(anchor.id.clone(), pos);
            bank.dedup_index.insert((anchor.kind, normalize_content(&anchor.content)), pos);
            bank.anchors.push(anchor);
        }
        Ok(bank)
    }
}

/// Drops a leading `[category]` tag such as `[dependency] copied price`.
pub(crate) fn strip_tag(text: &str) -> &str {
    let t = text.trim_start();
    if let Some(rest) = t.strip_prefix('[') {
        if let Some(end) = rest.find(']') {
            return rest[end + 1..].trim_start();
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(step: usize) -> UiState {
        UiState { step_index: step, screenshot_ref: format!("s{step}"), app: "Shop".into(), elements: None }
    }

    fn wait() -> Action {
        Action::bare(ActionKind::Wait)
    }

    #[test]
    fn first_insertion_records_evidence() {
        let mut bank = MemoryBank::new("t");
        let out =
            bank.update(&state(3), &wait(), Some(&AnchorProposal::new(AnchorType::Subgoal, "logged in"))).unwrap();
        assert_eq!(out.proposal, ProposalOutcome::Inserted { id: "m1".into() });
        assert_eq!(bank.active().count(), 1);
        assert_eq!(bank.anchors()[0].evidence[0].step_index, 3);
        assert_eq!(bank.cursor(), Some(3));
    }

    #[test]
    fn duplicate_is_dropped() {
        let mut bank = MemoryBank::new("t");
        let p = AnchorProposal::new(AnchorType::Subgoal, "logged in");
        bank.update(&state(0), &wait(), Some(&p)).unwrap();
        let before = bank.snapshot();
        let again = AnchorProposal::new(AnchorType::Subgoal, "  Logged   IN ");
        let out = bank.update(&state(1), &wait(), Some(&again)).unwrap();
        assert_eq!(out.proposal, ProposalOutcome::Duplicate { existing: "m1".into() });
        assert_eq!(bank.anchors(), before.anchors.as_slice());
    }

    #[test]
    fn result_of_supersedes_source() {
        let mut bank = MemoryBank::new("t");
        bank.update(&state(0), &wait(), Some(&AnchorProposal::new(AnchorType::Dependency, "copied price 42"))).unwrap();
        let b = AnchorProposal::new(AnchorType::Dependency, "entered price 42").with_link("m1", Relation::ResultOf);
        let out = bank.update(&state(4), &wait(), Some(&b)).unwrap();
        assert_eq!(out.status_changes.len(), 1);
        assert_eq!(bank.get("m1").unwrap().status, AnchorStatus::Superseded);
        assert_eq!(bank.get("m2").unwrap().status, AnchorStatus::Active);
        assert_eq!(bank.get("m2").unwrap().links[0].source_anchor_id, "m1");
    }

    #[test]
    fn blocks_does_not_invalidate() {
        let mut bank = MemoryBank::new("t");
        bank.update(&state(0), &wait(), Some(&AnchorProposal::new(AnchorType::Exception, "popup shown"))).unwrap();
        let p =
            AnchorProposal::new(AnchorType::StateChange, "checkout page").with_link("popup shown", Relation::Blocks);
        bank.update(&state(1), &wait(), Some(&p)).unwrap();
        assert!(bank.get("m1").unwrap().is_active());
    }

    #[test]
    fn unknown_link_rejected_but_cursor_advances() {
        let mut bank = MemoryBank::new("t");
        let p = AnchorProposal::new(AnchorType::Subgoal, "x").with_link("m9", Relation::Enables);
        let out = bank.update(&state(2), &wait(), Some(&p)).unwrap();
        assert!(matches!(out.proposal, ProposalOutcome::Rejected { .. }));
        assert!(bank.is_empty());
        assert_eq!(bank.cursor(), Some(2));
    }

    #[test]
    fn invalidation_is_one_way() {
        let mut bank = MemoryBank::new("t");
        bank.update(&state(0), &wait(), Some(&AnchorProposal::new(AnchorType::Exception, "network error"))).unwrap();
        let mut p = AnchorProposal::new(AnchorType::Subgoal, "retried");
        p.invalidate = Some("[exception] network error".into());
        bank.update(&state(1), &wait(), Some(&p)).unwrap();
        assert_eq!(bank.get("m1").unwrap().status, AnchorStatus::Invalidated);
        // same content may be recorded again once the old one is inactive
        let out = bank
            .update(&state(2), &wait(), Some(&AnchorProposal::new(AnchorType::Exception, "network error")))
            .unwrap();
        assert_eq!(out.proposal, ProposalOutcome::Inserted { id: "m3".into() });
        assert_eq!(bank.get("m1").unwrap().status, AnchorStatus::Invalidated);
    }

    #[test]
    fn single_active_finish() {
        let mut bank = MemoryBank::new("t");
        bank.update(&state(0), &wait(), Some(&AnchorProposal::new(AnchorType::Finish, "sent"))).unwrap();
        bank.update(&state(1), &wait(), Some(&AnchorProposal::new(AnchorType::Finish, "sent again"))).unwrap();
        let active_finish = bank.active().filter(|a| a.kind == AnchorType::Finish).count();
        assert_eq!(active_finish, 1);
    }

    #[test]
    fn stale_step_rejected() {
        let mut bank = MemoryBank::new("t");
        bank.update(&state(5), &wait(), None).unwrap();
        assert_eq!(bank.update(&state(4), &wait(), None), Err(BankError::StaleStep { step: 4, cursor: 5 }));
    }

    #[test]
    fn snapshot_restores() {
        let mut bank = MemoryBank::new("t");
        bank.update(&state(0), &wait(), Some(&AnchorProposal::new(AnchorType::Subgoal, "a"))).unwrap();
        bank.update(
            &state(1),
            &wait(),
            Some(&AnchorProposal::new(AnchorType::Subgoal, "b").with_link("a", Relation::Prerequisite)),
        )
        .unwrap();
        let snap = bank.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let restored = MemoryBank::restore(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(restored.snapshot(), snap);
        assert_eq!(restored.topological_order().unwrap(), vec!["m1", "m2"]);
    }
}
