use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bank::MemoryBank;
use crate::domain::{Anchor, Relation, UiState};

/// How anchors are selected from the bank before each decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum RetrievalStrategy {
    /// Every active anchor, insertion order.
    #[default]
    AllActive,
    /// The `k` most recently created active anchors, oldest first.
    RecencyTopK { k: usize },
    /// Active anchors sharing a token with the instruction or current app,
    /// followed by the active prerequisite/enables sources reachable from them.
    LinkClosure,
}

impl fmt::Display for RetrievalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrievalStrategy::AllActive => f.write_str("all_active"),
            RetrievalStrategy::RecencyTopK { k } => write!(f, "recency_top_k:k={k}"),
            RetrievalStrategy::LinkClosure => f.write_str("link_closure"),
        }
    }
}

impl FromStr for RetrievalStrategy {
    type Err = String;

    /// `all_active`, `link_closure`, or `recency_top_k:k=N` (`recency:N` also accepted).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (head, arg) {
            ("all_active", None) => Ok(RetrievalStrategy::AllActive),
            ("link_closure", None) => Ok(RetrievalStrategy::LinkClosure),
            ("recency_top_k" | "recency", Some(arg)) => {
                let raw = arg.strip_prefix("k=").unwrap_or(arg);
                let k: usize = raw.parse().map_err(|_| format!("invalid k in retrieval strategy: {s}"))?;
                if k == 0 {
                    return Err("recency_top_k requires k >= 1".to_string());
                }
                Ok(RetrievalStrategy::RecencyTopK { k })
            }
            _ => Err(format!("unknown retrieval strategy: {s}")),
        }
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "from", "into", "with", "that", "this", "then", "than", "your", "you", "are", "was", "its",
    "has", "have", "app", "via", "all", "any", "not", "but", "out", "about",
];

/// Lowercase alphanumeric runs of length >= 3, minus a small stopword list.
pub(crate) fn content_tokens(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 3)
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Selects anchors for the coming decision. Never returns superseded or
/// invalidated anchors; identical inputs yield identical ordered output.
pub fn retrieve(bank: &MemoryBank, state: &UiState, instruction: &str, strategy: RetrievalStrategy) -> Vec<Anchor> {
    match strategy {
        RetrievalStrategy::AllActive => bank.active().cloned().collect(),
        RetrievalStrategy::RecencyTopK { k } => {
            let active: Vec<&Anchor> = bank.active().collect();
            let skip = active.len().saturating_sub(k.max(1));
            active[skip..].iter().map(|a| (*a).clone()).collect()
        }
        RetrievalStrategy::LinkClosure => link_closure(bank, state, instruction),
    }
}

fn link_closure(bank: &MemoryBank, state: &UiState, instruction: &str) -> Vec<Anchor> {
    let mut query = content_tokens(instruction);
    query.extend(content_tokens(&state.app));
    let anchors = bank.anchors();

    let seeds: Vec<usize> = anchors
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_active() && !content_tokens(&a.content).is_disjoint(&query))
        .map(|(i, _)| i)
        .collect();

    let mut visited: HashSet<usize> = seeds.iter().copied().collect();
    let mut order = seeds.clone();
    let mut queue: VecDeque<usize> = seeds.into_iter().collect();
    while let Some(i) = queue.pop_front() {
        for link in &anchors[i].links {
            if !matches!(link.relation, Relation::Prerequisite | Relation::Enables) {
                continue;
            }
            if let Some(s) = bank.position(&link.source_anchor_id) {
                if visited.insert(s) {
                    order.push(s);
                    queue.push_back(s);
                }
            }
        }
    }
    order.into_iter().filter(|&i| anchors[i].is_active()).map(|i| anchors[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Action, ActionKind, AnchorType};
    use crate::memory::AnchorProposal;

    fn state(step: usize, app: &str) -> UiState {
        UiState { step_index: step, screenshot_ref: String::new(), app: app.into(), elements: None }
    }

    fn add(bank: &mut MemoryBank, step: usize, p: AnchorProposal) {
        bank.update(&state(step, "Shop"), &Action::bare(ActionKind::Wait), Some(&p)).unwrap();
    }

    fn ids(anchors: &[Anchor]) -> Vec<&str> {
        anchors.iter().map(|a| a.id.as_str()).collect()
    }

    #[test]
    fn empty_bank_yields_nothing() {
        let bank = MemoryBank::new("t");
        for s in [RetrievalStrategy::AllActive, RetrievalStrategy::RecencyTopK { k: 2 }, RetrievalStrategy::LinkClosure]
        {
            assert!(retrieve(&bank, &state(0, "Shop"), "anything", s).is_empty());
        }
    }

    #[test]
    fn all_active_filters_status() {
        let mut bank = MemoryBank::new("t");
        add(&mut bank, 0, AnchorProposal::new(AnchorType::Subgoal, "logged in"));
        let mut p = AnchorProposal::new(AnchorType::Exception, "ad closed");
        add(&mut bank, 1, p.clone());
        p = AnchorProposal::new(AnchorType::Subgoal, "cart open");
        p.invalidate = Some("m2".into());
        add(&mut bank, 2, p);
        assert_eq!(ids(&retrieve(&bank, &state(3, "Shop"), "", RetrievalStrategy::AllActive)), ["m1", "m3"]);
    }

    #[test]
    fn recency_keeps_newest() {
        let mut bank = MemoryBank::new("t");
        for (i, c) in ["a1", "a2", "a3", "a4"].iter().enumerate() {
            add(&mut bank, i, AnchorProposal::new(AnchorType::Subgoal, *c));
        }
        let got = retrieve(&bank, &state(5, "Shop"), "", RetrievalStrategy::RecencyTopK { k: 2 });
        assert_eq!(ids(&got), ["m3", "m4"]);
    }

    #[test]
    fn closure_follows_prerequisites() {
        let mut bank = MemoryBank::new("t");
        add(&mut bank, 0, AnchorProposal::new(AnchorType::Dependency, "copied coupon code"));
        add(&mut bank, 1, AnchorProposal::new(AnchorType::StateChange, "opened settings"));
        add(
            &mut bank,
            2,
            AnchorProposal::new(AnchorType::Subgoal, "wallet unlocked").with_link("m1", Relation::Prerequisite),
        );
        let got = retrieve(&bank, &state(3, "Notes"), "check the wallet balance", RetrievalStrategy::LinkClosure);
        assert_eq!(ids(&got), ["m3", "m1"]);
    }

    #[test]
    fn closure_seeds_on_app_name() {
        let mut bank = MemoryBank::new("t");
        add(&mut bank, 0, AnchorProposal::new(AnchorType::StateChange, "entered Messages"));
        add(&mut bank, 1, AnchorProposal::new(AnchorType::StateChange, "entered Shop"));
        let got = retrieve(&bank, &state(2, "Messages"), "", RetrievalStrategy::LinkClosure);
        assert_eq!(ids(&got), ["m1"]);
    }

    #[test]
    fn strategy_strings() {
        for s in ["all_active", "link_closure", "recency_top_k:k=3"] {
            let parsed: RetrievalStrategy = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert_eq!("recency:4".parse::<RetrievalStrategy>(), Ok(RetrievalStrategy::RecencyTopK { k: 4 }));
        assert!("recency_top_k:k=0".parse::<RetrievalStrategy>().is_err());
        assert!("vector".parse::<RetrievalStrategy>().is_err());
    }
}
