use std::collections::HashMap;

use asmb_core::domain::{Action, AnchorStatus, AnchorType, Bbox, Relation, UiElement, UiState};
use asmb_core::memory::{retrieve, AnchorProposal, MemoryBank, ProposalOutcome, RetrievalStrategy};
use proptest::prelude::*;

const WORDS: [&str; 5] = ["price", "order", "Shop", "42", "gate"];

#[derive(Debug, Clone)]
enum Source {
    Id(usize),
    Content(usize),
    Unknown,
}

#[derive(Debug, Clone)]
struct Op {
    kind: AnchorType,
    words: Vec<usize>,
    links: Vec<(Source, Relation)>,
    invalidate: Option<Source>,
}

fn source() -> impl Strategy<Value = Source> {
    prop_oneof![
        4 => (0usize..20).prop_map(Source::Id),
        4 => (0usize..20).prop_map(Source::Content),
        1 => Just(Source::Unknown),
    ]
}

fn op() -> impl Strategy<Value = Option<Op>> {
    let kind = prop::sample::select(AnchorType::ALL.to_vec());
    let relation = prop::sample::select(Relation::ALL.to_vec());
    let body = (
        kind,
        prop::collection::vec(0usize..WORDS.len(), 1..3),
        prop::collection::vec((source(), relation), 0..3),
        prop::option::weighted(0.15, source()),
    )
        .prop_map(|(kind, words, links, invalidate)| Op { kind, words, links, invalidate });
    prop::option::weighted(0.85, body)
}

fn resolve(bank: &MemoryBank, s: &Source) -> String {
    let anchors = bank.anchors();
    match s {
        Source::Id(i) if !anchors.is_empty() => anchors[i % anchors.len()].id.clone(),
        Source::Content(i) if !anchors.is_empty() => anchors[i % anchors.len()].content.clone(),
        _ => "nothing here".to_string(),
    }
}

fn proposal(bank: &MemoryBank, op: &Op) -> AnchorProposal {
    let content: Vec<&str> = op.words.iter().map(|&w| WORDS[w]).collect();
    let mut p = AnchorProposal::new(op.kind, content.join(" "));
    for (s, r) in &op.links {
        p = p.with_link(resolve(bank, s), *r);
    }
    p.invalidate = op.invalidate.as_ref().map(|s| resolve(bank, s));
    p
}

fn state(step: usize) -> UiState {
    UiState {
        step_index: step,
        screenshot_ref: String::new(),
        app: "Shop".into(),
        elements: Some(vec![UiElement { bbox: Bbox::new(0, 0, 999, 999), text: Some("gate".into()), role: None }]),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bank_invariants(ops in prop::collection::vec(op(), 1..40), k in 1usize..6) {
        let mut bank = MemoryBank::new("p");
        let mut statuses: HashMap<String, AnchorStatus> = HashMap::new();
        for (step, op) in ops.iter().enumerate() {
            let st = state(step);
            let p = op.as_ref().map(|o| proposal(&bank, o));
            let before = bank.len();
            let out = bank.update(&st, &Action::tap(10, 10), p.as_ref()).unwrap();
            let grew = bank.len() - before;
            let inserted = matches!(out.proposal, ProposalOutcome::Inserted { .. });
            prop_assert_eq!(grew, usize::from(inserted));

            // Links only reach earlier anchors, so the graph stays acyclic.
            let order = bank.topological_order();
            prop_assert!(order.is_some());
            prop_assert_eq!(order.unwrap().len(), bank.len());

            for a in bank.anchors() {
                if let Some(prev) = statuses.insert(a.id.clone(), a.status) {
                    prop_assert!(prev == a.status || prev == AnchorStatus::Active);
                }
            }

            for strategy in [
                RetrievalStrategy::AllActive,
                RetrievalStrategy::RecencyTopK { k },
                RetrievalStrategy::LinkClosure,
            ] {
                let got = retrieve(&bank, &st, "type the gate into Shop", strategy);
                prop_assert_eq!(&got, &retrieve(&bank, &st, "type the gate into Shop", strategy));
                for a in &got {
                    prop_assert!(bank.get(&a.id).is_some_and(|b| b.is_active()));
                }
                if let RetrievalStrategy::RecencyTopK { k } = strategy {
                    prop_assert!(got.len() <= k);
                }
            }
            prop_assert_eq!(
                retrieve(&bank, &st, "", RetrievalStrategy::AllActive).len(),
                bank.active().count()
            );

            if let Some(p) = p.filter(|p| p.invalidate.is_none()) {
                let snap = bank.snapshot();
                let again = bank.update(&st, &Action::tap(10, 10), Some(&p)).unwrap();
                let reinserted = matches!(again.proposal, ProposalOutcome::Inserted { .. });
                prop_assert!(!reinserted);
                prop_assert_eq!(bank.snapshot(), snap);
            }
        }
        let restored = MemoryBank::restore(bank.snapshot()).unwrap();
        prop_assert_eq!(restored.snapshot(), bank.snapshot());
        prop_assert!(bank.active().filter(|a| a.kind == AnchorType::Finish).count() <= 1);
    }
}
