use crate::domain::{validate_task, AnchorPredicate, AnchorType, Task};
use crate::memory::ProposalOutcome;
use crate::metrics::PredicateEvaluator;
use crate::policy::OraclePolicy;
use crate::runner::{run_task, RunConfig};

use super::Span;

/// Soundness violations of a task; empty iff sound.
///
/// Replays the ground-truth actions against every predicate, replays the
/// oracle's anchors through a memory bank, and checks FINISH uniqueness and,
/// when `gaps` is given, every reuse gap. Identical messages are reported
/// once.
pub fn self_check(task: &Task, gaps: Option<Span>) -> Vec<String> {
    let structural = validate_task(task);
    if !structural.is_empty() {
        return structural;
    }
    let mut out: Vec<String> = Vec::new();
    let mut push = |m: String| {
        if !out.contains(&m) {
            out.push(m);
        }
    };

    if task.anchors().filter(|(_, a)| a.kind == AnchorType::Finish).count() != 1 {
        push("FINISH not unique".to_string());
    }

    let gt: Vec<_> = task.steps.iter().map(|s| s.action.clone()).collect();
    let mut eval = PredicateEvaluator::new(task, &gt);
    for (step, anchor) in task.anchors() {
        let Some(pred) = &anchor.predicate else {
            push("anchor without predicate".to_string());
            continue;
        };
        let first_evidence = anchor.evidence.iter().map(|e| e.step_index).min().unwrap_or(step);
        if pred.steps().end < first_evidence {
            push("predicate precedes evidence".to_string());
            continue;
        }
        match eval.witness(anchor) {
            Ok(Some(_)) => {}
            Ok(None) => push(format!("{} unsatisfied by GT", pred.kind_name())),
            Err(e) => push(e.to_string()),
        }
        if let AnchorPredicate::ValueEqualsEvidence { evidence_step, .. } = pred {
            let gap = step.saturating_sub(*evidence_step);
            if let Some(bounds) = gaps.filter(|b| !b.contains(gap)) {
                push(format!("dependency gap {gap} outside [{}, {}]", bounds.min, bounds.max));
            }
            if task.steps.get(*evidence_step).map(|s| &s.state.app) == Some(&task.steps[step].state.app) {
                push("reuse in the same app as its evidence".to_string());
            }
        }
    }

    let record = run_task(task, &OraclePolicy, &RunConfig::default());
    for e in &record.errors {
        push(format!("oracle replay: {e}"));
    }
    for (entry, s) in record.steps.iter().zip(&task.steps) {
        if s.gt_anchors.is_empty() {
            continue;
        }
        match entry.anchor_outcome.as_ref().map(|o| &o.proposal) {
            Some(ProposalOutcome::Inserted { .. }) => {}
            other => push(format!("oracle anchor at step {} not inserted: {other:?}", entry.step_index)),
        }
    }
    if let Some(snapshot) = &record.final_bank {
        if crate::memory::MemoryBank::restore(snapshot.clone()).map(|b| b.topological_order().is_none()).unwrap_or(true)
        {
            push("anchor links do not form a DAG".to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StepRange;
    use crate::synth::{generate_task, SynthConfig};

    fn task() -> Task {
        generate_task(3, &SynthConfig::default()).unwrap()
    }

    fn extraction_step(task: &Task) -> usize {
        task.anchors()
            .find(|(_, a)| matches!(a.predicate, Some(AnchorPredicate::ValueContains { .. })))
            .map(|(t, _)| t)
            .unwrap()
    }

    #[test]
    fn generated_task_is_sound() {
        let cfg = SynthConfig::default();
        assert_eq!(self_check(&task(), cfg.gap_bounds()), Vec::<String>::new());
    }

    #[test]
    fn predicate_before_evidence() {
        let mut t = task();
        let e = extraction_step(&t);
        if let Some(AnchorPredicate::ValueContains { steps, .. }) = &mut t.steps[e].gt_anchors[0].predicate {
            *steps = StepRange::new(e - 1, e - 1);
        }
        assert_eq!(self_check(&t, None), vec!["predicate precedes evidence"]);
    }

    #[test]
    fn mutated_value_is_unsatisfied() {
        let mut t = task();
        let e = extraction_step(&t);
        if let Some(AnchorPredicate::ValueContains { value, .. }) = &mut t.steps[e].gt_anchors[0].predicate {
            value.push('7');
        }
        assert_eq!(self_check(&t, None), vec!["value_contains unsatisfied by GT"]);
    }

    #[test]
    fn gap_bounds_enforced() {
        let msgs = self_check(&task(), Some(Span::new(1, 2)));
        assert!(msgs.iter().all(|m| m.starts_with("dependency gap")), "{msgs:?}");
        assert!(!msgs.is_empty());
    }

    #[test]
    fn second_finish_reported() {
        let mut t = task();
        let mut extra = t.final_anchor().unwrap().clone();
        extra.id = "dup".into();
        extra.links.clear();
        let last = t.len() - 1;
        t.steps[last].gt_anchors.push(extra);
        let msgs = self_check(&t, None);
        assert!(!msgs.is_empty());
    }
}
