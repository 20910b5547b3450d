use asmb_core::domain::io::{read_manifest, read_suite, serialize_suite};
use asmb_core::domain::{ActionKind, AnchorPredicate, Intent, Task};
use asmb_core::memory::HistoryMode;
use asmb_core::metrics::{task_completion, MetricOptions, TaskOutcome, TcrScope};
use asmb_core::policy::{ForgetfulPolicy, PolicySpec, UNKNOWN_VALUE};
use asmb_core::runner::{run_suite, run_task, RunConfig};
use asmb_core::synth::{
    generate_suite, generate_task, self_check, write_generated_suite, Span, SynthConfig, SynthError,
};
use proptest::prelude::*;

fn small(seed: u64, n: usize) -> SynthConfig {
    SynthConfig { seed, num_tasks: n, ..SynthConfig::default() }
}

fn reuse_steps(task: &Task) -> Vec<(usize, usize)> {
    task.anchors()
        .filter_map(|(t, a)| match &a.predicate {
            Some(AnchorPredicate::ValueEqualsEvidence { evidence_step, .. }) => Some((*evidence_step, t)),
            _ => None,
        })
        .collect()
}

fn forgetful_tcr(tasks: &[Task], window: usize, mode: HistoryMode) -> f64 {
    let run = run_suite(
        tasks,
        &[PolicySpec::Forgetful { window }],
        &[mode],
        &RunConfig::default(),
        None,
        &MetricOptions::default(),
    )
    .unwrap();
    run.report.cells[0].tcr.unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_tasks_are_sound(seed in any::<u64>(), lo in 20usize..40, extra in 0usize..20, gap in 2usize..12) {
        let cfg = SynthConfig {
            length: Span::new(lo, lo + extra),
            gap: Span::new(gap, gap + 3),
            ..SynthConfig::default()
        };
        prop_assume!(cfg.validate().is_ok());
        let task = generate_task(seed, &cfg).unwrap();
        prop_assert!(cfg.length.contains(task.len()));
        prop_assert_eq!(self_check(&task, cfg.gap_bounds()), Vec::<String>::new());
    }
}

#[test]
fn same_seed_same_bytes() {
    let a = generate_suite(&small(11, 20)).unwrap();
    let b = generate_suite(&small(11, 20)).unwrap();
    assert_eq!(serialize_suite(&a), serialize_suite(&b));
    let c = generate_suite(&small(12, 20)).unwrap();
    assert_ne!(serialize_suite(&a), serialize_suite(&c));
    assert_eq!(generate_task(5, &SynthConfig::default()).unwrap(), generate_task(5, &SynthConfig::default()).unwrap());
}

#[test]
fn intent_mix_split_is_exact() {
    let mut cfg = small(0, 100);
    cfg.intent_mix = [(Intent::Lookup, 0.5), (Intent::PurchaseOrder, 0.5)].into_iter().collect();
    let tasks = generate_suite(&cfg).unwrap();
    let lookups = tasks.iter().filter(|t| t.intent == Intent::Lookup).count();
    let orders = tasks.iter().filter(|t| t.intent == Intent::PurchaseOrder).count();
    assert_eq!((lookups, orders), (50, 50));
}

#[test]
fn standard_suite_shape() {
    let cfg = SynthConfig::default();
    let tasks = generate_suite(&cfg).unwrap();
    assert_eq!(tasks.len(), 100);
    for t in &tasks {
        assert!((20..=60).contains(&t.len()), "{} has {} steps", t.id, t.len());
        assert!(self_check(t, cfg.gap_bounds()).is_empty(), "{}", t.id);
        let reuses = reuse_steps(t);
        assert!(!reuses.is_empty());
        for (e, r) in reuses {
            assert!((10..=15).contains(&(r - e)));
            assert_ne!(t.steps[e].state.app, t.steps[r].state.app);
        }
    }
    let ids: std::collections::HashSet<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(ids.len(), 100);
}

#[test]
fn planted_values_only_on_their_screen() {
    for task in generate_suite(&small(3, 30)).unwrap() {
        for (_, a) in task.anchors() {
            let Some(value) = a.extracted_value() else { continue };
            assert!(!task.instruction.contains(value));
            let screens: Vec<usize> = task
                .steps
                .iter()
                .enumerate()
                .filter(|(_, s)| s.state.element_texts().any(|t| asmb_core::domain::contains_token(t, value)))
                .map(|(i, _)| i)
                .collect();
            assert_eq!(screens, vec![a.evidence[0].step_index], "{} value {value}", task.id);
        }
    }
}

#[test]
fn gap_ten_fails_raw_window_five_on_every_task() {
    let cfg = SynthConfig { gap: Span::new(10, 10), ..small(21, 40) };
    let tasks = generate_suite(&cfg).unwrap();
    let config = RunConfig::default().with_mode(HistoryMode::Raw);
    for task in &tasks {
        let record = run_task(task, &ForgetfulPolicy::new(5), &config);
        let predicted = record.predicted_actions();
        let outcome = task_completion(task, &predicted, TcrScope::Closure).outcome;
        assert_eq!(outcome, TaskOutcome::Failure, "{}", task.id);
        let reuse: Vec<usize> = reuse_steps(task).into_iter().map(|(_, r)| r).collect();
        for (t, (p, gt)) in predicted.iter().zip(&task.steps).enumerate() {
            if reuse.contains(&t) {
                assert_eq!(p.kind, ActionKind::InputText);
                assert_eq!(p.value, UNKNOWN_VALUE);
            } else {
                assert_eq!(p, &gt.action, "{} step {t}", task.id);
            }
        }
    }
}

#[test]
fn raw_tcr_monotone_in_gap_and_window() {
    let suite = |gap: usize| {
        generate_suite(&SynthConfig { gap: Span::new(gap, gap), length: Span::new(30, 45), ..small(8, 40) }).unwrap()
    };
    let by_gap: Vec<f64> = [3, 5, 7, 12].iter().map(|&g| forgetful_tcr(&suite(g), 5, HistoryMode::Raw)).collect();
    assert!(by_gap.windows(2).all(|w| w[1] <= w[0]), "{by_gap:?}");
    assert_eq!(by_gap[0], 100.0);
    assert_eq!(by_gap[3], 0.0);

    let mixed =
        generate_suite(&SynthConfig { gap: Span::new(4, 12), length: Span::new(30, 45), ..small(9, 40) }).unwrap();
    let by_window: Vec<f64> = [2, 5, 8, 12].iter().map(|&w| forgetful_tcr(&mixed, w, HistoryMode::Raw)).collect();
    assert!(by_window.windows(2).all(|w| w[1] >= w[0]), "{by_window:?}");
    assert_eq!(by_window[3], 100.0);
}

#[test]
fn mode_separation_with_long_gaps() {
    let tasks = generate_suite(&small(31, 40)).unwrap();
    let raw = forgetful_tcr(&tasks, 5, HistoryMode::Raw);
    let summary = forgetful_tcr(&tasks, 5, HistoryMode::Summary);
    let asm = forgetful_tcr(&tasks, 5, HistoryMode::Asm);
    assert!(asm >= summary && summary >= raw, "{raw} {summary} {asm}");
    assert_eq!(asm, 100.0);
}

#[test]
fn infeasible_configs_error() {
    let cfg = SynthConfig { length: Span::new(14, 20), ..SynthConfig::default() };
    match generate_suite(&cfg) {
        Err(SynthError::InvalidConfig(msg)) => assert!(msg.contains("max dependency gap"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn suite_file_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.jsonl");
    let cfg = small(4, 10);
    let (tasks, manifest) = write_generated_suite(&path, &cfg).unwrap();
    assert_eq!(read_suite(&path).unwrap(), tasks);
    let on_disk = read_manifest(&path).unwrap().unwrap();
    assert_eq!(on_disk, manifest);
    assert_eq!(on_disk.seed, 4);
    assert_eq!(on_disk.num_tasks, 10);
    assert_eq!(on_disk.name, "suite");
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 10);
    let back: SynthConfig = serde_json::from_value(on_disk.config).unwrap();
    assert_eq!(back, cfg);
}
