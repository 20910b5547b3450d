use std::hint::black_box;

use asmb_core::metrics::{action_match, anls, suite_report, MatchOptions, MetricOptions};
use asmb_core::policy::ForgetfulPolicy;
use asmb_core::runner::{run_task, RunConfig};
use asmb_core::synth::{generate_suite, SynthConfig};
use asmb_core::{Action, HistoryMode};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn text_metrics(c: &mut Criterion) {
    let mut g = c.benchmark_group("anls");
    for len in [8usize, 64, 256] {
        let a: String = "order number #4821 ".chars().cycle().take(len).collect();
        let b: String = "order nunber #4812 ".chars().cycle().take(len).collect();
        g.bench_with_input(BenchmarkId::from_parameter(len), &(a, b), |bench, (a, b)| {
            bench.iter(|| anls(black_box(a), black_box(b)))
        });
    }
    g.finish();
}

fn matching(c: &mut Criterion) {
    let tap = Action::tap(500, 500);
    let near = Action::tap(590, 500);
    c.bench_function("action_match/tap", |b| {
        b.iter(|| action_match(black_box(&near), black_box(&tap), None, MatchOptions::default()))
    });
}

fn report(c: &mut Criterion) {
    let cfg = SynthConfig { num_tasks: 100, ..SynthConfig::default() };
    let tasks = generate_suite(&cfg).unwrap();
    let policy = ForgetfulPolicy::new(5);
    let records: Vec<_> = HistoryMode::ALL
        .iter()
        .flat_map(|&m| {
            let rc = RunConfig::default().with_mode(m);
            tasks.iter().map(|t| run_task(t, &policy, &rc)).collect::<Vec<_>>()
        })
        .collect();
    let opts = MetricOptions::default();
    c.bench_function("suite_report/100x3", |b| b.iter(|| suite_report(black_box(&records), &tasks, &opts)));
}

criterion_group!(benches, text_metrics, matching, report);
criterion_main!(benches);
