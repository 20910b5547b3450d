use std::hint::black_box;

use asmb_core::memory::{retrieve, MemoryBank};
use asmb_core::policy::{ForgetfulPolicy, OraclePolicy};
use asmb_core::runner::{run_task, RunConfig};
use asmb_core::synth::{generate_suite, generate_task, SynthConfig};
use asmb_core::{HistoryMode, RetrievalStrategy};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn task_runs(c: &mut Criterion) {
    let cfg = SynthConfig { length: [60, 60].into(), ..SynthConfig::default() };
    let task = generate_task(11, &cfg).unwrap();
    let mut g = c.benchmark_group("run_task/60_steps");
    for mode in HistoryMode::ALL {
        let rc = RunConfig::default().with_mode(mode);
        g.bench_with_input(BenchmarkId::new("oracle", mode), &rc, |b, rc| {
            b.iter(|| run_task(black_box(&task), &OraclePolicy, rc))
        });
        g.bench_with_input(BenchmarkId::new("forgetful", mode), &rc, |b, rc| {
            b.iter(|| run_task(black_box(&task), &ForgetfulPolicy::new(5), rc))
        });
    }
    g.finish();
}

fn retrieval(c: &mut Criterion) {
    let cfg = SynthConfig { length: [60, 60].into(), dependencies: [3, 3].into(), ..SynthConfig::default() };
    let task = generate_task(5, &cfg).unwrap();
    let record = run_task(&task, &OraclePolicy, &RunConfig::default());
    let bank = MemoryBank::restore(record.final_bank.unwrap()).unwrap();
    let state = &task.steps[task.len() - 1].state;
    let mut g = c.benchmark_group("retrieve");
    for strategy in [RetrievalStrategy::AllActive, RetrievalStrategy::LinkClosure, "recency_top_k:k=4".parse().unwrap()]
    {
        g.bench_with_input(BenchmarkId::from_parameter(strategy), &strategy, |b, s| {
            b.iter(|| retrieve(black_box(&bank), state, &task.instruction, *s))
        });
    }
    g.finish();
}

fn generation(c: &mut Criterion) {
    let cfg = SynthConfig { num_tasks: 50, ..SynthConfig::default() };
    c.bench_function("generate_suite/50", |b| b.iter(|| generate_suite(black_box(&cfg)).unwrap()));
}

criterion_group!(benches, task_runs, retrieval, generation);
criterion_main!(benches);
