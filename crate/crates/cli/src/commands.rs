use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{IsTerminal, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use asmb_core::domain::io::{content_hash, read_manifest, read_suite, SuiteIoError};
use asmb_core::domain::Intent;
use asmb_core::memory::HistoryMode;
use asmb_core::metrics::{render_bucket_csv, render_table, suite_report, SuiteReport};
use asmb_core::policy::{PolicyEvent, PolicySpec, TEMPLATE_VERSION};
use asmb_core::runner::{all_cells, run_cells, CellFailure, RunRecord, Timing};
use asmb_core::synth::{self, self_check, Span, SynthConfig, SynthError};
use asmb_core::Task;
use serde::Serialize;

use crate::config::FileConfig;
use crate::store::{
    now_unix, write_atomic, write_json, CellCounts, RunDir, RunManifest, EFFECTIVE_CONFIG, FAILURES, MANIFEST,
};
use crate::{CliError, EvalArgs, GenArgs, MetricArgs, ReportArgs, RunArgs, SelfcheckArgs};

impl From<SuiteIoError> for CliError {
    fn from(e: SuiteIoError) -> Self {
        match e {
            SuiteIoError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(io) => io.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn parse_intent_mix(s: &str) -> Result<BTreeMap<Intent, f64>, CliError> {
    let mut mix = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || CliError::Input(format!("invalid intent weight `{part}` (expected intent=weight)"));
        let (name, weight) = part.split_once('=').ok_or_else(bad)?;
        let intent = Intent::ALL
            .into_iter()
            .find(|i| i.as_str() == name.trim())
            .ok_or_else(|| CliError::Input(format!("unknown intent `{}`", name.trim())))?;
        mix.insert(intent, weight.trim().parse::<f64>().map_err(|_| bad())?);
    }
    Ok(mix)
}

pub fn gen(a: GenArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let mut cfg = file.synth;
    if let Some(v) = a.tasks {
        cfg.num_tasks = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.length {
        cfg.length = v;
    }
    if let Some(v) = a.gap {
        cfg.gap = v;
    }
    if let Some(v) = a.dependencies {
        cfg.dependencies = v;
    }
    if let Some(v) = a.anchors {
        cfg.anchors = v;
    }
    if let Some(v) = a.exception_probability {
        cfg.exception_probability = v;
    }
    if let Some(v) = a.summary_carry_probability {
        cfg.summary_carry_probability = v;
    }
    if let Some(v) = a.app_pool {
        cfg.app_pool = v;
    }
    if let Some(v) = &a.intent_mix {
        cfg.intent_mix = parse_intent_mix(v)?;
    }
    if let Some(v) = a.gap_schedule {
        cfg.gap_schedule = v.into();
    }
    let out = a
        .out
        .or(file.run.suite)
        .ok_or_else(|| CliError::Input("no output path (pass --out or set run.suite)".into()))?;
    let (tasks, manifest) = synth::write_generated_suite(&out, &cfg)?;

    let mut by_intent: BTreeMap<Intent, usize> = BTreeMap::new();
    for t in &tasks {
        *by_intent.entry(t.intent).or_default() += 1;
    }
    let steps: usize = tasks.iter().map(Task::len).sum();
    println!("wrote {} tasks ({steps} steps) to {}", manifest.num_tasks, out.display());
    for (intent, n) in by_intent {
        println!("  {:<20} {n}", intent.as_str());
    }
    Ok(())
}

/// A record in which every step failed to reach the endpoint says nothing
/// about the policy; it is kept as a failure so a rerun retries the cell.
fn unreachable(record: &RunRecord) -> Option<String> {
    if record.steps.is_empty() || !record.steps.iter().all(|s| s.decision_failure) {
        return None;
    }
    let mut last = None;
    for s in &record.steps {
        for e in &s.events {
            match e {
                PolicyEvent::TransportFailure { error, .. } => last = Some(error),
                PolicyEvent::ParseFailure { .. } => return None,
                _ => {}
            }
        }
    }
    last.map(|e| format!("endpoint unreachable on every step: {e}"))
}

fn apply_run_flags(file: &mut FileConfig, a: &RunArgs) -> Result<(), CliError> {
    let run = &mut file.run;
    if a.suite.is_some() {
        run.suite.clone_from(&a.suite);
    }
    if a.out.is_some() {
        run.out.clone_from(&a.out);
    }
    if !a.policies.is_empty() {
        run.policies = a.policies.iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
    }
    if !a.modes.is_empty() {
        run.modes = a
            .modes
            .iter()
            .map(|m| m.trim().parse::<HistoryMode>().map_err(CliError::Input))
            .collect::<Result<_, _>>()?;
    }
    if a.retrieval.is_some() {
        run.retrieval.clone_from(&a.retrieval);
    }
    run.budget = a.budget.or(run.budget);
    run.seed = a.seed.or(run.seed);
    run.concurrency = a.concurrency.or(run.concurrency);
    if let Some(t) = &a.timing {
        run.timing = Some(
            serde_json::from_value::<Timing>(serde_json::Value::String(t.clone()))
                .map_err(|e| CliError::Input(format!("timing: {e}")))?,
        );
    }
    let ep = &mut file.endpoint;
    if a.endpoint.is_some() {
        ep.url.clone_from(&a.endpoint);
    }
    if a.model.is_some() {
        ep.model.clone_from(&a.model);
    }
    if a.api_key.is_some() {
        ep.api_key.clone_from(&a.api_key);
    }
    ep.timeout_secs = a.timeout_secs.or(ep.timeout_secs);
    ep.max_retries = a.max_retries.or(ep.max_retries);
    ep.temperature = a.temperature.or(ep.temperature);
    ep.backoff_ms = a.backoff_ms.or(ep.backoff_ms);
    ep.max_in_flight = a.max_in_flight.or(ep.max_in_flight);
    if a.trace {
        ep.trace = Some(true);
    }
    Ok(())
}

pub fn run(a: RunArgs) -> Result<(), CliError> {
    let mut file = FileConfig::load(a.config.as_deref())?;
    apply_run_flags(&mut file, &a)?;
    let run_cfg = file.resolve_run()?;
    let suite_path =
        file.run.suite.clone().ok_or_else(|| CliError::Input("no suite (pass --suite or set run.suite)".into()))?;
    let out =
        file.run.out.clone().ok_or_else(|| CliError::Input("no run directory (pass --out or set run.out)".into()))?;
    if file.run.policies.is_empty() {
        return Err(CliError::Input("no policies (pass --policy or set run.policies)".into()));
    }
    let specs: Vec<PolicySpec> =
        file.run.policies.iter().map(|p| p.parse().map_err(CliError::Input)).collect::<Result<_, _>>()?;
    // Canonical spellings make the echoed config and record names stable.
    file.run.policies = specs.iter().map(ToString::to_string).collect();
    let endpoint = file.endpoint_config();
    let policies =
        specs.iter().map(|s| s.build(endpoint.as_ref()).map_err(CliError::Input)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = policies.iter().map(|p| p.name()).collect();
    let modes = file.run.modes.clone();

    let tasks = read_suite(&suite_path)?;
    let suite_manifest = read_manifest(&suite_path)?;
    let suite_hash = content_hash(&tasks);
    let dir = RunDir::new(&out);
    let previous = dir.manifest()?;
    if let Some(prev) = &previous {
        if prev.suite_hash != suite_hash {
            return Err(CliError::Input(format!(
                "{} holds a run over a different suite; use a new --out",
                out.display()
            )));
        }
    }
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_atomic(&out.join(EFFECTIVE_CONFIG), &file.to_toml())?;

    let config_hash = run_cfg.config_hash();
    let cells = all_cells(tasks.len(), policies.len(), &modes);
    let pending: Vec<_> = cells
        .iter()
        .copied()
        .filter(|c| !dir.is_complete(&tasks[c.task].id, &names[c.policy], c.mode, &config_hash))
        .collect();
    let skipped = cells.len() - pending.len();

    let write_errors = Mutex::new(Vec::new());
    let done = AtomicUsize::new(0);
    let total = pending.len();
    let progress = std::io::stderr().is_terminal();
    let results = run_cells(&tasks, &policies, &pending, &run_cfg, &|record| {
        if unreachable(record).is_none() {
            if let Err(e) = dir.write_record(record) {
                write_errors.lock().expect("lock").push(e.to_string());
            }
        }
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if progress {
            let mut err = std::io::stderr().lock();
            let _ = write!(err, "\r\x1b[2K[{n}/{total}] {} {} {}", record.task_id, record.policy, record.mode);
            if n == total {
                let _ = writeln!(err);
            }
        }
    });
    if let Some(e) = write_errors.into_inner().expect("lock").into_iter().next() {
        return Err(CliError::Io(e));
    }

    let mut failures: Vec<CellFailure> = Vec::new();
    for result in results {
        match result {
            Ok(record) => {
                if let Some(message) = unreachable(&record) {
                    failures.push(CellFailure {
                        task_id: record.task_id,
                        policy: record.policy,
                        mode: record.mode,
                        message,
                    });
                }
            }
            Err(f) => failures.push(f),
        }
    }
    dir.write_failures(&failures)?;

    let now = now_unix();
    let counts =
        CellCounts { total: cells.len(), executed: pending.len() - failures.len(), skipped, failed: failures.len() };
    let manifest = RunManifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        template_version: TEMPLATE_VERSION.to_string(),
        suite: fs::canonicalize(&suite_path).unwrap_or(suite_path),
        suite_hash,
        suite_manifest,
        policies: names,
        modes,
        config_hash,
        run_config: run_cfg,
        effective_config: serde_json::to_value(&file).expect("config serializes"),
        created_unix: previous.map_or(now, |p| p.created_unix),
        updated_unix: now,
        cells: counts.clone(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    println!(
        "{} cells: {} executed, {} skipped, {} failed",
        counts.total, counts.executed, counts.skipped, counts.failed
    );
    if counts.failed > 0 {
        println!("failed cells listed in {}", out.join(FAILURES).display());
    }
    Ok(())
}

fn metric_config(m: &MetricArgs) -> Result<asmb_core::metrics::MetricOptions, CliError> {
    let mut file = FileConfig::load(m.config.as_deref())?;
    if m.text_threshold.is_some() {
        file.metrics.text_threshold = m.text_threshold;
    }
    if let Some(s) = &m.tcr_scope {
        file.metrics.tcr_scope = Some(s.parse().map_err(CliError::Input)?);
    }
    if let Some(t) = file.metrics.text_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Input(format!("text_threshold must be in [0, 1], got {t}")));
        }
    }
    Ok(file.metric_options())
}

/// Records and expectations of one run directory.
struct LoadedRun {
    tasks: Vec<Task>,
    records: Vec<RunRecord>,
    failures: Vec<CellFailure>,
    missing: Vec<String>,
    unreadable: Vec<String>,
}

fn load_run(root: &Path, suite: Option<&Path>) -> Result<LoadedRun, CliError> {
    let dir = RunDir::new(root);
    let manifest = dir.manifest()?;
    let suite_path: PathBuf = match (suite, &manifest) {
        (Some(s), _) => s.to_path_buf(),
        (None, Some(m)) => m.suite.clone(),
        (None, None) => {
            return Err(CliError::Input(format!("{} has no {MANIFEST}; pass --suite", root.display())));
        }
    };
    let tasks = read_suite(&suite_path)?;
    let (mut records, mut unreadable) = dir.records()?;
    let failures: Vec<CellFailure> = match fs::read_to_string(root.join(FAILURES)) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", root.join(FAILURES).display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(CliError::io(&root.join(FAILURES), e)),
    };
    let mut missing = Vec::new();
    if let Some(m) = &manifest {
        records.retain(|r| {
            let current = r.config_hash == m.config_hash;
            if !current {
                unreadable.push(format!("{} {} {}: stale config hash", r.task_id, r.policy, r.mode));
            }
            current
        });
        let have: BTreeSet<(&str, &str, HistoryMode)> =
            records.iter().map(|r| (r.task_id.as_str(), r.policy.as_str(), r.mode)).collect();
        for t in &tasks {
            for p in &m.policies {
                for &mode in &m.modes {
                    if !have.contains(&(t.id.as_str(), p.as_str(), mode)) {
                        missing.push(format!("{} {p} {mode}", t.id));
                    }
                }
            }
        }
    }
    Ok(LoadedRun { tasks, records, failures, missing, unreadable })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    /// Some expected cells have no record.
    partial: bool,
    runs: Vec<String>,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    missing: &'a [String],
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    unreadable: &'a [String],
    #[serde(flatten)]
    report: &'a SuiteReport,
}

fn write_report(
    out: &Path,
    runs: &[PathBuf],
    report: &SuiteReport,
    missing: &[String],
    unreadable: &[String],
) -> Result<String, CliError> {
    let table = render_table(report);
    let file = ReportFile {
        partial: !missing.is_empty(),
        runs: runs.iter().map(|p| p.display().to_string()).collect(),
        missing,
        unreadable,
        report,
    };
    write_json(&out.join("report.json"), &file)?;
    write_atomic(&out.join("report.txt"), &table)?;
    write_atomic(&out.join("buckets.csv"), &render_bucket_csv(report))?;
    Ok(table)
}

fn warn_partial(missing: &[String], unreadable: &[String]) {
    if !missing.is_empty() {
        eprintln!("warning: partial report, {} expected cells have no record", missing.len());
    }
    for u in unreadable {
        eprintln!("warning: skipped {u}");
    }
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let opts = metric_config(&a.metrics)?;
    let run = load_run(&a.run, a.suite.as_deref())?;
    let mut report = suite_report(&run.records, &run.tasks, &opts);
    report.failures = run.failures;
    let table = write_report(&a.run, std::slice::from_ref(&a.run), &report, &run.missing, &run.unreadable)?;
    print!("{table}");
    warn_partial(&run.missing, &run.unreadable);
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    let opts = metric_config(&a.metrics)?;
    let mut joined = SuiteReport::default();
    let mut missing = Vec::new();
    let mut unreadable = Vec::new();
    let mut seen: BTreeSet<(String, HistoryMode)> = BTreeSet::new();
    for root in &a.runs {
        let run = load_run(root, None)?;
        let mut part = suite_report(&run.records, &run.tasks, &opts);
        for cell in &mut part.cells {
            // The same cell from two runs would be indistinguishable.
            if !seen.insert((cell.policy.clone(), cell.mode)) {
                let tag =
                    root.file_name().map_or_else(|| root.display().to_string(), |n| n.to_string_lossy().into_owned());
                cell.policy = format!("{tag}/{}", cell.policy);
            }
        }
        joined.cells.extend(part.cells);
        joined.failures.extend(run.failures);
        missing.extend(run.missing.into_iter().map(|m| format!("{}: {m}", root.display())));
        unreadable.extend(run.unreadable);
    }
    let table = match &a.out {
        Some(out) => write_report(out, &a.runs, &joined, &missing, &unreadable)?,
        None => render_table(&joined),
    };
    print!("{table}");
    warn_partial(&missing, &unreadable);
    Ok(())
}

pub fn selfcheck(a: SelfcheckArgs) -> Result<(), CliError> {
    let tasks = read_suite(&a.suite)?;
    let gaps: Option<Span> = match a.gap {
        Some(g) => Some(g),
        None => read_manifest(&a.suite)?
            .and_then(|m| serde_json::from_value::<SynthConfig>(m.config).ok())
            .and_then(|c| c.gap_bounds()),
    };
    let mut unsound = 0;
    for t in &tasks {
        let problems = self_check(t, gaps);
        if !problems.is_empty() {
            unsound += 1;
            for p in problems {
                println!("{}: {p}", t.id);
            }
        }
    }
    println!("{} tasks checked, {unsound} unsound", tasks.len());
    if unsound > 0 {
        return Err(CliError::Input(format!("{unsound} of {} tasks are unsound", tasks.len())));
    }
    Ok(())
}
