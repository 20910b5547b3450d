//! Teacher-forced replay: for each ground-truth step build the history
//! context, ask the policy for an action, record it against the ground
//! truth, and (in asm mode) update the memory bank. The state shown at every
//! step is the recorded one, whatever the policy predicted before.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::io::content_hash;
use crate::domain::{validate_task, Action, Task, UiState};
use crate::memory::{
    render_asm_context, render_raw_context, render_summary_context, retrieve, scripted_summary, BankSnapshot,
    HistoryMode, MemoryBank, RetrievalStrategy, UpdateOutcome,
};
use crate::metrics::{suite_report, MetricOptions, SuiteReport};
use crate::policy::{
    build_prompt, DecisionInput, EndpointConfig, Policy, PolicyEvent, PolicySpec, Usage, TEMPLATE_VERSION,
};

pub const DEFAULT_BUDGET: usize = 4096;

/// Whether wall-clock times are recorded or zeroed. Zeroed times keep
/// scripted runs byte-identical across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Measured for endpoint policies, zero for scripted ones.
    #[default]
    Auto,
    Measured,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: HistoryMode,
    pub retrieval: RetrievalStrategy,
    /// Context token budget for the history block.
    pub budget: usize,
    pub seed: u64,
    pub concurrency: usize,
    pub timing: Timing,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: HistoryMode::Asm,
            retrieval: RetrievalStrategy::AllActive,
            budget: DEFAULT_BUDGET,
            seed: 0,
            concurrency: 1,
            timing: Timing::Auto,
        }
    }
}

impl RunConfig {
    pub fn with_mode(&self, mode: HistoryMode) -> Self {
        RunConfig { mode, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.budget == 0 {
            return Err("budget must be > 0".into());
        }
        if self.concurrency == 0 {
            return Err("concurrency must be >= 1".into());
        }
        Ok(())
    }

    /// Hash of every setting that can change a record's content. Mode and
    /// policy are keyed separately; concurrency cannot change results.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            retrieval: &'a RetrievalStrategy,
            budget: usize,
            seed: u64,
            timing: Timing,
            template_version: &'a str,
        }
        content_hash(&Hashed {
            retrieval: &self.retrieval,
            budget: self.budget,
            seed: self.seed,
            timing: self.timing,
            template_version: TEMPLATE_VERSION,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub step_index: usize,
    pub observed_state: UiState,
    pub predicted_action: Action,
    pub gt_action: Action,
    /// Token estimate of the rendered history block alone.
    pub context_token_estimate: usize,
    pub usage: Usage,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_outcome: Option<UpdateOutcome>,
    #[serde(default)]
    pub decision_failure: bool,
    #[serde(default)]
    pub endpoint_calls: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub summary_carried_forward: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<PolicyEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: String,
    pub mode: HistoryMode,
    pub policy: String,
    pub config_hash: String,
    pub steps: Vec<StepEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_bank: Option<BankSnapshot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    pub wall_time_seconds: f64,
}

impl RunRecord {
    pub fn predicted_actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.predicted_action.clone()).collect()
    }
}

fn zero_times(policy: &dyn Policy, timing: Timing) -> bool {
    match timing {
        Timing::Auto => policy.is_deterministic(),
        Timing::Measured => false,
        Timing::Zero => true,
    }
}

/// Replays every step of `task` through `policy`.
pub fn run_task(task: &Task, policy: &dyn Policy, config: &RunConfig) -> RunRecord {
    let task_start = Instant::now();
    let zero = zero_times(policy, config.timing);
    let mode = config.mode;
    let mut bank = MemoryBank::new(task.id.clone());
    let mut running_summary = String::new();
    let mut steps = Vec::with_capacity(task.len());
    let mut errors = Vec::new();

    for t in 0..task.len() {
        let step_start = Instant::now();
        let step = &task.steps[t];
        let state = &step.state;
        let prior = &task.steps[..t];

        let (context, retrieved) = match mode {
            HistoryMode::Raw => (render_raw_context(prior, policy.history_window(), config.budget), Vec::new()),
            HistoryMode::Summary => {
                let text = if policy.writes_summary() { running_summary.clone() } else { scripted_summary(prior) };
                (render_summary_context(&text, config.budget), Vec::new())
            }
            HistoryMode::Asm => {
                let anchors = retrieve(&bank, state, &task.instruction, config.retrieval);
                (render_asm_context(&anchors, config.budget), anchors)
            }
        };
        let bundle = build_prompt(mode, &task.instruction, &context, state);
        let mut outcome = policy.decide(&DecisionInput {
            task,
            step_index: t,
            mode,
            bundle: &bundle,
            context: &context,
            retrieved: &retrieved,
        });

        let mut carried = false;
        if mode == HistoryMode::Summary && policy.writes_summary() {
            match outcome.decision.summary_text.as_deref() {
                Some(s) if !s.trim().is_empty() => running_summary = s.to_string(),
                _ => carried = true,
            }
        }

        let anchor_outcome = if mode == HistoryMode::Asm {
            match bank.update(state, &outcome.decision.action, outcome.decision.anchor_proposal.as_ref()) {
                Ok(o) => Some(o),
                Err(e) => {
                    errors.push(format!("step {t}: {e}"));
                    None
                }
            }
        } else {
            None
        };

        let wall = if zero { 0.0 } else { step_start.elapsed().as_secs_f64() };
        if zero {
            outcome.usage.wall_time_seconds = 0.0;
        }
        steps.push(StepEntry {
            step_index: t,
            observed_state: state.clone(),
            predicted_action: outcome.decision.action,
            gt_action: step.action.clone(),
            context_token_estimate: context.token_estimate,
            usage: outcome.usage,
            wall_time_seconds: wall,
            anchor_outcome,
            decision_failure: outcome.failed,
            endpoint_calls: outcome.endpoint_calls,
            summary_carried_forward: carried,
            events: outcome.events,
        });
    }

    RunRecord {
        task_id: task.id.clone(),
        mode,
        policy: policy.name(),
        config_hash: config.config_hash(),
        steps,
        final_bank: (mode == HistoryMode::Asm).then(|| bank.snapshot()),
        errors,
        wall_time_seconds: if zero { 0.0 } else { task_start.elapsed().as_secs_f64() },
    }
}

/// One (task, policy, mode) combination of a suite run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub task: usize,
    pub policy: usize,
    pub mode: HistoryMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub task_id: String,
    pub policy: String,
    pub mode: HistoryMode,
    pub message: String,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "task run panicked".to_string())
}

/// Every (task, policy, mode) cell in task-major order.
pub fn all_cells(num_tasks: usize, num_policies: usize, modes: &[HistoryMode]) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(num_tasks * num_policies * modes.len());
    for task in 0..num_tasks {
        for policy in 0..num_policies {
            for &mode in modes {
                cells.push(Cell { task, policy, mode });
            }
        }
    }
    cells
}

/// Runs `cells` on up to `config.concurrency` threads. Results come back in
/// `cells` order; `on_done` sees each record as soon as it finishes. A cell
/// whose task is invalid or whose run panics becomes a failure instead of
/// aborting the batch.
pub fn run_cells(
    tasks: &[Task],
    policies: &[Box<dyn Policy>],
    cells: &[Cell],
    config: &RunConfig,
    on_done: &(dyn Fn(&RunRecord) + Sync),
) -> Vec<Result<RunRecord, CellFailure>> {
    let run_one = |cell: &Cell| {
        let task = &tasks[cell.task];
        let policy = policies[cell.policy].as_ref();
        let failure =
            |message: String| CellFailure { task_id: task.id.clone(), policy: policy.name(), mode: cell.mode, message };
        if let Some(v) = validate_task(task).into_iter().next() {
            return Err(failure(format!("invalid task: {v}")));
        }
        let cfg = config.with_mode(cell.mode);
        match catch_unwind(AssertUnwindSafe(|| run_task(task, policy, &cfg))) {
            Ok(record) => {
                on_done(&record);
                Ok(record)
            }
            Err(payload) => Err(failure(panic_message(payload))),
        }
    };
    match rayon::ThreadPoolBuilder::new().num_threads(config.concurrency.max(1)).build() {
        Ok(pool) => pool.install(|| cells.par_iter().map(run_one).collect()),
        Err(_) => cells.iter().map(run_one).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub records: Vec<RunRecord>,
    pub report: SuiteReport,
}

/// Runs every task under every policy and mode and aggregates metrics per
/// cell. Failed cells are listed in the report rather than aborting.
pub fn run_suite(
    tasks: &[Task],
    policies: &[PolicySpec],
    modes: &[HistoryMode],
    config: &RunConfig,
    endpoint: Option<&EndpointConfig>,
    options: &MetricOptions,
) -> Result<SuiteRun, String> {
    config.validate()?;
    let built = policies.iter().map(|p| p.build(endpoint)).collect::<Result<Vec<_>, _>>()?;
    let cells = all_cells(tasks.len(), built.len(), modes);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for result in run_cells(tasks, &built, &cells, config, &|_| {}) {
        match result {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let mut report = suite_report(&records, tasks, options);
    report.failures = failures;
    Ok(SuiteRun { records, report })
}
