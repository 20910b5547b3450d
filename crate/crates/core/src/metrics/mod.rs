//! Action matching (AMS), text similarity (ANLS), anchor-predicate task
//! completion (TCR) and per-step efficiency, aggregated per
//! (policy, mode) cell with intent and length-bucket breakdowns.

mod matching;
mod predicates;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Task;
use crate::runner::RunRecord;

pub use matching::{action_match, anls, levenshtein, MatchOptions, TAP_RADIUS};
pub use predicates::{
    check_anchor, gating_anchors, task_completion, value_contains, value_equals, AnchorCheck, PredicateError,
    PredicateEvaluator, TaskCompletion, TaskOutcome, TcrScope,
};
pub use report::{
    length_bucket, render_bucket_csv, render_table, suite_report, BucketBreakdown, IntentBreakdown, MetricReport,
    SuiteReport, TaskDetail,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("record for {task_id} has {record} steps but the task has {task}")]
    LengthMismatch { task_id: String, record: usize, task: usize },
    #[error("no steps")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_threshold: Option<f64>,
    #[serde(default)]
    pub tcr_scope: TcrScope,
}

impl MetricOptions {
    pub fn match_options(&self) -> MatchOptions {
        MatchOptions { text_threshold: self.text_threshold }
    }
}

/// Per-step action-match scores of `record` against `task`.
pub fn step_scores(record: &RunRecord, task: &Task, opts: MatchOptions) -> Result<Vec<f64>, MetricError> {
    if record.steps.len() != task.len() {
        return Err(MetricError::LengthMismatch {
            task_id: task.id.clone(),
            record: record.steps.len(),
            task: task.len(),
        });
    }
    Ok(record
        .steps
        .iter()
        .zip(&task.steps)
        .map(|(entry, gt)| action_match(&entry.predicted_action, &gt.action, gt.target_element(), opts))
        .collect())
}

/// 100 × mean per-step action match for one record.
pub fn ams(record: &RunRecord, task: &Task, opts: MatchOptions) -> Result<f64, MetricError> {
    let scores = step_scores(record, task, opts)?;
    if scores.is_empty() {
        return Err(MetricError::NoSteps);
    }
    Ok(100.0 * scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean per-step tokens and time over every step of every record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub steps: usize,
    pub avg_tokens: f64,
    pub avg_context_tokens: f64,
    pub avg_time_seconds: f64,
    /// Share of steps whose token counts came from the estimator.
    pub estimated_fraction: f64,
}

pub fn efficiency<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Result<Efficiency, MetricError> {
    let mut steps = 0usize;
    let mut tokens = 0f64;
    let mut context = 0f64;
    let mut time = 0f64;
    let mut estimated = 0usize;
    for entry in records.into_iter().flat_map(|r| &r.steps) {
        steps += 1;
        tokens += entry.usage.total_tokens() as f64;
        context += entry.context_token_estimate as f64;
        time += entry.wall_time_seconds;
        estimated += usize::from(entry.usage.estimated);
    }
    if steps == 0 {
        return Err(MetricError::NoSteps);
    }
    let n = steps as f64;
    Ok(Efficiency {
        steps,
        avg_tokens: tokens / n,
        avg_context_tokens: context / n,
        avg_time_seconds: time / n,
        estimated_fraction: estimated as f64 / n,
    })
}

/// Pooled TCR over record/task pairs: 100 × successes / evaluable tasks.
/// `None` when no task is evaluable.
pub fn tcr<'a>(pairs: impl IntoIterator<Item = (&'a RunRecord, &'a Task)>, scope: TcrScope) -> Option<f64> {
    let mut evaluable = 0usize;
    let mut successes = 0usize;
    for (record, task) in pairs {
        let c = task_completion(task, &record.predicted_actions(), scope);
        if c.outcome.is_evaluable() {
            evaluable += 1;
            successes += usize::from(c.outcome == TaskOutcome::Success);
        }
    }
    (evaluable > 0).then(|| 100.0 * successes as f64 / evaluable as f64)
}
