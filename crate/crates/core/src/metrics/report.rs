use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{Intent, Task};
use crate::memory::HistoryMode;
use crate::runner::{CellFailure, RunRecord};

use super::predicates::{task_completion, AnchorCheck, TaskOutcome};
use super::{efficiency, step_scores, MetricOptions};

/// `[lo, lo + 9]` bucket containing a task of `len` steps.
pub fn length_bucket(len: usize) -> (usize, usize) {
    let lo = len / 10 * 10;
    (lo, lo + 9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDetail {
    pub task_id: String,
    pub intent: Intent,
    pub length: usize,
    pub ams: f64,
    pub outcome: TaskOutcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<AnchorCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentBreakdown {
    pub intent: Intent,
    pub tasks: usize,
    pub steps: usize,
    pub ams: f64,
    pub tcr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketBreakdown {
    pub label: String,
    pub lo: usize,
    pub hi: usize,
    pub tasks: usize,
    pub steps: usize,
    pub ams: f64,
    pub tcr: Option<f64>,
}

/// Metrics of one (policy, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub policy: String,
    pub mode: HistoryMode,
    pub tasks: usize,
    pub steps: usize,
    /// Pooled over steps, in percent.
    pub ams: f64,
    /// Over evaluable tasks, in percent; `None` when none is evaluable.
    pub tcr: Option<f64>,
    pub tcr_successes: usize,
    pub tcr_evaluable: usize,
    pub avg_tokens: f64,
    pub avg_context_tokens: f64,
    pub avg_time_seconds: f64,
    pub estimated_fraction: f64,
    pub decision_failures: usize,
    pub by_intent: Vec<IntentBreakdown>,
    pub by_bucket: Vec<BucketBreakdown>,
    pub task_details: Vec<TaskDetail>,
    /// Records that could not be scored, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unscored: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cells: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<CellFailure>,
}

#[derive(Default)]
struct Tally {
    tasks: usize,
    steps: usize,
    score: f64,
    evaluable: usize,
    successes: usize,
}

impl Tally {
    fn add(&mut self, scores: &[f64], outcome: &TaskOutcome) {
        self.tasks += 1;
        self.steps += scores.len();
        self.score += scores.iter().sum::<f64>();
        if outcome.is_evaluable() {
            self.evaluable += 1;
            self.successes += usize::from(*outcome == TaskOutcome::Success);
        }
    }

    fn ams(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            100.0 * self.score / self.steps as f64
        }
    }

    fn tcr(&self) -> Option<f64> {
        (self.evaluable > 0).then(|| 100.0 * self.successes as f64 / self.evaluable as f64)
    }
}

fn cell_report(
    policy: &str,
    mode: HistoryMode,
    records: &[&RunRecord],
    tasks: &HashMap<&str, &Task>,
    opts: &MetricOptions,
) -> MetricReport {
    let mut total = Tally::default();
    let mut by_intent: BTreeMap<Intent, Tally> = BTreeMap::new();
    let mut by_bucket: BTreeMap<usize, Tally> = BTreeMap::new();
    let mut details = Vec::new();
    let mut unscored = Vec::new();
    let mut scored: Vec<&RunRecord> = Vec::new();

    for &record in records {
        let Some(task) = tasks.get(record.task_id.as_str()) else {
            unscored.push(format!("{}: task not in suite", record.task_id));
            continue;
        };
        let scores = match step_scores(record, task, opts.match_options()) {
            Ok(s) => s,
            Err(e) => {
                unscored.push(e.to_string());
                continue;
            }
        };
        scored.push(record);
        let completion = task_completion(task, &record.predicted_actions(), opts.tcr_scope);
        total.add(&scores, &completion.outcome);
        by_intent.entry(task.intent).or_default().add(&scores, &completion.outcome);
        by_bucket.entry(length_bucket(task.len()).0).or_default().add(&scores, &completion.outcome);
        let task_ams = if scores.is_empty() { 0.0 } else { 100.0 * scores.iter().sum::<f64>() / scores.len() as f64 };
        details.push(TaskDetail {
            task_id: task.id.clone(),
            intent: task.intent,
            length: task.len(),
            ams: task_ams,
            outcome: completion.outcome,
            anchors: completion.anchors,
        });
    }

    let eff = efficiency(scored.iter().copied()).ok();
    MetricReport {
        policy: policy.to_string(),
        mode,
        tasks: total.tasks,
        steps: total.steps,
        ams: total.ams(),
        tcr: total.tcr(),
        tcr_successes: total.successes,
        tcr_evaluable: total.evaluable,
        avg_tokens: eff.map_or(0.0, |e| e.avg_tokens),
        avg_context_tokens: eff.map_or(0.0, |e| e.avg_context_tokens),
        avg_time_seconds: eff.map_or(0.0, |e| e.avg_time_seconds),
        estimated_fraction: eff.map_or(0.0, |e| e.estimated_fraction),
        decision_failures: scored.iter().flat_map(|r| &r.steps).filter(|s| s.decision_failure).count(),
        by_intent: by_intent
            .into_iter()
            .map(|(intent, t)| IntentBreakdown { intent, tasks: t.tasks, steps: t.steps, ams: t.ams(), tcr: t.tcr() })
            .collect(),
        by_bucket: by_bucket
            .into_iter()
            .map(|(lo, t)| BucketBreakdown {
                label: format!("{}-{}", lo, lo + 9),
                lo,
                hi: lo + 9,
                tasks: t.tasks,
                steps: t.steps,
                ams: t.ams(),
                tcr: t.tcr(),
            })
            .collect(),
        task_details: details,
        unscored,
    }
}

/// Groups records into (policy, mode) cells, sorted by policy then mode.
pub fn suite_report(records: &[RunRecord], tasks: &[Task], opts: &MetricOptions) -> SuiteReport {
    let index: HashMap<&str, &Task> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut cells: BTreeMap<(String, HistoryMode), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.policy.clone(), r.mode)).or_default().push(r);
    }
    SuiteReport {
        cells: cells.iter().map(|((policy, mode), recs)| cell_report(policy, *mode, recs, &index, opts)).collect(),
        failures: Vec::new(),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

/// Human-readable summary: one row per cell, then AMS/TCR per length bucket
/// and per intent.
pub fn render_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<8} {:>6} {:>8} {:>8} {:>11} {:>12}",
        "policy", "mode", "tasks", "AMS", "TCR", "Avg Tokens", "Avg Time(s)"
    );
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{:<24} {:<8} {:>6} {:>8.2} {:>8} {:>11.1} {:>12.4}",
            c.policy,
            c.mode.as_str(),
            c.tasks,
            c.ams,
            pct(c.tcr),
            c.avg_tokens,
            c.avg_time_seconds
        );
    }
    if report.cells.iter().any(|c| !c.by_bucket.is_empty()) {
        let _ = writeln!(out, "\nby length bucket (AMS / TCR)");
        for c in &report.cells {
            let cols: Vec<String> =
                c.by_bucket.iter().map(|b| format!("{} {:.2}/{}", b.label, b.ams, pct(b.tcr))).collect();
            let _ = writeln!(out, "{:<24} {:<8} {}", c.policy, c.mode.as_str(), cols.join("  "));
        }
        let _ = writeln!(out, "\nby intent (AMS / TCR)");
        for c in &report.cells {
            let cols: Vec<String> =
                c.by_intent.iter().map(|b| format!("{} {:.2}/{}", b.intent.as_str(), b.ams, pct(b.tcr))).collect();
            let _ = writeln!(out, "{:<24} {:<8} {}", c.policy, c.mode.as_str(), cols.join("  "));
        }
    }
    let unscored: usize = report.cells.iter().map(|c| c.unscored.len()).sum();
    if unscored > 0 || !report.failures.is_empty() {
        let _ = writeln!(out, "\n{} failed cells, {} unscored records", report.failures.len(), unscored);
    }
    out
}

/// One row per 10-step bucket present in any cell; AMS and TCR columns per
/// cell. Absent values are left empty.
pub fn render_bucket_csv(report: &SuiteReport) -> String {
    let mut buckets: BTreeMap<usize, usize> = BTreeMap::new();
    for c in &report.cells {
        for b in &c.by_bucket {
            let tasks = buckets.entry(b.lo).or_default();
            *tasks = (*tasks).max(b.tasks);
        }
    }
    let mut out = String::from("bucket,tasks");
    for c in &report.cells {
        let _ = write!(out, ",{0}/{1} ams,{0}/{1} tcr", c.policy, c.mode.as_str());
    }
    out.push('\n');
    for (lo, tasks) in buckets {
        let _ = write!(out, "{}-{},{}", lo, lo + 9, tasks);
        for c in &report.cells {
            match c.by_bucket.iter().find(|b| b.lo == lo) {
                Some(b) => {
                    let _ = write!(out, ",{:.4},{}", b.ams, b.tcr.map_or(String::new(), |t| format!("{t:.4}")));
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}
