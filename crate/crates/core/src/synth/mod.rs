//! Seeded generator of long-horizon tasks with planted cross-app value
//! dependencies, ground-truth anchors and checkable predicates.
//!
//! Each task is generated from its own derived seed, so a suite is
//! reproducible task by task and can be generated in parallel.

mod check;
mod generate;
mod vocab;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::io::{content_hash, write_suite, SuiteIoError};
use crate::domain::{Intent, SuiteManifest, Task};

pub use check::self_check;
pub use generate::generate_task;
pub use vocab::{Slot, APPS, ENTITIES, SLOTS};

pub const GENERATOR_VERSION: &str = "asmb-synth/1";

/// Inclusive `[min, max]`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Span { min, max }
    }

    pub fn contains(&self, v: usize) -> bool {
        self.min <= v && v <= self.max
    }
}

impl From<[usize; 2]> for Span {
    fn from([min, max]: [usize; 2]) -> Self {
        Span { min, max }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.min, s.max]
    }
}

/// How dependency gaps are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSchedule {
    /// Every dependency draws its gap from `gap`; the count comes from
    /// `dependencies`.
    #[default]
    Fixed,
    /// A task of length `L` carries `L / 10` dependencies with gaps
    /// 5, 8, 11, ... so longer tasks hold more and longer-range values.
    /// `gap` and `dependencies` are ignored.
    LengthScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_tasks: usize,
    /// Steps per task.
    pub length: Span,
    /// Steps between observing a value and reusing it.
    pub gap: Span,
    /// Extraction/reuse pairs per task.
    pub dependencies: Span,
    /// Ground-truth anchors per task. Required anchors are always emitted;
    /// optional ones (exception, subgoals) fill up to a target drawn here.
    pub anchors: Span,
    pub exception_probability: f64,
    /// Chance that the step before a reuse mentions the pending value in its
    /// summary.
    pub summary_carry_probability: f64,
    /// Number of apps tasks may draw from.
    pub app_pool: usize,
    /// Relative weight per intent; empty means uniform.
    pub intent_mix: BTreeMap<Intent, f64>,
    pub gap_schedule: GapSchedule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            num_tasks: 100,
            length: Span::new(20, 60),
            gap: Span::new(10, 15),
            dependencies: Span::new(1, 3),
            anchors: Span::new(6, 12),
            exception_probability: 0.5,
            summary_carry_probability: 0.5,
            app_pool: 8,
            intent_mix: BTreeMap::new(),
            gap_schedule: GapSchedule::Fixed,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("cannot lay out task {task}: {reason}")]
    Infeasible { task: String, reason: String },
    #[error(transparent)]
    Io(#[from] SuiteIoError),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        for (name, span) in
            [("length", self.length), ("gap", self.gap), ("dependencies", self.dependencies), ("anchors", self.anchors)]
        {
            if span.min > span.max {
                return bad(format!("{name} range [{}, {}] is empty", span.min, span.max));
            }
        }
        if self.num_tasks == 0 {
            return bad("num_tasks must be at least 1".into());
        }
        match self.gap_schedule {
            GapSchedule::Fixed => {
                if self.length.min <= self.gap.max + 4 {
                    return bad(format!(
                        "min length ({}) must exceed max dependency gap ({}) + 4",
                        self.length.min, self.gap.max
                    ));
                }
                if self.gap.min < 2 {
                    return bad("min dependency gap must be at least 2 (an app switch sits in between)".into());
                }
                if self.dependencies.min == 0 {
                    return bad("every task needs at least one dependency".into());
                }
                if self.dependencies.max > SLOTS.len() {
                    return bad(format!("at most {} dependencies per task", SLOTS.len()));
                }
                if self.length.min < 3 * self.dependencies.max + 2 {
                    return bad(format!(
                        "min length ({}) cannot hold {} dependencies (needs {} steps)",
                        self.length.min,
                        self.dependencies.max,
                        3 * self.dependencies.max + 2
                    ));
                }
            }
            GapSchedule::LengthScaled => {
                if self.length.min < 10 {
                    return bad("length_scaled schedule needs min length of at least 10".into());
                }
                if self.length.max / 10 > SLOTS.len() {
                    return bad(format!("length_scaled schedule supports at most {} steps", SLOTS.len() * 10 + 9));
                }
            }
        }
        for (name, p) in [
            ("exception_probability", self.exception_probability),
            ("summary_carry_probability", self.summary_carry_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.app_pool < 3 || self.app_pool > APPS.len() {
            return bad(format!("app_pool must lie in [3, {}], got {}", APPS.len(), self.app_pool));
        }
        if self.intent_mix.values().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("intent weights must be finite and non-negative".into());
        }
        if !self.intent_mix.is_empty() && self.intent_mix.values().sum::<f64>() <= 0.0 {
            return bad("intent weights must not all be zero".into());
        }
        Ok(())
    }

    /// Gap bounds a generated task must respect, when the schedule has
    /// fixed ones.
    pub fn gap_bounds(&self) -> Option<Span> {
        match self.gap_schedule {
            GapSchedule::Fixed => Some(self.gap),
            GapSchedule::LengthScaled => None,
        }
    }

    fn weights(&self) -> Vec<(Intent, f64)> {
        if self.intent_mix.is_empty() {
            Intent::ALL.iter().map(|&i| (i, 1.0)).collect()
        } else {
            self.intent_mix.iter().map(|(&i, &w)| (i, w)).collect()
        }
    }
}

/// SplitMix64 finalizer; spreads consecutive seeds over the whole range.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of task `index` in the suite seeded with `seed`.
pub fn task_seed(seed: u64, index: usize) -> u64 {
    mix_seed(seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Largest-remainder allocation of `n` labels by weight. Ties in the
/// remainder go to the earlier intent.
pub fn allocate_intents(weights: &[(Intent, f64)], n: usize) -> Vec<(Intent, usize)> {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut counts: Vec<(Intent, usize, f64)> = weights
        .iter()
        .map(|&(i, w)| {
            let quota = n as f64 * w / total;
            (i, quota.floor() as usize, quota - quota.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k].1 += 1;
    }
    counts.into_iter().map(|(i, c, _)| (i, c)).collect()
}

/// Suite-level intent labels, one per task, shuffled with the suite seed.
fn intent_labels(config: &SynthConfig) -> Vec<Intent> {
    use rand::seq::SliceRandom;
    let mut labels: Vec<Intent> = allocate_intents(&config.weights(), config.num_tasks)
        .into_iter()
        .flat_map(|(i, c)| std::iter::repeat_n(i, c))
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(config.seed)));
    labels
}

pub fn task_id(seed: u64, index: usize) -> String {
    format!("syn-{seed}-{index:04}")
}

/// Generates the whole suite in memory, in task order.
pub fn generate_suite(config: &SynthConfig) -> Result<Vec<Task>, SynthError> {
    config.validate()?;
    intent_labels(config)
        .into_par_iter()
        .enumerate()
        .map(|(i, intent)| generate::generate_with(task_id(config.seed, i), task_seed(config.seed, i), intent, config))
        .collect()
}

pub fn suite_manifest(name: &str, config: &SynthConfig) -> SuiteManifest {
    SuiteManifest {
        name: name.to_string(),
        seed: config.seed,
        generator_version: GENERATOR_VERSION.to_string(),
        num_tasks: config.num_tasks,
        config: serde_json::to_value(config).expect("config serializes"),
        config_hash: content_hash(config),
    }
}

/// Generates and writes a suite plus its manifest. The suite name is the
/// file stem.
pub fn write_generated_suite(path: &Path, config: &SynthConfig) -> Result<(Vec<Task>, SuiteManifest), SynthError> {
    let tasks = generate_suite(config)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "suite".into());
    let manifest = suite_manifest(&name, config);
    write_suite(path, &tasks, &manifest)?;
    Ok((tasks, manifest))
}
