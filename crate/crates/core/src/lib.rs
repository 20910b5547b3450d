//! Anchored state memory for long-horizon GUI agents, with an offline
//! teacher-forced evaluation harness and a synthetic task generator.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: actions, trajectories, tasks and anchors, plus the task file format.
//! - [`memory`]: raw-trace, summary and anchor-bank history representations.
//! - [`policy`]: prompt construction, structured-output parsing, the HTTP
//!   chat policy and the scripted oracle/forgetful policies.
//! - [`runner`]: the retrieve / act / update loop over recorded trajectories.
//! - [`metrics`]: action matching, ANLS, anchor predicates, TCR and efficiency.
//! - [`synth`]: seeded generator of dependency-chained tasks.

pub mod domain;
pub mod memory;
pub mod metrics;
pub mod policy;
pub mod runner;
pub mod synth;

pub use domain::{Action, ActionKind, Anchor, AnchorType, Intent, Task};
pub use memory::{HistoryMode, MemoryBank, RetrievalStrategy};
pub use metrics::MetricReport;
pub use policy::{Policy, PolicySpec};
pub use runner::{run_suite, run_task, RunConfig, RunRecord};
