//! Actions, UI states, trajectories, tasks, anchors and causal links.
//!
//! All types are plain values: immutable after construction and safe to share
//! read-only between workers.

mod action;
mod anchor;
pub mod io;
mod task;

pub use action::{
    swipe_direction, validate_action, Action, ActionKind, Direction, DistanceHint, GeometryError, COORD_MAX,
};
pub use anchor::{
    contains_token, normalize_content, Anchor, AnchorPredicate, AnchorStatus, AnchorType, CausalLink, EvidenceRef,
    Relation, StepRange,
};
pub use io::{parse_suite, parse_task, serialize_suite, serialize_task, SuiteManifest, TaskParseError};
pub use task::{validate_task, Bbox, Intent, Step, Task, UiElement, UiState};
