//! Line-delimited task files and their sidecar manifests.
//!
//! A suite is a text file holding one self-contained JSON task per line plus
//! a `<suite>.manifest.json` describing how it was produced. Serialization is
//! canonical: struct field order is fixed and optional fields are omitted
//! when absent, so `serialize(parse(serialize(t))) == serialize(t)`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::task::{validate_task, Task};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct TaskParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for TaskParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum SuiteIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: TaskParseError,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
}

pub fn serialize_task(task: &Task) -> String {
    serde_json::to_string(task).expect("task serialization is infallible")
}

/// Parses and validates a single task record (reported as line 1).
pub fn parse_task(text: &str) -> Result<Task, TaskParseError> {
    parse_task_at(text, 1)
}

fn parse_task_at(text: &str, line: usize) -> Result<Task, TaskParseError> {
    let task: Task =
        serde_json::from_str(text).map_err(|e| TaskParseError { line, message: describe_serde_error(&e) })?;
    if let Some(first) = validate_task(&task).into_iter().next() {
        return Err(TaskParseError { line, message: first });
    }
    Ok(task)
}

/// Rewrites serde's messages into `missing field: name` form and drops the
/// trailing position (line numbers are reported per record instead).
fn describe_serde_error(e: &serde_json::Error) -> String {
    let raw = e.to_string();
    let msg = match raw.rfind(" at line ") {
        Some(pos) => &raw[..pos],
        None => raw.as_str(),
    };
    for prefix in ["missing field", "unknown field", "duplicate field"] {
        if let Some(rest) = msg.strip_prefix(prefix) {
            let name: String = rest.trim_start().trim_start_matches('`').chars().take_while(|&c| c != '`').collect();
            return format!("{prefix}: {name}");
        }
    }
    msg.to_string()
}

/// Parses a line-delimited suite. Blank lines are skipped; task ids must be
/// unique across the file.
pub fn parse_suite(text: &str) -> Result<Vec<Task>, TaskParseError> {
    let mut seen = HashSet::new();
    let mut tasks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task = parse_task_at(line, i + 1)?;
        if !seen.insert(task.id.clone()) {
            return Err(TaskParseError { line: i + 1, message: format!("duplicate task id: {}", task.id) });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn serialize_suite(tasks: &[Task]) -> String {
    let mut out = String::new();
    for t in tasks {
        out.push_str(&serialize_task(t));
        out.push('\n');
    }
    out
}

/// Sidecar describing a suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub name: String,
    pub seed: u64,
    pub generator_version: String,
    pub num_tasks: usize,
    pub config: serde_json::Value,
    pub config_hash: String,
}

pub fn manifest_path(suite: &Path) -> PathBuf {
    let mut name = suite.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    suite.with_file_name(name)
}

pub fn write_suite(path: &Path, tasks: &[Task], manifest: &SuiteManifest) -> Result<(), SuiteIoError> {
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| SuiteIoError::Io { path: p, source }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, serialize_suite(tasks)).map_err(io_err(path))?;
    let mpath = manifest_path(path);
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    fs::write(&mpath, body).map_err(io_err(&mpath))?;
    Ok(())
}

pub fn read_suite(path: &Path) -> Result<Vec<Task>, SuiteIoError> {
    let text = fs::read_to_string(path).map_err(|source| SuiteIoError::Io { path: path.to_path_buf(), source })?;
    parse_suite(&text).map_err(|source| SuiteIoError::Parse { path: path.to_path_buf(), source })
}

/// Reads the manifest next to `suite`, if one exists.
pub fn read_manifest(suite: &Path) -> Result<Option<SuiteManifest>, SuiteIoError> {
    let mpath = manifest_path(suite);
    match fs::read_to_string(&mpath) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| SuiteIoError::Manifest { path: mpath, message: e.to_string() }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(SuiteIoError::Io { path: mpath, source }),
    }
}

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("hashable value serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Action, ActionKind, Anchor, AnchorStatus, AnchorType, Intent, Step, UiState};

    fn minimal() -> Task {
        Task {
            id: "t0".into(),
            instruction: "close the app".into(),
            intent: Intent::ConfigureAuthorize,
            apps: vec!["Settings".into()],
            steps: vec![Step {
                state: UiState {
                    step_index: 0,
                    screenshot_ref: "sha:00".into(),
                    app: "Settings".into(),
                    elements: None,
                },
                action: Action::bare(ActionKind::Finish),
                reasoning: None,
                summary: None,
                gt_anchors: vec![Anchor {
                    id: "f".into(),
                    kind: AnchorType::Finish,
                    content: "done".into(),
                    description: String::new(),
                    evidence: vec![],
                    links: vec![],
                    status: AnchorStatus::Active,
                    predicate: None,
                }],
            }],
            final_anchor_id: "f".into(),
        }
    }

    #[test]
    fn minimal_round_trip() {
        let t = minimal();
        let line = serialize_task(&t);
        let back = parse_task(&line).unwrap();
        assert_eq!(back, t);
        assert_eq!(serialize_task(&back), line);
    }

    #[test]
    fn missing_instruction_named() {
        let mut v: serde_json::Value = serde_json::from_str(&serialize_task(&minimal())).unwrap();
        v.as_object_mut().unwrap().remove("instruction");
        let err = parse_task(&v.to_string()).unwrap_err();
        assert_eq!(err.message, "missing field: instruction");
        assert_eq!(err.line, 1);
    }

    #[test]
    fn unknown_intent_rejected() {
        let text = serialize_task(&minimal()).replace("configure_authorize", "gaming");
        let err = parse_task(&text).unwrap_err();
        assert!(err.message.contains("unknown variant"), "{}", err.message);
    }

    #[test]
    fn suite_reports_line_numbers() {
        let good = serialize_task(&minimal());
        let text = format!("{good}\n\n{{\"id\":\"x\"}}\n");
        let err = parse_suite(&text).unwrap_err();
        assert_eq!(err.line, 3);
        let dup = format!("{good}\n{good}\n");
        assert!(parse_suite(&dup).unwrap_err().message.contains("duplicate task id"));
    }

    #[test]
    fn manifest_sits_next_to_suite() {
        assert_eq!(manifest_path(Path::new("out/suite.jsonl")), PathBuf::from("out/suite.jsonl.manifest.json"));
    }
}
