//! Run directory layout:
//!
//! ```text
//! <out>/manifest.json           run manifest (config hash, versions, timestamps, cell counts)
//! <out>/effective_config.toml   merged configuration; rerunnable with --config
//! <out>/failures.json           cells that could not produce a record
//! <out>/records/<task>__<policy>__<mode>.json
//! <out>/report.json, report.txt, buckets.csv   written by eval
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use asmb_core::domain::SuiteManifest;
use asmb_core::memory::HistoryMode;
use asmb_core::runner::{CellFailure, RunConfig, RunRecord};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
pub const FAILURES: &str = "failures.json";
pub const RECORDS: &str = "records";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellCounts {
    pub total: usize,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub template_version: String,
    pub suite: PathBuf,
    pub suite_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite_manifest: Option<SuiteManifest>,
    pub policies: Vec<String>,
    pub modes: Vec<HistoryMode>,
    pub config_hash: String,
    pub run_config: RunConfig,
    pub effective_config: serde_json::Value,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub cells: CellCounts,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

pub fn record_file(task_id: &str, policy: &str, mode: HistoryMode) -> String {
    format!("{}__{}__{}.json", file_safe(task_id), file_safe(policy), mode)
}

/// Writes via a temporary sibling so readers never see half a file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn record_path(&self, task_id: &str, policy: &str, mode: HistoryMode) -> PathBuf {
        self.root.join(RECORDS).join(record_file(task_id, policy, mode))
    }

    pub fn manifest(&self) -> Result<Option<RunManifest>, CliError> {
        let path = self.root.join(MANIFEST);
        match fs::read_to_string(&path) {
            Ok(text) => {
                serde_json::from_str(&text).map(Some).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }

    pub fn write_record(&self, record: &RunRecord) -> Result<(), CliError> {
        let path = self.record_path(&record.task_id, &record.policy, record.mode);
        write_atomic(&path, &(serde_json::to_string(record).expect("record serializes") + "\n"))
    }

    /// Whether a finished record for this cell and config already exists.
    pub fn is_complete(&self, task_id: &str, policy: &str, mode: HistoryMode, config_hash: &str) -> bool {
        let Ok(text) = fs::read_to_string(self.record_path(task_id, policy, mode)) else { return false };
        serde_json::from_str::<RunRecord>(&text)
            .is_ok_and(|r| r.task_id == task_id && r.policy == policy && r.mode == mode && r.config_hash == config_hash)
    }

    /// Every readable record; unreadable files are returned as messages.
    pub fn records(&self) -> Result<(Vec<RunRecord>, Vec<String>), CliError> {
        let dir = self.root.join(RECORDS);
        let mut entries: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(CliError::io(&dir, e)),
        };
        entries.sort();
        let mut records = Vec::with_capacity(entries.len());
        let mut problems = Vec::new();
        for path in entries {
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            match serde_json::from_str::<RunRecord>(&text) {
                Ok(r) => records.push(r),
                Err(e) => problems.push(format!("{}: {e}", path.display())),
            }
        }
        Ok((records, problems))
    }

    pub fn write_failures(&self, failures: &[CellFailure]) -> Result<(), CliError> {
        let path = self.root.join(FAILURES);
        if failures.is_empty() {
            match fs::remove_file(&path) {
                Ok(()) => Ok(()),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
                Err(e) => Err(CliError::io(&path, e)),
            }
        } else {
            write_json(&path, &failures)
        }
    }
}
