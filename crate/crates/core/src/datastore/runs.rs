use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::SCHEMA_VERSION;
use crate::decision::Recommendation;
use crate::error::{Error, Result};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Accept,
    Override,
}

/// Set one cell of the recommended schedule. `reactor` is the zero-based
/// row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEdit {
    pub reactor: usize,
    pub step: usize,
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorAction {
    pub kind: ActionKind,
    #[serde(default)]
    pub schedule_edits: Vec<ScheduleEdit>,
    pub actor: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub created_at: DateTime<Utc>,
    pub recommendation: Recommendation,
    pub operator_action: Option<OperatorAction>,
}

impl RunRecord {
    /// The recommended schedule with any operator edits applied.
    pub fn active_schedule(&self) -> Schedule {
        let mut schedule = self.recommendation.schedule.clone();
        if let Some(action) = &self.operator_action {
            for e in &action.schedule_edits {
                schedule.x[e.reactor][e.step] = e.on;
            }
        }
        schedule
    }
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    schema_version: u32,
    run: T,
}

/// Append-only run log.
///
/// Backed by a JSON-lines file when opened from a path. Recording an
/// operator action appends a second line for the same run id; on reload
/// the later line supersedes the earlier one. Lines are never rewritten.
#[derive(Debug, Default)]
pub struct RunStore {
    path: Option<PathBuf>,
    runs: Vec<RunRecord>,
}

impl RunStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self> {
        let mut store = Self {
            path: Some(path.to_path_buf()),
            runs: Vec::new(),
        };
        if !path.exists() {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            File::create(path)?;
            return Ok(store);
        }
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let version: Line<serde_json::Value> =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("run log line {}: {e}", i + 1)))?;
            if version.schema_version != SCHEMA_VERSION {
                return Err(Error::Incompatible {
                    found: version.schema_version,
                    supported: SCHEMA_VERSION,
                });
            }
            let record: RunRecord = serde_json::from_value(version.run)
                .map_err(|e| Error::Parse(format!("run log line {}: {e}", i + 1)))?;
            match store.runs.last() {
                Some(last) if record.run_id <= last.run_id => {
                    let slot = store
                        .runs
                        .iter_mut()
                        .find(|r| r.run_id == record.run_id)
                        .ok_or_else(|| Error::Parse(format!("run log line {}: id {} out of order", i + 1, record.run_id)))?;
                    *slot = record;
                }
                _ => store.runs.push(record),
            }
        }
        Ok(store)
    }

    fn write_line(&self, record: &RunRecord) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut text = serde_json::to_string(&Line {
            schema_version: SCHEMA_VERSION,
            run: record,
        })?;
        text.push('\n');
        OpenOptions::new().append(true).open(path)?.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn append(&mut self, recommendation: Recommendation, created_at: DateTime<Utc>) -> Result<RunRecord> {
        let record = RunRecord {
            run_id: self.runs.last().map_or(1, |r| r.run_id + 1),
            created_at,
            recommendation,
            operator_action: None,
        };
        self.write_line(&record)?;
        self.runs.push(record.clone());
        Ok(record)
    }

    /// Attach the one permitted operator action to run `run_id`.
    pub fn record_action(&mut self, run_id: u64, action: OperatorAction) -> Result<RunRecord> {
        let idx = self
            .runs
            .iter()
            .position(|r| r.run_id == run_id)
            .ok_or_else(|| Error::NotFound(format!("run {run_id}")))?;
        let run = &self.runs[idx];
        if run.operator_action.is_some() {
            return Err(Error::Conflict(format!("run {run_id} already has an operator action")));
        }
        if action.kind == ActionKind::Accept && !action.schedule_edits.is_empty() {
            return Err(Error::Config("an accept action cannot carry schedule edits".into()));
        }
        let schedule = &run.recommendation.schedule;
        for e in &action.schedule_edits {
            if e.reactor >= schedule.n_reactors() || e.step >= schedule.horizon() {
                return Err(Error::Dimension(format!(
                    "edit ({}, {}) outside a {}x{} schedule",
                    e.reactor,
                    e.step,
                    schedule.n_reactors(),
                    schedule.horizon()
                )));
            }
        }
        let mut updated = run.clone();
        updated.operator_action = Some(action);
        self.write_line(&updated)?;
        self.runs[idx] = updated.clone();
        Ok(updated)
    }

    pub fn get(&self, run_id: u64) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.run_id == run_id)
    }

    /// Newest first.
    pub fn list(&self, limit: usize, offset: usize) -> Vec<RunRecord> {
        self.runs.iter().rev().skip(offset).take(limit).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.run_id).collect()
    }
}
