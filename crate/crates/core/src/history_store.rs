//! Append-only run log: one JSON object per line after a version header.
//!
//! ```text
//! tempfair-log v1
//! {"timestep":0,"domain":"cap","formulation":{...},"utilities":{...},...}
//! ```
//!
//! Appends are validated against the last record (consecutive timestep,
//! identical entity list) before anything is written, and writers hold an
//! exclusive advisory lock on the file while appending.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fairness::{History, MetricKind, UtilityVector};
use crate::objective::{Diagnostics, FormulationKind, FormulationSpec, ScoredPlan};

pub const LOG_HEADER: &str = "tempfair-log v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulationSnapshot {
    pub kind: FormulationKind,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub horizon: usize,
    pub metric: MetricKind,
}

impl From<&FormulationSpec> for FormulationSnapshot {
    fn from(s: &FormulationSpec) -> Self {
        Self {
            kind: s.kind,
            beta: s.beta,
            gamma: s.disc.gamma,
            tau: s.disc.tau,
            horizon: s.horizon,
            metric: s.metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub timestep: u64,
    pub domain: String,
    pub formulation: FormulationSnapshot,
    pub utilities: UtilityVector,
    pub quality_term: f64,
    pub fairness_term: f64,
    pub total: f64,
    pub diagnostics: Diagnostics,
}

impl RunRecord {
    /// Record of the committed (first) step of a scored plan.
    pub fn from_plan(timestep: u64, domain: &str, spec: &FormulationSpec, plan: &ScoredPlan) -> Self {
        Self {
            timestep,
            domain: domain.to_string(),
            formulation: spec.into(),
            utilities: plan.per_step_utilities[0].clone(),
            quality_term: plan.quality_term,
            fairness_term: plan.fairness_term,
            total: plan.total,
            diagnostics: plan.diagnostics.clone(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialise")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| CoreError::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }
}

/// A log file on disk. Reading never locks; appending takes an exclusive lock.
#[derive(Debug, Clone)]
pub struct RunLog {
    path: PathBuf,
}

impl RunLog {
    /// Opens `path`, creating an empty log (header only) if it does not exist.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut f = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        f.lock()?;
        if f.metadata()?.len() == 0 {
            writeln!(f, "{LOG_HEADER}")?;
            f.sync_data()?;
        }
        f.unlock()?;
        let log = Self { path };
        log.records()?;
        Ok(log)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> Result<Vec<RunRecord>> {
        parse_log(BufReader::new(File::open(&self.path)?))
    }

    /// Appends `record` if it continues the log; otherwise returns
    /// [`CoreError::Rejected`] and leaves the file untouched.
    pub fn append(&self, record: &RunRecord) -> Result<()> {
        let mut f = OpenOptions::new().read(true).append(true).open(&self.path)?;
        f.lock()?;
        let mut text = String::new();
        f.seek(SeekFrom::Start(0))?;
        f.read_to_string(&mut text)?;
        let existing = parse_log(text.as_bytes())?;
        check_append(&existing, record)?;
        let mut line = record.to_line();
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        f.unlock()?;
        Ok(())
    }

    pub fn load_history(&self, window: Option<usize>) -> Result<History> {
        load_history(&self.records()?, window)
    }

    pub fn cumulative(&self) -> Result<Vec<UtilityVector>> {
        cumulative(&self.records()?)
    }
}

fn parse_log(reader: impl BufRead) -> Result<Vec<RunRecord>> {
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim_end() == LOG_HEADER => {}
        Some((_, Ok(h))) => {
            return Err(CoreError::Parse {
                line: 1,
                msg: format!("expected header '{LOG_HEADER}', found '{h}'"),
            })
        }
        Some((_, Err(e))) => return Err(e.into()),
        None => return Ok(Vec::new()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = RunRecord::from_line(&line).map_err(|e| match e {
            CoreError::Parse { msg, .. } => CoreError::Parse { line: i + 1, msg },
            other => other,
        })?;
        check_append(&out, &rec).map_err(|e| CoreError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Validates that `record` may follow `existing`.
pub fn check_append(existing: &[RunRecord], record: &RunRecord) -> Result<()> {
    match existing.last() {
        None if record.timestep != 0 => Err(CoreError::Rejected(format!(
            "first record must have timestep 0, got {}",
            record.timestep
        ))),
        Some(last) if record.timestep != last.timestep + 1 => Err(CoreError::Rejected(format!(
            "timestep {} does not follow {}",
            record.timestep, last.timestep
        ))),
        Some(last) if last.utilities.entities != record.utilities.entities => Err(CoreError::Rejected(format!(
            "entities {:?} differ from the log's {:?}",
            record.utilities.entities, last.utilities.entities
        ))),
        _ => Ok(()),
    }
}

/// The last `window` records' utilities, oldest first (all when `None`).
pub fn load_history(records: &[RunRecord], window: Option<usize>) -> Result<History> {
    let skip = window.map_or(0, |w| records.len().saturating_sub(w));
    History::new(records[skip..].iter().map(|r| r.utilities.clone()).collect())
}

/// Running per-entity sums after each record.
pub fn cumulative(records: &[RunRecord]) -> Result<Vec<UtilityVector>> {
    let mut out: Vec<UtilityVector> = Vec::with_capacity(records.len());
    for r in records {
        let values = match out.last() {
            None => r.utilities.values.clone(),
            Some(prev) => prev.values.iter().zip(&r.utilities.values).map(|(a, b)| a + b).collect(),
        };
        out.push(UtilityVector::new(r.utilities.entities.clone(), values)?);
    }
    Ok(out)
}
