//! Session state folded from per-session logs in one data directory.

use chrono::{SecondsFormat, Utc};
use langlie_core::estimation::{check_separation, fit_mle};
use langlie_core::record::{path_rows, SessionRecord, TrialRecord, RECORD_VERSION};
use langlie_core::{Bracket, Family, FitResult, LanglieState, Outcome, TrialHistory};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{Result, ServiceError};
use crate::log::{read_log, LogEntry, LogWriter};

const LOG_EXTENSION: &str = "jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Closed,
}

/// Full state of one session as served to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub created_at: String,
    pub a: f64,
    pub b: f64,
    pub family: Family,
    pub status: Status,
    /// Stimulus for the next trial; `None` once closed.
    pub next_stimulus: Option<f64>,
    /// Index the next recorded trial will receive (history length + 1).
    pub next_index: usize,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub created_at: String,
    pub a: f64,
    pub b: f64,
    pub family: Family,
    pub status: Status,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRequest {
    pub x: f64,
    pub y: Outcome,
    #[serde(default)]
    pub note: Option<String>,
    pub expected_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotEstimableReason {
    InsufficientData,
    Separation,
    NonConvergence,
}

/// Running estimate, or the reason there is none. Estimation failures are
/// values here, not errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Estimate {
    Estimated {
        fit: FitResult,
    },
    NotEstimable {
        reason: NotEstimableReason,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(ServiceError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone)]
struct SessionState {
    id: String,
    created_at: String,
    bracket: Bracket,
    family: Family,
    closed: bool,
    trials: Vec<TrialRecord>,
    design: LanglieState,
}

impl SessionState {
    fn from_created(entry: &LogEntry) -> std::result::Result<Self, String> {
        let LogEntry::Created {
            id,
            created_at,
            a,
            b,
            family,
        } = entry
        else {
            return Err("log does not start with a `created` entry".into());
        };
        let bracket = Bracket::new(*a, *b).map_err(|e| e.to_string())?;
        Ok(Self {
            id: id.clone(),
            created_at: created_at.clone(),
            bracket,
            family: *family,
            closed: false,
            trials: Vec::new(),
            design: LanglieState::new(bracket),
        })
    }

    fn next_index(&self) -> usize {
        self.trials.len() + 1
    }

    /// Applies one entry, enforcing the same rules as the live operations so
    /// that the replay invariant holds after every fold step.
    fn apply(&mut self, entry: LogEntry) -> std::result::Result<(), String> {
        match entry {
            LogEntry::Created { .. } => Err("duplicate `created` entry".into()),
            _ if self.closed => Err("entry after `closed`".into()),
            LogEntry::Recorded {
                index,
                x,
                y,
                timestamp,
                note,
            } => {
                if index != self.next_index() {
                    return Err(format!("trial index {index}, expected {}", self.next_index()));
                }
                let want = self.design.next_input();
                if x.to_bits() != want.to_bits() {
                    return Err(format!("trial {index} at x = {x}, design gives {want}"));
                }
                self.design.record(y);
                self.trials.push(TrialRecord {
                    index,
                    x,
                    y,
                    timestamp,
                    note,
                });
                Ok(())
            }
            LogEntry::Undone { index, .. } => {
                if self.trials.is_empty() || index != self.trials.len() {
                    return Err(format!("undo of trial {index} with {} trials", self.trials.len()));
                }
                self.trials.pop();
                let mut design = LanglieState::with_capacity(self.bracket, self.trials.len());
                for t in &self.trials {
                    design.record(t.y);
                }
                self.design = design;
                Ok(())
            }
            LogEntry::Closed { .. } => {
                self.closed = true;
                Ok(())
            }
        }
    }

    fn status(&self) -> Status {
        if self.closed {
            Status::Closed
        } else {
            Status::Active
        }
    }

    fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            created_at: self.created_at.clone(),
            a: self.bracket.a,
            b: self.bracket.b,
            family: self.family,
            status: self.status(),
            next_stimulus: (!self.closed).then(|| self.design.next_input()),
            next_index: self.next_index(),
            trials: self.trials.clone(),
        }
    }

    fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            created_at: self.created_at.clone(),
            a: self.bracket.a,
            b: self.bracket.b,
            family: self.family,
            status: self.status(),
            n_trials: self.trials.len(),
        }
    }

    fn history(&self) -> TrialHistory {
        TrialHistory::from_parts(
            Some(self.bracket),
            self.trials.iter().map(|t| t.x).collect(),
            self.trials.iter().map(|t| t.y).collect(),
        )
        .expect("folded history is valid")
    }

    fn record(&self) -> SessionRecord {
        SessionRecord {
            version: RECORD_VERSION,
            a: self.bracket.a,
            b: self.bracket.b,
            family: self.family,
            trials: self.trials.clone(),
        }
    }
}

#[derive(Debug)]
struct Slot {
    state: SessionState,
    log: LogWriter,
}

impl Slot {
    /// Validates `entry` against the current state, makes it durable, then
    /// applies it in memory.
    fn commit(&mut self, entry: LogEntry) -> Result<()> {
        let mut next = self.state.clone();
        next.apply(entry.clone()).map_err(ServiceError::Validation)?;
        self.log.append(&entry)?;
        self.state = next;
        Ok(())
    }

    fn require_active(&self) -> Result<()> {
        if self.state.closed {
            return Err(ServiceError::Closed(self.state.id.clone()));
        }
        Ok(())
    }

    fn require_index(&self, expected_index: Option<usize>) -> Result<()> {
        match expected_index {
            Some(k) if k != self.state.next_index() => Err(self.stale(format!(
                "client expected trial {k}, session is at trial {}",
                self.state.next_index()
            ))),
            _ => Ok(()),
        }
    }

    fn stale(&self, message: String) -> ServiceError {
        ServiceError::StaleStimulus {
            message,
            expected_index: self.state.next_index(),
            expected_x: (!self.state.closed).then(|| self.state.design.next_input()),
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// All sessions under one data directory. Mutations of a session are
/// serialised by its own lock; different sessions proceed in parallel.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
}

impl SessionStore {
    /// Opens (creating if needed) `dir` and recovers every session log in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
        let probe = dir.join(format!(".probe-{}", uuid::Uuid::new_v4().simple()));
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| ServiceError::io(&dir, e))?;

        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| ServiceError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == LOG_EXTENSION))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        for path in paths {
            let slot = load_slot(&path)?;
            sessions.insert(slot.state.id.clone(), Arc::new(Mutex::new(slot)));
        }
        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn with_slot<T>(&self, id: &str, f: impl FnOnce(&mut Slot) -> Result<T>) -> Result<T> {
        let slot = self.slot(id)?;
        let mut guard = slot.lock().expect("session lock");
        f(&mut guard)
    }

    fn insert_new(&self, a: f64, b: f64, family: Family, created_at: String) -> Result<Slot> {
        let bracket = Bracket::new(a, b)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let entry = LogEntry::Created {
            id: id.clone(),
            created_at,
            a: bracket.a,
            b: bracket.b,
            family,
        };
        let state = SessionState::from_created(&entry).map_err(ServiceError::Validation)?;
        let path = self.dir.join(format!("{id}.{LOG_EXTENSION}"));
        let log = LogWriter::create(&path, &entry)?;
        Ok(Slot { state, log })
    }

    fn register(&self, slot: Slot) -> SessionView {
        let view = slot.state.view();
        self.sessions
            .write()
            .expect("session map lock")
            .insert(view.id.clone(), Arc::new(Mutex::new(slot)));
        view
    }

    pub fn create(&self, a: f64, b: f64, family: Family) -> Result<SessionView> {
        let slot = self.insert_new(a, b, family, now())?;
        Ok(self.register(slot))
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        self.with_slot(id, |s| Ok(s.state.view()))
    }

    /// Sessions ordered by creation time, then id.
    pub fn list(&self) -> Vec<SessionSummary> {
        let slots: Vec<_> = self
            .sessions
            .read()
            .expect("session map lock")
            .values()
            .cloned()
            .collect();
        let mut out: Vec<SessionSummary> = slots
            .iter()
            .map(|s| s.lock().expect("session lock").state.summary())
            .collect();
        out.sort_by(|a, b| (&a.created_at, &a.id).cmp(&(&b.created_at, &b.id)));
        out
    }

    pub fn next_stimulus(&self, id: &str) -> Result<f64> {
        self.with_slot(id, |s| {
            s.require_active()?;
            Ok(s.state.design.next_input())
        })
    }

    /// Records an outcome at the stimulus the session dictates. Both the
    /// trial index and the stimulus must match what the session expects.
    pub fn record(&self, id: &str, req: RecordRequest) -> Result<SessionView> {
        if !req.x.is_finite() {
            return Err(ServiceError::Validation(format!("non-finite stimulus {}", req.x)));
        }
        self.with_slot(id, |s| {
            s.require_active()?;
            s.require_index(Some(req.expected_index))?;
            let want = s.state.design.next_input();
            if req.x.to_bits() != want.to_bits() {
                return Err(s.stale(format!("stimulus {} does not match the design value {want}", req.x)));
            }
            s.commit(LogEntry::Recorded {
                index: req.expected_index,
                x: req.x,
                y: req.y,
                timestamp: Some(now()),
                note: req.note,
            })?;
            Ok(s.state.view())
        })
    }

    pub fn undo(&self, id: &str, expected_index: Option<usize>) -> Result<SessionView> {
        self.with_slot(id, |s| {
            s.require_active()?;
            s.require_index(expected_index)?;
            if s.state.trials.is_empty() {
                return Err(ServiceError::EmptyHistory(id.to_string()));
            }
            s.commit(LogEntry::Undone {
                index: s.state.trials.len(),
                timestamp: now(),
            })?;
            Ok(s.state.view())
        })
    }

    pub fn close(&self, id: &str, expected_index: Option<usize>) -> Result<SessionView> {
        self.with_slot(id, |s| {
            s.require_active()?;
            s.require_index(expected_index)?;
            s.commit(LogEntry::Closed { timestamp: now() })?;
            Ok(s.state.view())
        })
    }

    pub fn estimate(&self, id: &str) -> Result<Estimate> {
        let (history, family) = self.with_slot(id, |s| Ok((s.state.history(), s.state.family)))?;
        Ok(estimate_history(&history, family))
    }

    pub fn export(&self, id: &str, format: ExportFormat) -> Result<String> {
        let record = self.with_slot(id, |s| Ok(s.state.record()))?;
        Ok(match format {
            ExportFormat::Json => record.to_json(),
            ExportFormat::Csv => record_csv(&record),
        })
    }

    /// Creates a new session from a canonical JSON record, keeping trial
    /// timestamps and notes.
    pub fn import(&self, document: &str) -> Result<SessionView> {
        let record = SessionRecord::from_json(document).map_err(|e| ServiceError::InvalidRecord(e.to_string()))?;
        record
            .to_history()
            .map_err(|e| ServiceError::InvalidRecord(e.to_string()))?;
        let mut slot = self.insert_new(record.a, record.b, record.family, now())?;
        for t in record.trials {
            slot.commit(LogEntry::Recorded {
                index: t.index,
                x: t.x,
                y: t.y,
                timestamp: t.timestamp,
                note: t.note,
            })?;
        }
        Ok(self.register(slot))
    }
}

fn load_slot(path: &Path) -> Result<Slot> {
    let corrupt = |line: usize, message: String| ServiceError::CorruptLog {
        path: path.to_path_buf(),
        line,
        message,
    };
    let entries = read_log(path)?;
    let mut it = entries.into_iter();
    let first = it.next().ok_or_else(|| corrupt(1, "empty log".into()))?;
    let mut state = SessionState::from_created(&first).map_err(|m| corrupt(1, m))?;
    for (k, entry) in it.enumerate() {
        state.apply(entry).map_err(|m| corrupt(k + 2, m))?;
    }
    state
        .history()
        .validate_langlie()
        .map_err(|e| corrupt(0, e.to_string()))?;
    Ok(Slot {
        state,
        log: LogWriter::open(path)?,
    })
}

/// Fit on `history`, or the reason there is none.
pub fn estimate_history(history: &TrialHistory, family: Family) -> Estimate {
    if history.len() < 2 {
        return Estimate::NotEstimable {
            reason: NotEstimableReason::InsufficientData,
            message: format!("{} trial(s); at least 2 are needed", history.len()),
        };
    }
    if let Err(e) = check_separation(history) {
        return Estimate::NotEstimable {
            reason: NotEstimableReason::Separation,
            message: e.to_string(),
        };
    }
    match fit_mle(history, family) {
        Ok(fit) => Estimate::Estimated { fit },
        Err(e) => Estimate::NotEstimable {
            reason: NotEstimableReason::NonConvergence,
            message: e.to_string(),
        },
    }
}

/// Trial table with cumulative sums and balance indices.
fn record_csv(record: &SessionRecord) -> String {
    let x: Vec<f64> = record.trials.iter().map(|t| t.x).collect();
    let y: Vec<Outcome> = record.trials.iter().map(|t| t.y).collect();
    let rows = path_rows(0, &x, &y);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "x", "y", "s", "tau", "is_new_value", "timestamp", "note"])
        .expect("write to Vec");
    for (row, t) in rows.iter().zip(&record.trials) {
        w.write_record([
            t.index.to_string(),
            row.x.to_string(),
            row.y.value().to_string(),
            row.s.to_string(),
            row.tau.to_string(),
            row.is_new_value.to_string(),
            t.timestamp.clone().unwrap_or_default(),
            t.note.clone().unwrap_or_default(),
        ])
        .expect("write to Vec");
    }
    String::from_utf8(w.into_inner().expect("flush to Vec")).expect("utf-8 csv")
}
