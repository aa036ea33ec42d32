//! Canonical session record (JSON) and the tabular path format (CSV).

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::Family;
use crate::trials::{cumulative_sums, BalanceTracker, Bracket, Outcome, TrialHistory};

pub const RECORD_VERSION: u32 = 1;

/// One trial in the canonical record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub x: f64,
    pub y: Outcome,
    pub timestamp: Option<String>,
    pub note: Option<String>,
}

/// Canonical record of a Langlie experiment. Field order is fixed by the
/// struct layout and numbers use shortest round-trip formatting, so
/// serialising the same record always yields the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub version: u32,
    pub a: f64,
    pub b: f64,
    pub family: Family,
    pub trials: Vec<TrialRecord>,
}

impl SessionRecord {
    pub fn from_history(h: &TrialHistory, family: Family) -> Result<Self> {
        let br = h
            .bracket()
            .ok_or_else(|| Error::InvalidHistory("record format needs a bracket".into()))?;
        Ok(Self {
            version: RECORD_VERSION,
            a: br.a,
            b: br.b,
            family,
            trials: h
                .iter()
                .enumerate()
                .map(|(i, (x, y))| TrialRecord {
                    index: i + 1,
                    x,
                    y,
                    timestamp: None,
                    note: None,
                })
                .collect(),
        })
    }

    /// History view; checks bracket, indices and the Langlie replay invariant.
    pub fn to_history(&self) -> Result<TrialHistory> {
        if self.version != RECORD_VERSION {
            return Err(Error::InvalidHistory(format!(
                "unsupported record version {}",
                self.version
            )));
        }
        let br = Bracket::new(self.a, self.b)?;
        if let Some((pos, t)) = self.trials.iter().enumerate().find(|(i, t)| t.index != i + 1) {
            return Err(Error::InvalidHistory(format!(
                "trial at position {} has index {}",
                pos + 1,
                t.index
            )));
        }
        let h = TrialHistory::from_parts(
            Some(br),
            self.trials.iter().map(|t| t.x).collect(),
            self.trials.iter().map(|t| t.y).collect(),
        )?;
        h.validate_langlie()?;
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidHistory(format!("bad record: {e}")))
    }
}

/// One row of a path table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRow {
    pub replicate: u64,
    pub n: usize,
    pub x: f64,
    pub y: Outcome,
    pub s: i64,
    pub tau: usize,
    pub is_new_value: bool,
}

pub const PATH_TABLE_HEADER: &str = "replicate,n,x,y,s,tau,is_new_value";

/// Rows for every trial of a history. `is_new_value` is derived from the
/// range of earlier sums and `tau` from the balance tracker, so the two
/// columns are computed independently.
pub fn path_rows(replicate: u64, x: &[f64], y: &[Outcome]) -> Vec<PathRow> {
    let sums = cumulative_sums(y);
    let mut tracker = BalanceTracker::new();
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    x.iter()
        .zip(y)
        .zip(&sums)
        .enumerate()
        .map(|(i, ((&x, &y), &s))| {
            let tau = tracker.push(y);
            // unit steps: the visited set is the interval [lo, hi]
            let is_new_value = i > 0 && (s < lo || s > hi);
            lo = lo.min(s);
            hi = hi.max(s);
            PathRow {
                replicate,
                n: i + 1,
                x,
                y,
                s,
                tau,
                is_new_value,
            }
        })
        .collect()
}

pub fn write_path_table<W: Write>(mut w: W, rows: &[PathRow]) -> io::Result<()> {
    writeln!(w, "{PATH_TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.replicate,
            r.n,
            r.x,
            r.y.value(),
            r.s,
            r.tau,
            u8::from(r.is_new_value)
        )?;
    }
    Ok(())
}
