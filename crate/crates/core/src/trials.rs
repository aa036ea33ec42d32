//! Binary trial records, the cumulative-sum process and the balance index.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::error::{Error, Result};

/// Result of one binary trial, coded as `+1` (success) or `-1` (failure).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Failure,
    Success,
}

impl Outcome {
    /// Indicator construction `2 * 1{u <= prob} - 1`.
    #[inline]
    pub fn from_uniform(u: f64, prob: f64) -> Self {
        if u <= prob {
            Outcome::Success
        } else {
            Outcome::Failure
        }
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Outcome::Success),
            -1 => Ok(Outcome::Failure),
            other => Err(Error::Domain(format!("outcome must be -1 or +1, got {other}"))),
        }
    }

    #[inline]
    pub fn value(self) -> i64 {
        match self {
            Outcome::Success => 1,
            Outcome::Failure => -1,
        }
    }

    /// Zero/one coding used by the likelihood.
    #[inline]
    pub fn indicator(self) -> f64 {
        match self {
            Outcome::Success => 1.0,
            Outcome::Failure => 0.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Success => Outcome::Failure,
            Outcome::Failure => Outcome::Success,
        }
    }

    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value() as i8)
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Outcome::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// Lower and upper stimulus bounds `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub a: f64,
    pub b: f64,
}

impl Bracket {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite bracket ({a}, {b})")));
        }
        if a >= b {
            return Err(Error::InvalidParameter(format!(
                "bracket requires a < b, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn midpoint(&self) -> f64 {
        (self.a + self.b) / 2.0
    }

    pub fn contains_strictly(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

/// Ordered `(x_i, y_i)` record of an experiment.
///
/// Histories carrying a bracket keep every input strictly inside it.
/// Robbins-Monro runs have no bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialHistory {
    bracket: Option<Bracket>,
    x: Vec<f64>,
    y: Vec<Outcome>,
}

impl TrialHistory {
    pub fn new(bracket: Bracket) -> Self {
        Self {
            bracket: Some(bracket),
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn unbounded() -> Self {
        Self {
            bracket: None,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn from_parts(bracket: Option<Bracket>, x: Vec<f64>, y: Vec<Outcome>) -> Result<Self> {
        let h = Self { bracket, x, y };
        h.validate()?;
        Ok(h)
    }

    /// Length and bound checks.
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::InvalidHistory(format!(
                "{} inputs but {} outcomes",
                self.x.len(),
                self.y.len()
            )));
        }
        if let Some((i, x)) = self.x.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::InvalidHistory(format!("input {} is {x}", i + 1)));
        }
        if let Some(br) = self.bracket {
            Bracket::new(br.a, br.b)?;
            if let Some((i, x)) = self.x.iter().enumerate().find(|(_, &x)| !br.contains_strictly(x)) {
                return Err(Error::InvalidHistory(format!(
                    "input {} = {x} outside ({}, {})",
                    i + 1,
                    br.a,
                    br.b
                )));
            }
        }
        Ok(())
    }

    /// Checks that every recorded input is the one the Langlie rule assigns
    /// to the preceding outcomes.
    pub fn validate_langlie(&self) -> Result<()> {
        self.validate()?;
        let bracket = self
            .bracket
            .ok_or_else(|| Error::InvalidHistory("Langlie history needs a bracket".into()))?;
        let replayed = crate::design::replay_langlie_inputs(bracket, &self.y);
        for (i, (&rec, &exp)) in self.x.iter().zip(&replayed).enumerate() {
            if rec.to_bits() != exp.to_bits() {
                return Err(Error::InvalidHistory(format!(
                    "input {} = {rec} but the design assigns {exp}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn push(&mut self, x: f64, y: Outcome) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidHistory(format!("input {x}")));
        }
        if let Some(br) = self.bracket {
            if !br.contains_strictly(x) {
                return Err(Error::InvalidHistory(format!("input {x} outside ({}, {})", br.a, br.b)));
            }
        }
        self.x.push(x);
        self.y.push(y);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<(f64, Outcome)> {
        Some((self.x.pop()?, self.y.pop()?))
    }

    pub fn bracket(&self) -> Option<Bracket> {
        self.bracket
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[Outcome] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Outcome)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn successes(&self) -> usize {
        self.y.iter().filter(|y| y.is_success()).count()
    }
}

/// `S_k = y_1 + ... + y_k` for every prefix.
pub fn cumulative_sums(y: &[Outcome]) -> Vec<i64> {
    y.iter()
        .scan(0i64, |s, o| {
            *s += o.value();
            Some(*s)
        })
        .collect()
}

/// Maximal `i` in `1..n` with `S_i = S_n`, or 0 when no such index exists.
pub fn balance_index(y: &[Outcome]) -> usize {
    let n = y.len();
    if n < 2 {
        return 0;
    }
    let sums = cumulative_sums(y);
    let target = sums[n - 1];
    (1..n).rev().find(|&i| sums[i - 1] == target).unwrap_or(0)
}

/// Balance index by literally counting successes and failures among
/// `y_{i+1}, ..., y_n` for every candidate `i`. Quadratic; a reference for
/// [`balance_index`].
pub fn balance_index_by_counts(y: &[Outcome]) -> usize {
    let n = y.len();
    for i in (1..n).rev() {
        let tail = &y[i..];
        let succ = tail.iter().filter(|o| o.is_success()).count();
        if 2 * succ == tail.len() {
            return i;
        }
    }
    0
}

/// Whether `S_n` is absent from `{S_1, ..., S_{n-1}}`.
pub fn is_new_value(sums: &[i64]) -> bool {
    match sums.split_last() {
        Some((last, prev)) => !prev.contains(last),
        None => false,
    }
}

/// Incremental balance index: O(1) per outcome.
#[derive(Debug, Clone, Default)]
pub struct BalanceTracker {
    n: usize,
    sum: i64,
    // last index at which each cumulative sum was seen, zigzag-indexed; 0 = never
    last_seen: Vec<usize>,
}

impl BalanceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(sum: i64) -> usize {
        if sum >= 0 {
            (2 * sum) as usize
        } else {
            (-2 * sum - 1) as usize
        }
    }

    /// Appends an outcome and returns the balance index of the extended sequence.
    pub fn push(&mut self, y: Outcome) -> usize {
        self.n += 1;
        self.sum += y.value();
        let slot = Self::slot(self.sum);
        if slot >= self.last_seen.len() {
            self.last_seen.resize(slot + 1, 0);
        }
        std::mem::replace(&mut self.last_seen[slot], self.n)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Current cumulative sum `S_n`.
    pub fn sum(&self) -> i64 {
        self.sum
    }
}
