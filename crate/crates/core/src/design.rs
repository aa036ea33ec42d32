//! Adaptive designs: the Langlie midpoint rule and the Robbins-Monro
//! stochastic-approximation update.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SensitivityModel;
use crate::trials::{balance_index, BalanceTracker, Bracket, Outcome, TrialHistory};

/// One application of the Langlie rule given the last input, the input at
/// the balance index (if any) and the last outcome.
#[inline]
fn langlie_rule(bracket: Bracket, x_last: f64, x_balance: Option<f64>, y_last: Outcome) -> f64 {
    match (x_balance, y_last) {
        (Some(xb), _) => (xb + x_last) / 2.0,
        (None, Outcome::Success) => (bracket.a + x_last) / 2.0,
        (None, Outcome::Failure) => (x_last + bracket.b) / 2.0,
    }
}

/// Next Langlie stimulus for a bracketed history.
pub fn langlie_next(h: &TrialHistory) -> Result<f64> {
    h.validate()?;
    let bracket = h
        .bracket()
        .ok_or_else(|| Error::InvalidHistory("Langlie design needs a bracket".into()))?;
    let (Some(&x_last), Some(&y_last)) = (h.x().last(), h.y().last()) else {
        return Ok(bracket.midpoint());
    };
    let tau = balance_index(h.y());
    let x_balance = (tau > 0).then(|| h.x()[tau - 1]);
    Ok(langlie_rule(bracket, x_last, x_balance, y_last))
}

/// Incrementally maintained Langlie experiment.
///
/// Each [`record`](Self::record) costs O(1) amortised, so long simulated
/// paths stay linear in their length.
#[derive(Debug, Clone)]
pub struct LanglieState {
    bracket: Bracket,
    x: Vec<f64>,
    y: Vec<Outcome>,
    tracker: BalanceTracker,
    last_tau: usize,
    next: f64,
}

impl LanglieState {
    pub fn new(bracket: Bracket) -> Self {
        Self {
            bracket,
            x: Vec::new(),
            y: Vec::new(),
            tracker: BalanceTracker::new(),
            last_tau: 0,
            next: bracket.midpoint(),
        }
    }

    pub fn with_capacity(bracket: Bracket, n: usize) -> Self {
        let mut s = Self::new(bracket);
        s.x.reserve(n);
        s.y.reserve(n);
        s
    }

    /// Stimulus for the upcoming trial.
    pub fn next_input(&self) -> f64 {
        self.next
    }

    /// Records the outcome of a trial at [`next_input`](Self::next_input)
    /// and returns the balance index of the extended history.
    pub fn record(&mut self, y: Outcome) -> usize {
        let x = self.next;
        self.x.push(x);
        self.y.push(y);
        let tau = self.tracker.push(y);
        self.last_tau = tau;
        let x_balance = (tau > 0).then(|| self.x[tau - 1]);
        self.next = langlie_rule(self.bracket, x, x_balance, y);
        tau
    }

    /// Balance index after the most recent trial (0 before any trial).
    pub fn last_tau(&self) -> usize {
        self.last_tau
    }

    pub fn cumulative_sum(&self) -> i64 {
        self.tracker.sum()
    }

    pub fn bracket(&self) -> Bracket {
        self.bracket
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[Outcome] {
        &self.y
    }

    pub fn into_history(self) -> TrialHistory {
        TrialHistory::from_parts(Some(self.bracket), self.x, self.y)
            .expect("Langlie inputs stay strictly inside the bracket")
    }
}

/// Inputs `X_1..X_n` the Langlie rule assigns to the outcome sequence.
pub fn replay_langlie_inputs(bracket: Bracket, y: &[Outcome]) -> Vec<f64> {
    let mut st = LanglieState::with_capacity(bracket, y.len());
    for &o in y {
        st.record(o);
    }
    st.x
}

/// Step-size sequence `a_n = c / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmSchedule {
    c: f64,
}

impl RmSchedule {
    pub fn harmonic(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step scale must be positive and finite, got {c}"
            )));
        }
        Ok(Self { c })
    }

    /// `c = (b - a) / 2` when a bracket is available, else `c = 1`.
    pub fn default_for(bracket: Option<Bracket>) -> Self {
        Self {
            c: bracket.map_or(1.0, |br| br.width() / 2.0),
        }
    }

    pub fn scale(&self) -> f64 {
        self.c
    }

    /// `a_n` for `n >= 1`.
    pub fn step(&self, n: usize) -> f64 {
        self.c / n as f64
    }
}

/// `x_n - a_n * y_n / 2`.
pub fn robbins_monro_next(x: f64, y: Outcome, step: f64) -> Result<f64> {
    if !step.is_finite() || step < 0.0 {
        return Err(Error::Domain(format!("step size must be non-negative, got {step}")));
    }
    Ok(x - step * y.value() as f64 / 2.0)
}

/// Design rule driving [`run_design`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    Langlie(Bracket),
    RobbinsMonro { start: f64, schedule: RmSchedule },
}

/// Simulates `n` trials of `design` against `model`.
pub fn run_design<R: Rng + ?Sized>(
    model: &SensitivityModel,
    design: &Design,
    n: usize,
    rng: &mut R,
) -> Result<TrialHistory> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("number of trials must be at least 1".into()));
    }
    match *design {
        Design::Langlie(bracket) => {
            let bracket = Bracket::new(bracket.a, bracket.b)?;
            let mut st = LanglieState::with_capacity(bracket, n);
            for _ in 0..n {
                let y = model.draw_outcome(st.next_input(), rng);
                st.record(y);
            }
            Ok(st.into_history())
        }
        Design::RobbinsMonro { start, schedule } => {
            if !start.is_finite() {
                return Err(Error::InvalidParameter(format!("start = {start}")));
            }
            let mut h = TrialHistory::unbounded();
            let mut x = start;
            for k in 1..=n {
                let y = model.draw_outcome(x, rng);
                h.push(x, y)?;
                x = robbins_monro_next(x, y, schedule.step(k))?;
            }
            Ok(h)
        }
    }
}

/// Runs Robbins-Monro for `n` trials and returns the would-be input `X_{n+1}`.
pub fn robbins_monro_terminal<R: Rng + ?Sized>(
    model: &SensitivityModel,
    start: f64,
    schedule: RmSchedule,
    n: usize,
    rng: &mut R,
) -> f64 {
    let mut x = start;
    for k in 1..=n {
        let y = model.draw_outcome(x, rng);
        x -= schedule.step(k) * y.value() as f64 / 2.0;
    }
    x
}
