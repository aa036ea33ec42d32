//! Reflected random walks, the common-uniform coupling between a dependent
//! `+/-1` process and a reflected walk, running maxima, and empirical checks
//! of the usual stochastic order.

use rand::Rng;

use crate::design::LanglieState;
use crate::error::{Error, Result};
use crate::model::SensitivityModel;
use crate::trials::{Bracket, Outcome};

/// Up-step probability of a reflected walk, `0 < p < 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectedWalkParams {
    p: f64,
}

impl ReflectedWalkParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "reflected walk needs 0 < p < 1/2, got {p}"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// `|b + z|`.
#[inline]
pub fn reflected_walk_step(b: u64, z: Outcome) -> u64 {
    match z {
        Outcome::Success => b + 1,
        Outcome::Failure => b.abs_diff(1),
    }
}

/// Reflected walk driven by given uniforms. `B_1 = 1`; the first uniform is
/// consumed but unused so that indices line up with a coupled process.
pub fn reflected_walk_from_uniforms(p: f64, uniforms: &[f64]) -> Vec<u64> {
    let mut path = Vec::with_capacity(uniforms.len());
    let mut b = 1u64;
    for (i, &u) in uniforms.iter().enumerate() {
        if i > 0 {
            b = reflected_walk_step(b, Outcome::from_uniform(u, p));
        }
        path.push(b);
    }
    path
}

/// Simulates `B_1..B_n`.
pub fn run_reflected_walk<R: Rng + ?Sized>(params: ReflectedWalkParams, n: usize, rng: &mut R) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("walk length must be at least 1".into()));
    }
    let mut path = Vec::with_capacity(n);
    let mut b = 1u64;
    path.push(b);
    let _: f64 = rng.random();
    for _ in 1..n {
        let u: f64 = rng.random();
        b = reflected_walk_step(b, Outcome::from_uniform(u, params.p));
        path.push(b);
    }
    Ok(path)
}

/// A `+/-1` process described by its conditional success probabilities
/// `P(Y_{n+1} = +1 | Y_1..Y_n)`.
pub trait OutcomeProcess {
    /// Success probability of the next outcome given everything pushed so far.
    fn success_prob(&self) -> f64;
    /// `P(Y_{n+1} = -1 | Y_1..Y_n)`. Override when `1 - success_prob()`
    /// loses precision, as it does in the far upper tail.
    fn failure_prob(&self) -> f64 {
        1.0 - self.success_prob()
    }
    fn push(&mut self, y: Outcome);
}

/// Adapts a callback `(y_1..y_n) -> probability` into an [`OutcomeProcess`].
#[derive(Clone)]
pub struct FnProcess<F> {
    f: F,
    history: Vec<Outcome>,
}

impl<F: Fn(&[Outcome]) -> f64> FnProcess<F> {
    pub fn new(f: F) -> Self {
        Self { f, history: Vec::new() }
    }
}

impl<F: Fn(&[Outcome]) -> f64> OutcomeProcess for FnProcess<F> {
    fn success_prob(&self) -> f64 {
        (self.f)(&self.history)
    }

    fn push(&mut self, y: Outcome) {
        self.history.push(y);
    }
}

/// Outcome process of a Langlie experiment against a known model: the next
/// success probability is `F` at the next Langlie stimulus.
#[derive(Debug, Clone)]
pub struct LangliePredictor {
    model: SensitivityModel,
    state: LanglieState,
}

impl LangliePredictor {
    pub fn new(model: SensitivityModel, bracket: Bracket) -> Self {
        Self {
            model,
            state: LanglieState::new(bracket),
        }
    }

    pub fn state(&self) -> &LanglieState {
        &self.state
    }
}

impl OutcomeProcess for LangliePredictor {
    fn success_prob(&self) -> f64 {
        self.model.cdf(self.state.next_input())
    }

    fn failure_prob(&self) -> f64 {
        self.model.sf(self.state.next_input())
    }

    fn push(&mut self, y: Outcome) {
        self.state.record(y);
    }
}

/// How a shared uniform is turned into the dependent process's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingRule {
    /// Step away from the origin iff `U <= P(step away)`. At `S = 0` this is
    /// the plain indicator. Keeps `B <= |S|` on every path.
    #[default]
    AwayFromOrigin,
    /// Plain indicator `Y = +1 iff U <= f` regardless of the sign of `S`.
    /// Equal in law, but does not keep the walks ordered when `S < 0`.
    Indicator,
}

impl CouplingRule {
    #[inline]
    fn outcome(self, u: f64, f: f64, q: f64, sum: i64) -> Outcome {
        match self {
            CouplingRule::AwayFromOrigin if sum < 0 => {
                if u <= q {
                    Outcome::Failure
                } else {
                    Outcome::Success
                }
            }
            _ => Outcome::from_uniform(u, f),
        }
    }
}

/// Jointly constructed `|S~_n|` and `B~_n` paths sharing uniforms.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPathPair {
    pub uniforms: Vec<f64>,
    pub outcomes: Vec<Outcome>,
    pub a_path: Vec<u64>,
    pub b_path: Vec<u64>,
}

impl CoupledPathPair {
    /// First 1-based index with `B~_n > A~_n`.
    pub fn first_violation(&self) -> Option<usize> {
        self.a_path
            .iter()
            .zip(&self.b_path)
            .position(|(a, b)| b > a)
            .map(|i| i + 1)
    }

    fn violation_error(&self, index: usize) -> Error {
        Error::CouplingViolation {
            index,
            a: self.a_path[index - 1],
            b: self.b_path[index - 1],
            prefix: self.outcomes[..index].iter().map(|o| o.value() as i8).collect(),
        }
    }
}

fn validate_coupling(p: f64, n: usize) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("coupling needs 0 < p < 1, got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("path length must be at least 1".into()));
    }
    Ok(())
}

/// Builds both paths from one draw of `U_1..U_n` without checking domination.
pub fn coupled_paths_unchecked<P: OutcomeProcess, R: Rng + ?Sized>(
    mut process: P,
    p: f64,
    n: usize,
    rule: CouplingRule,
    rng: &mut R,
) -> Result<CoupledPathPair> {
    validate_coupling(p, n)?;
    let uniforms: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let mut outcomes = Vec::with_capacity(n);
    let mut a_path = Vec::with_capacity(n);
    let mut sum = 0i64;
    for &u in &uniforms {
        let y = rule.outcome(u, process.success_prob(), process.failure_prob(), sum);
        process.push(y);
        sum += y.value();
        outcomes.push(y);
        a_path.push(sum.unsigned_abs());
    }
    let b_path = reflected_walk_from_uniforms(p, &uniforms);
    Ok(CoupledPathPair {
        uniforms,
        outcomes,
        a_path,
        b_path,
    })
}

/// Coupled construction; fails with [`Error::CouplingViolation`] (carrying
/// the violating outcome prefix) if `B~_n > A~_n` anywhere, which signals
/// that some conditional probability or its complement fell below `p`.
pub fn coupled_paths<P: OutcomeProcess, R: Rng + ?Sized>(
    process: P,
    p: f64,
    n: usize,
    rng: &mut R,
) -> Result<CoupledPathPair> {
    let pair = coupled_paths_unchecked(process, p, n, CouplingRule::AwayFromOrigin, rng)?;
    match pair.first_violation() {
        Some(i) => Err(pair.violation_error(i)),
        None => Ok(pair),
    }
}

/// Totals from [`exhaustive_coupling_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExhaustiveCouplingReport {
    pub paths: u64,
    pub violations: u64,
}

/// Enumerates every distinct joint behaviour of the coupled pair up to
/// length `n`. At each step the uniform only matters through which cell of
/// the partition of `[0, 1]` cut at `{p, f, q}` it lands in (`q` the failure
/// probability), so one representative per cell covers all uniforms.
pub fn exhaustive_coupling_check<P: OutcomeProcess + Clone>(
    process: P,
    p: f64,
    n: usize,
    rule: CouplingRule,
) -> Result<ExhaustiveCouplingReport> {
    validate_coupling(p, n)?;
    let mut report = ExhaustiveCouplingReport::default();
    // first step: B_1 = 1 = |S_1| whatever U_1 is
    for y in [Outcome::Success, Outcome::Failure] {
        let mut next = process.clone();
        next.push(y);
        enumerate(next, p, rule, n - 1, y.value(), 1, &mut report);
    }
    Ok(report)
}

fn enumerate<P: OutcomeProcess + Clone>(
    process: P,
    p: f64,
    rule: CouplingRule,
    remaining: usize,
    sum: i64,
    b: u64,
    report: &mut ExhaustiveCouplingReport,
) {
    if sum.unsigned_abs() < b {
        report.paths += 1;
        report.violations += 1;
        return;
    }
    if remaining == 0 {
        report.paths += 1;
        return;
    }
    let (f, q) = (process.success_prob(), process.failure_prob());
    let mut cuts: Vec<f64> = [p, f, q, 1.0].into_iter().filter(|c| (0.0..=1.0).contains(c)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    for u in cuts {
        let y = rule.outcome(u, f, q, sum);
        let nb = reflected_walk_step(b, Outcome::from_uniform(u, p));
        let mut next = process.clone();
        next.push(y);
        enumerate(next, p, rule, remaining - 1, sum + y.value(), nb, report);
    }
}

/// `0.99 * min{F(a), 1 - F(a), F(b), 1 - F(b)}`.
pub fn langlie_comparison_p(model: &SensitivityModel, bracket: Bracket) -> f64 {
    let (a, b) = (bracket.a, bracket.b);
    0.99 * model.cdf(a).min(model.sf(a)).min(model.cdf(b)).min(model.sf(b))
}

/// Prefix maxima.
pub fn running_max<T: Ord + Copy>(path: &[T]) -> Result<Vec<T>> {
    let (&first, _) = path
        .split_first()
        .ok_or_else(|| Error::Domain("running maximum of an empty path".into()))?;
    Ok(path
        .iter()
        .scan(first, |m, &v| {
            *m = (*m).max(v);
            Some(*m)
        })
        .collect())
}

/// Number of indices with `path_n = m`.
pub fn visit_count(path: &[u64], m: u64) -> usize {
    path.iter().filter(|&&v| v == m).count()
}

/// One-sided DKW half-width `sqrt(ln(2 / (1 - confidence)) / (2 n))`.
pub fn dkw_band(n: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DominanceVerdict {
    /// `max_x ECDF_P(x) - ECDF_Q(x)` stayed within the band.
    Consistent {
        max_gap: f64,
        band: f64,
    },
    Violated {
        x: f64,
        gap: f64,
        band: f64,
    },
}

impl DominanceVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, DominanceVerdict::Consistent { .. })
    }

    pub fn gap(&self) -> f64 {
        match *self {
            DominanceVerdict::Consistent { max_gap, .. } => max_gap,
            DominanceVerdict::Violated { gap, .. } => gap,
        }
    }

    pub fn band(&self) -> f64 {
        match *self {
            DominanceVerdict::Consistent { band, .. } | DominanceVerdict::Violated { band, .. } => band,
        }
    }
}

/// Falsification check of `Q <=_st P`: that requires `ECDF_Q >= ECDF_P`
/// everywhere, so a violation is reported only where `ECDF_P - ECDF_Q`
/// exceeds the sum of the two DKW half-widths.
pub fn check_stochastic_dominance(samples_p: &[f64], samples_q: &[f64], confidence: f64) -> Result<DominanceVerdict> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::Domain("dominance check needs non-empty samples".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    if samples_p.iter().chain(samples_q).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN sample".into()));
    }
    let mut ps = samples_p.to_vec();
    let mut qs = samples_q.to_vec();
    ps.sort_by(f64::total_cmp);
    qs.sort_by(f64::total_cmp);
    let (np, nq) = (ps.len() as f64, qs.len() as f64);

    let mut best = (f64::NEG_INFINITY, ps[0]);
    let (mut i, mut j) = (0, 0);
    while i < ps.len() || j < qs.len() {
        let x = match (ps.get(i), qs.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < ps.len() && ps[i] <= x {
            i += 1;
        }
        while j < qs.len() && qs[j] <= x {
            j += 1;
        }
        let gap = i as f64 / np - j as f64 / nq;
        if gap > best.0 {
            best = (gap, x);
        }
    }
    let band = dkw_band(ps.len(), confidence) + dkw_band(qs.len(), confidence);
    Ok(if best.0 > band {
        DominanceVerdict::Violated {
            x: best.1,
            gap: best.0,
            band,
        }
    } else {
        DominanceVerdict::Consistent {
            max_gap: best.0.max(0.0),
            band,
        }
    })
}

/// Stationary law of the reflected walk on `{0, ..., levels - 1}` from the
/// detailed-balance equations `pi_k P(k -> k+1) = pi_{k+1} P(k+1 -> k)`,
/// truncated and renormalised.
pub fn reflected_walk_stationary(params: ReflectedWalkParams, levels: usize) -> Vec<f64> {
    let p = params.p;
    let mut pi = Vec::with_capacity(levels);
    let mut w = 1.0;
    for k in 0..levels {
        pi.push(w);
        let up = if k == 0 { 1.0 } else { p };
        w *= up / (1.0 - p);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    pi
}

/// Fraction of time the path spends at each level `0..levels`; the last
/// entry collects every level at or above `levels - 1`.
pub fn empirical_occupancy(path: &[u64], levels: usize) -> Vec<f64> {
    let mut counts = vec![0usize; levels];
    for &v in path {
        counts[(v as usize).min(levels - 1)] += 1;
    }
    counts.iter().map(|&c| c as f64 / path.len() as f64).collect()
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n)
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
