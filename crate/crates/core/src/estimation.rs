//! Maximum-likelihood fitting of `(alpha, beta)` for binary-response data.
//!
//! Outcomes are stored as `-1/+1` and mapped to `z = (1 + y) / 2` inside the
//! likelihood:
//!
//! ```text
//! l(alpha, beta) = sum_i  z_i ln G(alpha + beta x_i) + (1 - z_i) ln(1 - G(alpha + beta x_i))
//! ```
//!
//! The log-likelihood is concave for both links, so a damped Newton ascent
//! with step halving is used, falling back to a gradient step whenever the
//! Hessian is close to singular.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Family;
use crate::trials::TrialHistory;

/// Relative gradient-norm tolerance: `|grad| <= tol * max(1, |l|)`.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub xi50_hat: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting `(alpha, beta)`; defaults to `(0, 2 / (b - a))`, or `(0, 1)`
    /// when the history has no bracket.
    pub start: Option<(f64, f64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            start: None,
        }
    }
}

fn require_nonempty(h: &TrialHistory) -> Result<()> {
    if h.is_empty() {
        return Err(Error::Domain("log-likelihood of an empty history".into()));
    }
    Ok(())
}

pub fn log_likelihood(alpha: f64, beta: f64, h: &TrialHistory, family: Family) -> Result<f64> {
    require_nonempty(h)?;
    Ok(ll_only(alpha, beta, h, family))
}

fn ll_only(alpha: f64, beta: f64, h: &TrialHistory, family: Family) -> f64 {
    h.iter()
        .map(|(x, y)| {
            let eta = alpha + beta * x;
            if y.is_success() {
                family.log_cdf(eta)
            } else {
                family.log_sf(eta)
            }
        })
        .sum()
}

/// Analytic gradient `(dl/dalpha, dl/dbeta)`.
pub fn score(alpha: f64, beta: f64, h: &TrialHistory, family: Family) -> Result<[f64; 2]> {
    require_nonempty(h)?;
    Ok(derivatives(alpha, beta, h, family).1)
}

/// Log-likelihood, gradient and Hessian `[[haa, hab], [hab, hbb]]`.
fn derivatives(alpha: f64, beta: f64, h: &TrialHistory, family: Family) -> (f64, [f64; 2], [f64; 3]) {
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    let mut hess = [0.0; 3];
    for (x, y) in h.iter() {
        let eta = alpha + beta * x;
        let (l, (d1, d2)) = if y.is_success() {
            (family.log_cdf(eta), family.log_cdf_derivs(eta))
        } else {
            (family.log_sf(eta), family.log_sf_derivs(eta))
        };
        ll += l;
        g[0] += d1;
        g[1] += d1 * x;
        hess[0] += d2;
        hess[1] += d2 * x;
        hess[2] += d2 * x * x;
    }
    (ll, g, hess)
}

/// Rejects data for which the likelihood has no finite maximiser: a single
/// outcome class, or a threshold with all failures on one side and all
/// successes on the other (ties at the threshold included).
pub fn check_separation(h: &TrialHistory) -> Result<()> {
    let mut succ = (f64::INFINITY, f64::NEG_INFINITY);
    let mut fail = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in h.iter() {
        let r = if y.is_success() { &mut succ } else { &mut fail };
        r.0 = r.0.min(x);
        r.1 = r.1.max(x);
    }
    if succ.0 > succ.1 || fail.0 > fail.1 {
        return Err(Error::Separation("all outcomes are equal".into()));
    }
    if fail.1 <= succ.0 {
        return Err(Error::Separation(format!(
            "every failure is at or below {} and every success at or above it",
            fail.1
        )));
    }
    if succ.1 <= fail.0 {
        return Err(Error::Separation(format!(
            "every success is at or below {} and every failure at or above it",
            succ.1
        )));
    }
    Ok(())
}

pub fn fit_mle(h: &TrialHistory, family: Family) -> Result<FitResult> {
    fit_mle_with(h, family, &FitOptions::default())
}

pub fn fit_mle_with(h: &TrialHistory, family: Family, opts: &FitOptions) -> Result<FitResult> {
    require_nonempty(h)?;
    h.validate()?;
    check_separation(h)?;

    let (mut alpha, mut beta) = opts.start.unwrap_or_else(|| match h.bracket() {
        Some(br) => (0.0, 2.0 / br.width()),
        None => (0.0, 1.0),
    });

    let mut iterations = 0;
    loop {
        let (ll, g, hs) = derivatives(alpha, beta, h, family);
        let gnorm = g[0].hypot(g[1]);
        let tol = opts.tolerance * ll.abs().max(1.0);
        if gnorm <= tol {
            return Ok(FitResult {
                family,
                alpha_hat: alpha,
                beta_hat: beta,
                xi50_hat: if beta != 0.0 { -alpha / beta } else { f64::NAN },
                log_likelihood: ll,
                converged: true,
                iterations,
                final_gradient_norm: gnorm,
                n_trials: h.len(),
            });
        }
        if iterations >= opts.max_iterations || !ll.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
                alpha,
                beta,
            });
        }
        iterations += 1;

        // Newton direction d = -H^{-1} g, valid while H is negative definite.
        let det = hs[0] * hs[2] - hs[1] * hs[1];
        let well_conditioned = hs[0] < 0.0 && det > 1e-12 * (hs[0] * hs[2]).abs();
        let (da, db) = if well_conditioned {
            (
                (-hs[2] * g[0] + hs[1] * g[1]) / det,
                (hs[1] * g[0] - hs[0] * g[1]) / det,
            )
        } else {
            (g[0], g[1])
        };

        let slack = 1e-12 * ll.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let (na, nb) = (alpha + step * da, beta + step * db);
            let nll = ll_only(na, nb, h, family);
            if nll.is_finite() && nll >= ll - slack {
                alpha = na;
                beta = nb;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
                alpha,
                beta,
            });
        }
    }
}

/// `-alpha_hat / beta_hat`.
pub fn estimate_median(fit: &FitResult) -> Result<f64> {
    if !fit.converged {
        return Err(Error::Domain("fit did not converge".into()));
    }
    if fit.beta_hat == 0.0 || !fit.beta_hat.is_finite() {
        return Err(Error::DegenerateSlope);
    }
    Ok(-fit.alpha_hat / fit.beta_hat)
}
