//! Parametric sensitivity distributions `F(x) = G(alpha + beta * x)` with a
//! probit (`G = Phi`) or logistic link.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trials::Outcome;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the normal tail is evaluated by its asymptotic series;
/// `erfc` underflows shortly after.
const PROBIT_TAIL: f64 = -30.0;

/// Link family of the sensitivity model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Probit,
    Logistic,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Probit => f.write_str("probit"),
            Family::Logistic => f.write_str("logistic"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "probit" => Ok(Family::Probit),
            "logistic" | "logit" => Ok(Family::Logistic),
            other => Err(Error::InvalidParameter(format!("unknown family `{other}`"))),
        }
    }
}

/// Standard normal density.
pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t - LN_SQRT_2PI).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t * FRAC_1_SQRT_2)
}

/// `ln Phi(t)`, accurate in the far lower tail.
pub fn normal_log_cdf(t: f64) -> f64 {
    if t < PROBIT_TAIL {
        // Phi(t) = phi(t)/|t| * (1 - 1/t^2 + 3/t^4 - 15/t^6 + ...)
        let t2 = t * t;
        let series = 1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2);
        -0.5 * t2 - LN_SQRT_2PI - (-t).ln() + series.ln()
    } else if t > 5.0 {
        (-normal_cdf(-t)).ln_1p()
    } else {
        normal_cdf(t).ln()
    }
}

/// Inverse Mills ratio `phi(t) / Phi(t)`.
fn normal_hazard_lower(t: f64) -> f64 {
    if t < PROBIT_TAIL {
        let t2 = t * t;
        // phi/Phi = |t| / (1 - 1/t^2 + 3/t^4 - 15/t^6)
        -t / (1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2))
    } else {
        (-0.5 * t * t - LN_SQRT_2PI - normal_log_cdf(t)).exp()
    }
}

fn normal_quantile(q: f64) -> f64 {
    let mut t = -SQRT_2 * erfc_inv(2.0 * q);
    // one Newton polish on Phi(t) = q
    let dens = normal_pdf(t);
    if dens > 0.0 {
        t -= (normal_cdf(t) - q) / dens;
    }
    t
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Family {
    /// Link distribution function `G(t)`.
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            Family::Probit => normal_cdf(t),
            Family::Logistic => logistic(t),
        }
    }

    /// `ln G(t)`.
    pub fn log_cdf(self, t: f64) -> f64 {
        match self {
            Family::Probit => normal_log_cdf(t),
            Family::Logistic => -softplus(-t),
        }
    }

    /// `ln (1 - G(t))`; both links are symmetric so this is `ln G(-t)`.
    pub fn log_sf(self, t: f64) -> f64 {
        self.log_cdf(-t)
    }

    /// `G^{-1}(q)` for `q` in (0, 1).
    pub fn inverse(self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("probability {q} outside (0, 1)")));
        }
        Ok(match self {
            Family::Probit => normal_quantile(q),
            Family::Logistic => (q / (1.0 - q)).ln(),
        })
    }

    /// First and second derivatives of `ln G` at `t`.
    pub fn log_cdf_derivs(self, t: f64) -> (f64, f64) {
        match self {
            Family::Probit => {
                let h = normal_hazard_lower(t);
                (h, -h * (t + h))
            }
            Family::Logistic => {
                let g = logistic(t);
                let sf = logistic(-t);
                (sf, -g * sf)
            }
        }
    }

    /// First and second derivatives of `ln (1 - G)` at `t`.
    pub fn log_sf_derivs(self, t: f64) -> (f64, f64) {
        let (d1, d2) = self.log_cdf_derivs(-t);
        (-d1, d2)
    }
}

/// Sensitivity distribution `F(x) = G(alpha + beta * x)`, strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityModel {
    pub family: Family,
    pub alpha: f64,
    pub beta: f64,
}

impl SensitivityModel {
    pub fn new(family: Family, alpha: f64, beta: f64) -> Result<Self> {
        let model = Self { family, alpha, beta };
        model.validate()?;
        Ok(model)
    }

    pub fn probit(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Family::Probit, alpha, beta)
    }

    pub fn logistic(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Family::Logistic, alpha, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha = {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive and finite, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Success probability `F(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.family.cdf(self.alpha + self.beta * x)
    }

    /// Failure probability `1 - F(x)`, without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        self.family.cdf(-(self.alpha + self.beta * x))
    }

    /// Stimulus level `xi` with `F(xi) = q`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        Ok((self.family.inverse(q)? - self.alpha) / self.beta)
    }

    /// `-alpha / beta`.
    pub fn median(&self) -> f64 {
        -self.alpha / self.beta
    }

    /// Simulates one trial at stimulus `x` using exactly one uniform draw.
    pub fn draw_outcome<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Outcome {
        let u: f64 = rng.random();
        Outcome::from_uniform(u, self.cdf(x))
    }
}

/// Free-function form of [`SensitivityModel::cdf`].
pub fn eval_cdf(model: &SensitivityModel, x: f64) -> f64 {
    model.cdf(x)
}

/// Free-function form of [`SensitivityModel::quantile`].
pub fn quantile(model: &SensitivityModel, q: f64) -> Result<f64> {
    model.quantile(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn probit_symmetry_at_origin() {
        let m = SensitivityModel::probit(0.0, 1.0).unwrap();
        assert_eq!(m.cdf(0.0), 0.5);
    }

    #[test]
    fn fig1_model_median() {
        let m = SensitivityModel::probit(3.333, 9.999).unwrap();
        // Phi(0.003333) from mpmath; -0.333 is the rounded median
        assert!((m.cdf(-0.333) - 0.501_329_672_158_714).abs() < 1e-12);
        assert!((m.cdf(-3.333 / 9.999) - 0.5).abs() < 1e-15);
        assert!((m.quantile(0.5).unwrap() + 0.333).abs() < 5e-4);
    }

    #[test]
    fn logistic_value() {
        // 1 / (1 + e^-2) evaluated with mpmath at 30 digits
        let m = SensitivityModel::logistic(0.0, 2.0).unwrap();
        assert!((m.cdf(1.0) - 0.880_797_077_977_882_4).abs() < 1e-15);
    }

    #[test]
    fn probit_quantile_975() {
        let m = SensitivityModel::probit(0.0, 1.0).unwrap();
        assert!((m.quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-5);
        let l = SensitivityModel::logistic(0.0, 1.0).unwrap();
        assert_eq!(l.quantile(0.5).unwrap(), 0.0);
        assert_eq!(m.quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_domain() {
        let m = SensitivityModel::probit(0.0, 1.0).unwrap();
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(m.quantile(q), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(SensitivityModel::probit(0.0, 0.0).is_err());
        assert!(SensitivityModel::logistic(0.0, -1.0).is_err());
        assert!(SensitivityModel::probit(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn log_cdf_tail_is_continuous() {
        // asymptotic branch against the direct branch at the switch point
        let below = normal_log_cdf(PROBIT_TAIL - 1e-9);
        let above = normal_log_cdf(PROBIT_TAIL + 1e-9);
        assert!((below - above).abs() < 1e-9 * below.abs());
        assert!(normal_log_cdf(-1e3).is_finite());
        assert!(normal_log_cdf(40.0) <= 0.0);
        assert!(Family::Logistic.log_cdf(-800.0).is_finite());
    }

    #[test]
    fn indicator_draw() {
        assert_eq!(Outcome::from_uniform(0.3, 0.5), Outcome::Success);
        assert_eq!(Outcome::from_uniform(0.9, 0.5), Outcome::Failure);
    }

    #[test]
    fn draw_frequency_matches_cdf() {
        use rand::SeedableRng;
        let m = SensitivityModel::probit(3.333, 9.999).unwrap();
        let x = -0.3;
        let f = m.cdf(x);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| m.draw_outcome(x, &mut rng) == Outcome::Success)
            .count();
        let mean = hits as f64 / n as f64;
        assert!((mean - f).abs() < 3.0 * (f * (1.0 - f) / n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn quantile_cdf_roundtrip(q in 1e-6f64..(1.0 - 1e-6), logistic in any::<bool>(),
                                  alpha in -5.0f64..5.0, beta in 0.1f64..20.0) {
            let fam = if logistic { Family::Logistic } else { Family::Probit };
            let m = SensitivityModel::new(fam, alpha, beta).unwrap();
            let x = m.quantile(q).unwrap();
            prop_assert!((m.cdf(x) - q).abs() < 1e-10);
        }

        #[test]
        fn cdf_quantile_roundtrip(x in -3.0f64..3.0, logistic in any::<bool>()) {
            let fam = if logistic { Family::Logistic } else { Family::Probit };
            let m = SensitivityModel::new(fam, 0.5, 1.5).unwrap();
            let back = m.quantile(m.cdf(x)).unwrap();
            prop_assert!((back - x).abs() < 1e-10);
        }

        #[test]
        fn cdf_strictly_increasing(x in -6.0f64..6.0, dx in 1e-3f64..1.0, logistic in any::<bool>()) {
            let fam = if logistic { Family::Logistic } else { Family::Probit };
            let m = SensitivityModel::new(fam, 0.2, 1.0).unwrap();
            let (lo, hi) = (m.cdf(x), m.cdf(x + dx));
            prop_assert!(lo < hi && lo > 0.0 && hi < 1.0);
        }

        #[test]
        fn derivs_match_finite_differences(t in -40.0f64..40.0, logistic in any::<bool>()) {
            let fam = if logistic { Family::Logistic } else { Family::Probit };
            let h = 1e-5;
            let fd1 = (fam.log_cdf(t + h) - fam.log_cdf(t - h)) / (2.0 * h);
            let (d1, _) = fam.log_cdf_derivs(t);
            prop_assert!((fd1 - d1).abs() <= 1e-5 * d1.abs().max(1.0));
            let fd1s = (fam.log_sf(t + h) - fam.log_sf(t - h)) / (2.0 * h);
            let (s1, _) = fam.log_sf_derivs(t);
            prop_assert!((fd1s - s1).abs() <= 1e-5 * s1.abs().max(1.0));
        }
    }
}
