//! Langlie sensitivity testing: the adaptive design, trial simulation,
//! maximum-likelihood estimation, and a Monte Carlo harness that exhibits
//! why the Langlie input sequence does not converge.
//!
//! * [`model`]: probit and logistic sensitivity distributions.
//! * [`trials`]: outcomes, histories, cumulative sums and the balance index.
//! * [`design`]: Langlie and Robbins-Monro designs.
//! * [`estimation`]: maximum-likelihood fits and median estimates.
//! * [`walks`]: reflected walks, coupling and stochastic-order checks.
//! * [`harness`]: reproducible verification experiments.
//! * [`record`]: canonical record and tabular formats.

pub mod design;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod model;
pub mod record;
pub mod rng;
pub mod trials;
pub mod walks;

pub use design::{langlie_next, robbins_monro_next, run_design, Design, LanglieState, RmSchedule};
pub use error::{Error, Result};
pub use estimation::{estimate_median, fit_mle, log_likelihood, FitResult};
pub use model::{eval_cdf, quantile, Family, SensitivityModel};
pub use trials::{balance_index, cumulative_sums, Bracket, Outcome, TrialHistory};
