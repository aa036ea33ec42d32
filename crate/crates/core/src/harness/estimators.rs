use rayon::prelude::*;

use super::stats::{bootstrap_se, iqr, median, proportion};
use super::{stream_id, Check, Experiment, ExperimentConfig, ExperimentReport, Statistic, Table};
use crate::design::{robbins_monro_terminal, LanglieState, RmSchedule};
use crate::error::Result;
use crate::estimation::{estimate_median, fit_mle};
use crate::rng::substream;
use crate::trials::TrialHistory;

const BOOTSTRAP_RESAMPLES: usize = 500;

/// Horizons from which the MLE median-bias bound is enforced.
const BIAS_MIN_HORIZON: usize = 1000;

struct Replicate {
    langlie: Vec<f64>,
    rm: Vec<f64>,
    /// `None` where the MLE does not exist or does not converge.
    mle: Vec<Option<f64>>,
}

/// Dispersion of the Langlie terminal input, the Robbins-Monro terminal
/// input, and the MLE median estimate from Langlie data, across horizons.
pub fn experiment_estimator_comparison(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport::new(Experiment::EstimatorComparison, config);
    let xi = config.model.quantile(config.quantile)?;
    let schedule = match config.rm_scale {
        Some(c) => RmSchedule::harmonic(c)?,
        None => RmSchedule::default_for(Some(config.bracket)),
    };
    let mut horizons = if config.horizons.is_empty() {
        vec![config.trials]
    } else {
        config.horizons.clone()
    };
    horizons.sort_unstable();
    horizons.dedup();
    let n_max = *horizons.last().expect("non-empty horizons");
    let family = config.model.family;

    let reps: Vec<Replicate> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.master_seed, stream_id(0, r));
            let mut st = LanglieState::with_capacity(config.bracket, n_max);
            let mut langlie = Vec::with_capacity(horizons.len());
            let mut mle = Vec::with_capacity(horizons.len());
            let mut next = horizons.iter().peekable();
            for n in 1..=n_max {
                let y = config.model.draw_outcome(st.next_input(), &mut rng);
                st.record(y);
                if next.next_if(|&&h| h == n).is_some() {
                    langlie.push(st.next_input());
                    let prefix = TrialHistory::from_parts(Some(config.bracket), st.x().to_vec(), st.y().to_vec())
                        .expect("simulated history is valid");
                    mle.push(fit_mle(&prefix, family).and_then(|fit| estimate_median(&fit)).ok());
                }
            }
            let rm = horizons
                .iter()
                .enumerate()
                .map(|(k, &n)| {
                    let mut rng = substream(config.master_seed, stream_id(1 + k, r));
                    robbins_monro_terminal(&config.model, config.bracket.midpoint(), schedule, n, &mut rng)
                })
                .collect();
            Replicate { langlie, rm, mle }
        })
        .collect();

    let seed = config.master_seed;
    let mut table = String::from("horizon,estimator,iqr,iqr_se,median_error,failures\n");
    let mut rm_iqrs = Vec::new();
    let mut langlie_iqrs = Vec::new();
    for (k, &n) in horizons.iter().enumerate() {
        let l: Vec<f64> = reps.iter().map(|r| r.langlie[k]).collect();
        let rm: Vec<f64> = reps.iter().map(|r| r.rm[k]).collect();
        let m: Vec<f64> = reps.iter().filter_map(|r| r.mle[k]).collect();
        let failures = reps.len() - m.len();
        for (name, v, fails) in [("langlie", &l, 0), ("robbins_monro", &rm, 0), ("mle", &m, failures)] {
            let spread = iqr(v);
            let se = bootstrap_se(v, iqr, BOOTSTRAP_RESAMPLES, seed);
            let err = median(v) - xi;
            table.push_str(&format!("{n},{name},{spread},{se},{err},{fails}\n"));
            report
                .statistics
                .push(Statistic::new(format!("iqr_{name}_N{n}"), spread, se));
            if name == "robbins_monro" {
                rm_iqrs.push((n, spread, se));
            } else if name == "langlie" {
                langlie_iqrs.push((n, spread, se));
            }
        }
        let (fail_frac, fail_se) = proportion(failures, reps.len());
        report
            .statistics
            .push(Statistic::new(format!("mle_failure_fraction_N{n}"), fail_frac, fail_se));

        if n >= BIAS_MIN_HORIZON {
            let bias = median(&m) - xi;
            let se = bootstrap_se(&m, median, BOOTSTRAP_RESAMPLES, seed);
            report
                .statistics
                .push(Statistic::new(format!("mle_median_bias_N{n}"), bias, se));
            report.checks.push(Check::statistical(
                format!("mle_median_bias_N{n}"),
                bias.abs() <= config.floors.mle_median_bias,
                bias,
                config.floors.mle_median_bias,
                se,
                format!("median(xi_hat) - xi over {} fits, {failures} failed", m.len()),
            ));
        }
    }
    report.tables.push(Table {
        name: "dispersion".into(),
        content: table,
    });

    if rm_iqrs.len() >= 2 {
        let decreasing = rm_iqrs.windows(2).all(|w| w[1].1 < w[0].1);
        let series: Vec<String> = rm_iqrs.iter().map(|(n, v, _)| format!("N={n}: {v:.4}")).collect();
        let last = rm_iqrs[rm_iqrs.len() - 1];
        let prev = rm_iqrs[rm_iqrs.len() - 2];
        report.checks.push(Check::statistical(
            "rm_iqr_strictly_decreasing",
            decreasing,
            last.1 - prev.1,
            0.0,
            last.2.hypot(prev.2),
            series.join(", "),
        ));
        let (n0, first, se0) = langlie_iqrs[0];
        let (n1, final_, se1) = langlie_iqrs[langlie_iqrs.len() - 1];
        let ratio = final_ / first;
        let ratio_se = ratio * ((se0 / first).powi(2) + (se1 / final_).powi(2)).sqrt();
        report.checks.push(Check::statistical(
            format!("langlie_iqr_ratio_N{n1}_over_N{n0}"),
            ratio >= config.floors.langlie_iqr_ratio_floor,
            ratio,
            config.floors.langlie_iqr_ratio_floor,
            ratio_se,
            format!("IQR of X_(N+1): {first:.4} at N={n0}, {final_:.4} at N={n1}"),
        ));
    }
    Ok(report)
}
