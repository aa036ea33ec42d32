use rayon::prelude::*;

use super::stats::{mean_se, proportion};
use super::{stream_id, Check, Experiment, ExperimentConfig, ExperimentReport, Statistic, Table};
use crate::design::LanglieState;
use crate::error::Result;
use crate::rng::substream;

struct TauPath {
    /// Indices `n >= 2` with `tau_n = 0`.
    zero_indices: Vec<usize>,
    prop1_exceptions: usize,
}

/// Simulates one Langlie path, returning the zero-balance indices and the
/// number of indices where `tau_n = 0` disagrees with `S_n` leaving the range
/// of earlier sums.
fn tau_path(config: &ExperimentConfig, r: usize) -> TauPath {
    let mut rng = substream(config.master_seed, stream_id(0, r));
    let mut st = LanglieState::with_capacity(config.bracket, config.trials);
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    let mut zero_indices = Vec::new();
    let mut prop1_exceptions = 0;
    for n in 1..=config.trials {
        let y = config.model.draw_outcome(st.next_input(), &mut rng);
        let tau = st.record(y);
        let s = st.cumulative_sum();
        if n >= 2 {
            let new_value = s < lo || s > hi;
            if (tau == 0) != new_value {
                prop1_exceptions += 1;
            }
            if tau == 0 {
                zero_indices.push(n);
            }
        }
        lo = lo.min(s);
        hi = hi.max(s);
    }
    TauPath {
        zero_indices,
        prop1_exceptions,
    }
}

/// Fraction of paths with at least one zero balance index in `[N/2, N]`,
/// for each horizon `N`. A finite-horizon stand-in for "infinitely often".
pub fn experiment_tau_recurrence(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport::new(Experiment::TauRecurrence, config);
    let paths: Vec<TauPath> = (0..config.replicates)
        .into_par_iter()
        .map(|r| tau_path(config, r))
        .collect();

    let exceptions: usize = paths.iter().map(|p| p.prop1_exceptions).sum();
    report.checks.push(Check::exact(
        "prop1_tau_zero_iff_new_value",
        exceptions,
        "indices where (tau_n = 0) differs from S_n being a new value",
    ));

    let horizons = if config.horizons.is_empty() {
        vec![config.trials]
    } else {
        config.horizons.clone()
    };
    let mut table = String::from("horizon,window_lo,window_hi,fraction,std_error\n");
    for &n in &horizons {
        let lo = n / 2;
        let k = paths
            .iter()
            .filter(|p| p.zero_indices.iter().any(|&i| i >= lo && i <= n))
            .count();
        let (frac, se) = proportion(k, paths.len());
        table.push_str(&format!("{n},{lo},{n},{frac},{se}\n"));
        report
            .statistics
            .push(Statistic::new(format!("window_fraction_N{n}"), frac, se));
        report.checks.push(Check::statistical(
            format!("tau_zero_window_N{n}"),
            frac >= config.floors.tau_window_floor,
            frac,
            config.floors.tau_window_floor,
            se,
            format!("fraction of paths with tau_n = 0 for some n in [{lo}, {n}]"),
        ));
    }
    report.tables.push(Table {
        name: "window_fractions".into(),
        content: table,
    });
    Ok(report)
}

struct JumpPath {
    antecedents: usize,
    exceptions: usize,
    late_deviations: usize,
}

/// Checks that whenever `tau_n = 0` and `|X_n - xi| < eps`, the next input
/// jumps to `|X_{n+1} - xi| > eps`, with `eps = min{(xi - a)/2, (b - xi)/2} / 2`,
/// and counts late large deviations (`n >= N/2`).
pub fn experiment_jump_lower_bound(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport::new(Experiment::JumpBound, config);
    let xi = config.model.quantile(config.quantile)?;
    let (a, b) = (config.bracket.a, config.bracket.b);
    let eps = ((xi - a) / 2.0).min((b - xi) / 2.0) / 2.0;
    let n_max = config.trials;

    let paths: Vec<JumpPath> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.master_seed, stream_id(0, r));
            let mut st = LanglieState::with_capacity(config.bracket, n_max);
            let mut out = JumpPath {
                antecedents: 0,
                exceptions: 0,
                late_deviations: 0,
            };
            for n in 1..=n_max {
                let x_n = st.next_input();
                let y = config.model.draw_outcome(x_n, &mut rng);
                let tau = st.record(y);
                let x_next = st.next_input();
                if tau == 0 && (x_n - xi).abs() < eps {
                    out.antecedents += 1;
                    if (x_next - xi).abs() <= eps || x_next.is_nan() {
                        out.exceptions += 1;
                    }
                }
                if 2 * n >= n_max && (x_next - xi).abs() > eps {
                    out.late_deviations += 1;
                }
            }
            out
        })
        .collect();

    let antecedents: usize = paths.iter().map(|p| p.antecedents).sum();
    let exceptions: usize = paths.iter().map(|p| p.exceptions).sum();
    report.checks.push(Check::exact(
        "jump_implication",
        exceptions,
        format!("(tau_n = 0 and |X_n - xi| < eps) => |X_(n+1) - xi| > eps, eps = {eps}, {antecedents} antecedents"),
    ));
    report
        .statistics
        .push(Statistic::new("implication_antecedents", antecedents as f64, 0.0));
    report.statistics.push(Statistic::new("epsilon", eps, 0.0));

    let late: Vec<f64> = paths.iter().map(|p| p.late_deviations as f64).collect();
    let (mean_late, se_late) = mean_se(&late);
    report
        .statistics
        .push(Statistic::new("late_deviations_per_path", mean_late, se_late));
    let k = paths.iter().filter(|p| p.late_deviations > 0).count();
    let (frac, se) = proportion(k, paths.len());
    report
        .statistics
        .push(Statistic::new("late_deviation_path_fraction", frac, se));
    report.checks.push(Check::statistical(
        "late_large_deviation_fraction",
        frac >= config.floors.late_deviation_floor,
        frac,
        config.floors.late_deviation_floor,
        se,
        format!(
            "fraction of paths with |X_(n+1) - xi| > eps for some n >= {}",
            n_max / 2
        ),
    ));
    Ok(report)
}
