use rayon::prelude::*;

use super::stats::proportion;
use super::{stream_id, Check, Experiment, ExperimentConfig, ExperimentReport, Statistic, Table};
use crate::error::Result;
use crate::rng::substream;
use crate::walks::{
    check_stochastic_dominance, coupled_paths_unchecked, dkw_band, langlie_comparison_p, running_max, CouplingRule,
    LangliePredictor,
};

/// Replicates that also run the plain-indicator coupling for comparison.
const INDICATOR_REPLICATES: usize = 1000;

struct CoupledSummary {
    first_violation: Option<(usize, usize)>,
    p_at: Vec<u64>,
    q_at: Vec<u64>,
    max_a: u64,
    max_b: u64,
    indicator_violated: Option<bool>,
}

/// Couples the Langlie `|S_n|` process with a reflected walk on shared
/// uniforms, then checks pathwise domination, the usual stochastic order of
/// the running maxima at each checkpoint, and the boundedness proxy
/// `P(max A <= m) <= P(max B <= m) + band`.
pub fn experiment_coupling_and_dominance(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport::new(Experiment::CouplingDominance, config);
    let p = config
        .comparison_p
        .unwrap_or_else(|| langlie_comparison_p(&config.model, config.bracket));
    let n = config.trials;
    let checkpoints = if config.checkpoints.is_empty() {
        vec![n]
    } else {
        config.checkpoints.clone()
    };

    let summaries: Vec<CoupledSummary> = (0..config.replicates)
        .into_par_iter()
        .map(|r| -> Result<CoupledSummary> {
            let process = LangliePredictor::new(config.model, config.bracket);
            let pair = coupled_paths_unchecked(
                process.clone(),
                p,
                n,
                CouplingRule::AwayFromOrigin,
                &mut substream(config.master_seed, stream_id(0, r)),
            )?;
            let pmax = running_max(&pair.a_path)?;
            let qmax = running_max(&pair.b_path)?;
            let indicator_violated = if r < INDICATOR_REPLICATES {
                let alt = coupled_paths_unchecked(
                    process,
                    p,
                    n,
                    CouplingRule::Indicator,
                    &mut substream(config.master_seed, stream_id(0, r)),
                )?;
                Some(alt.first_violation().is_some())
            } else {
                None
            };
            Ok(CoupledSummary {
                first_violation: pair.first_violation().map(|i| (r, i)),
                p_at: checkpoints.iter().map(|&c| pmax[c - 1]).collect(),
                q_at: checkpoints.iter().map(|&c| qmax[c - 1]).collect(),
                max_a: pmax[n - 1],
                max_b: qmax[n - 1],
                indicator_violated,
            })
        })
        .collect::<Result<_>>()?;

    report.statistics.push(Statistic::new("comparison_p", p, 0.0));

    let violations: Vec<(usize, usize)> = summaries.iter().filter_map(|s| s.first_violation).collect();
    let detail = match violations.first() {
        Some((r, i)) => format!("B > |S| first at replicate {r}, index {i} (p = {p})"),
        None => format!("B_n <= |S_n| on every index of every path (p = {p})"),
    };
    report
        .checks
        .push(Check::exact("pathwise_domination", violations.len(), detail));

    let indicator: Vec<bool> = summaries.iter().filter_map(|s| s.indicator_violated).collect();
    let (frac, se) = proportion(indicator.iter().filter(|&&v| v).count(), indicator.len());
    report
        .statistics
        .push(Statistic::new("plain_indicator_violation_fraction", frac, se));

    let mut table = String::from("checkpoint,max_gap,band,consistent\n");
    for (k, &c) in checkpoints.iter().enumerate() {
        let ps: Vec<f64> = summaries.iter().map(|s| s.p_at[k] as f64).collect();
        let qs: Vec<f64> = summaries.iter().map(|s| s.q_at[k] as f64).collect();
        let verdict = check_stochastic_dominance(&ps, &qs, config.confidence)?;
        table.push_str(&format!(
            "{c},{},{},{}\n",
            verdict.gap(),
            verdict.band(),
            verdict.is_consistent()
        ));
        report.checks.push(Check::statistical(
            format!("dominance_Q_le_P_n{c}"),
            verdict.is_consistent(),
            verdict.gap(),
            verdict.band(),
            verdict.band(),
            "max_x ECDF_P(x) - ECDF_Q(x) against the summed DKW bands",
        ));
    }
    report.tables.push(Table {
        name: "dominance".into(),
        content: table,
    });

    let r = summaries.len();
    let band = 2.0 * dkw_band(r, config.confidence);
    let mut table = String::from("m,p_max_a_le_m,p_max_b_le_m,band,holds\n");
    for &m in &config.thresholds {
        let pa = summaries.iter().filter(|s| s.max_a <= m).count() as f64 / r as f64;
        let pb = summaries.iter().filter(|s| s.max_b <= m).count() as f64 / r as f64;
        let holds = pa <= pb + band;
        table.push_str(&format!("{m},{pa},{pb},{band},{holds}\n"));
        report.checks.push(Check::statistical(
            format!("boundedness_proxy_m{m}"),
            holds,
            pa - pb,
            band,
            band,
            format!("P(max_(n<={n}) A_n <= {m}) - P(max B_n <= {m})"),
        ));
    }
    report.tables.push(Table {
        name: "boundedness".into(),
        content: table,
    });
    Ok(report)
}
