use rayon::prelude::*;

use super::stats::{mean_se, median, proportion};
use super::{stream_id, Check, Experiment, ExperimentConfig, ExperimentReport, Statistic, Table};
use crate::design::LanglieState;
use crate::error::Result;
use crate::record::{path_rows, write_path_table};
use crate::rng::substream;

struct PathSummary {
    prop1_exceptions: usize,
    replay_ok: bool,
    late_median: f64,
    final_quarter_tau_zero: bool,
    tau_zero_count: usize,
    table: Option<Vec<u8>>,
}

/// Sample paths of `X_n` and `S_n` with the zero-balance indices flagged,
/// one path set per horizon.
pub fn experiment_figure_paths(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport::new(Experiment::FigurePaths, config);
    let xi = config.model.quantile(config.quantile)?;
    let horizons = if config.horizons.is_empty() {
        vec![config.trials]
    } else {
        config.horizons.clone()
    };
    let emit = config.emit_paths.unwrap_or(config.replicates);
    let mut prop1_total = 0;
    let mut replay_failures = 0;
    let largest = horizons.iter().copied().max().unwrap_or(config.trials);

    for (run, &n) in horizons.iter().enumerate() {
        let paths: Vec<PathSummary> = (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(config.master_seed, stream_id(run, r));
                let mut st = LanglieState::with_capacity(config.bracket, n);
                for _ in 0..n {
                    let y = config.model.draw_outcome(st.next_input(), &mut rng);
                    st.record(y);
                }
                let rows = path_rows(r as u64, st.x(), st.y());
                let prop1_exceptions = rows
                    .iter()
                    .filter(|row| row.n >= 2 && (row.tau == 0) != row.is_new_value)
                    .count();
                let late: Vec<f64> = rows.iter().filter(|row| 2 * row.n > n).map(|row| row.x).collect();
                let final_quarter_tau_zero = rows.iter().any(|row| 4 * row.n > 3 * n && row.tau == 0);
                let tau_zero_count = rows.iter().filter(|row| row.n >= 2 && row.tau == 0).count();
                let table = (r < emit).then(|| {
                    let mut buf = Vec::new();
                    write_path_table(&mut buf, &rows).expect("write to Vec");
                    buf
                });
                PathSummary {
                    prop1_exceptions,
                    replay_ok: st.into_history().validate_langlie().is_ok(),
                    late_median: median(&late),
                    final_quarter_tau_zero,
                    tau_zero_count,
                    table,
                }
            })
            .collect();

        prop1_total += paths.iter().map(|p| p.prop1_exceptions).sum::<usize>();
        replay_failures += paths.iter().filter(|p| !p.replay_ok).count();

        let medians: Vec<f64> = paths.iter().map(|p| p.late_median).collect();
        let (mean_med, se_med) = mean_se(&medians);
        let offset = (mean_med - xi).abs();
        report
            .statistics
            .push(Statistic::new(format!("late_median_mean_N{n}"), mean_med, se_med));
        report.checks.push(Check::statistical(
            format!("late_median_offset_N{n}"),
            offset <= config.floors.figure_median_tolerance,
            offset,
            config.floors.figure_median_tolerance,
            se_med,
            format!("mean over paths of median(X_n, n > N/2) vs xi = {xi}"),
        ));

        let counts: Vec<f64> = paths.iter().map(|p| p.tau_zero_count as f64).collect();
        let (mean_cnt, se_cnt) = mean_se(&counts);
        report
            .statistics
            .push(Statistic::new(format!("tau_zero_per_path_N{n}"), mean_cnt, se_cnt));

        let k = paths.iter().filter(|p| p.final_quarter_tau_zero).count();
        let (frac, se) = proportion(k, paths.len());
        report.statistics.push(Statistic::new(
            format!("final_quarter_tau_zero_fraction_N{n}"),
            frac,
            se,
        ));
        if n == largest {
            report.checks.push(Check::statistical(
                format!("final_quarter_tau_zero_N{n}"),
                frac >= config.floors.figure_final_quarter_floor,
                frac,
                config.floors.figure_final_quarter_floor,
                se,
                "fraction of paths with tau_n = 0 for some n > 3N/4",
            ));
        }

        let mut content = Vec::new();
        let mut first = true;
        for table in paths.iter().filter_map(|p| p.table.as_ref()) {
            // keep a single header
            let body = if first { &table[..] } else { skip_line(table) };
            content.extend_from_slice(body);
            first = false;
        }
        report.tables.push(Table {
            name: format!("paths_N{n}"),
            content: String::from_utf8(content).expect("ascii table"),
        });
    }

    report.checks.insert(
        0,
        Check::exact(
            "prop1_tau_zero_iff_new_value",
            prop1_total,
            "rows with n >= 2 where (tau_n = 0) differs from S_n being a new value",
        ),
    );
    report.checks.insert(
        1,
        Check::exact(
            "langlie_replay",
            replay_failures,
            "paths whose inputs differ from a replay",
        ),
    );
    Ok(report)
}

fn skip_line(buf: &[u8]) -> &[u8] {
    match buf.iter().position(|&c| c == b'\n') {
        Some(i) => &buf[i + 1..],
        None => &[],
    }
}
