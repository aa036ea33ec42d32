use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use langlie_core::design::robbins_monro_next;
use langlie_core::harness::stats::{median, quantile};
use langlie_core::harness::{Experiment, ExperimentConfig, ExperimentReport};
use langlie_core::record::{path_rows, write_path_table, PathRow, SessionRecord};
use langlie_core::rng::substream;
use langlie_core::{fit_mle, langlie_next, run_design, Bracket, Design, RmSchedule, SensitivityModel, TrialHistory};
use langlie_service::{ServiceError, SessionStore};
use rayon::prelude::*;
use serde_json::json;

use crate::{DesignKind, EstimateArgs, ServeArgs, SimulateArgs, VerifyArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] langlie_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub const USAGE: u8 = 1;
    pub const IO: u8 = 2;
    pub const CHECK: u8 = 3;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(_) => Self::USAGE,
            CliError::Io { .. } => Self::IO,
            CliError::Service(ServiceError::Io { .. } | ServiceError::CorruptLog { .. }) => Self::IO,
            CliError::Service(_) => Self::USAGE,
            CliError::ChecksFailed(_) => Self::CHECK,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// One simulated path.
struct SimPath {
    history: TrialHistory,
    terminal: f64,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let model = SensitivityModel::new(args.family, args.alpha, args.beta)?;
    let bracket = Bracket::new(args.a, args.b)?;
    let schedule = match args.rm_scale {
        Some(c) => RmSchedule::harmonic(c)?,
        None => RmSchedule::default_for(Some(bracket)),
    };
    let design = match args.design {
        DesignKind::Langlie => Design::Langlie(bracket),
        DesignKind::Rm => Design::RobbinsMonro {
            start: bracket.midpoint(),
            schedule,
        },
    };

    let paths: Vec<SimPath> = (0..args.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(args.seed, r as u64);
            let history = run_design(&model, &design, args.n, &mut rng)?;
            let terminal = match design {
                Design::Langlie(_) => langlie_next(&history)?,
                Design::RobbinsMonro { schedule, .. } => {
                    let (x, y) = (history.x()[args.n - 1], history.y()[args.n - 1]);
                    robbins_monro_next(x, y, schedule.step(args.n))?
                }
            };
            Ok(SimPath { history, terminal })
        })
        .collect::<std::result::Result<_, langlie_core::Error>>()?;

    create_dir(&args.out)?;
    let rows: Vec<PathRow> = paths
        .iter()
        .enumerate()
        .flat_map(|(r, p)| path_rows(r as u64, p.history.x(), p.history.y()))
        .collect();
    let mut table = Vec::new();
    write_path_table(&mut table, &rows).expect("writing to memory");
    write_file(&args.out.join("paths.csv"), &table)?;

    if args.design == DesignKind::Langlie {
        let dir = args.out.join("records");
        create_dir(&dir)?;
        for (r, p) in paths.iter().enumerate() {
            let record = SessionRecord::from_history(&p.history, args.family)?;
            write_file(&dir.join(format!("replicate-{r}.json")), record.to_json().as_bytes())?;
        }
    }

    // inputs over the second half of each path, pooled
    let n = args.n;
    let late: Vec<f64> = paths
        .iter()
        .flat_map(|p| p.history.x()[n / 2..].iter().copied())
        .collect();
    let terminals: Vec<f64> = paths.iter().map(|p| p.terminal).collect();
    let final_quarter = rows
        .chunks(n)
        .filter(|path| path.iter().any(|row| 4 * row.n > 3 * n && row.n >= 2 && row.tau == 0))
        .count();
    let summary = json!({
        "design": match args.design { DesignKind::Langlie => "langlie", DesignKind::Rm => "rm" },
        "family": args.family,
        "alpha": args.alpha,
        "beta": args.beta,
        "a": args.a,
        "b": args.b,
        "n": n,
        "replicates": args.replicates,
        "seed": args.seed,
        "true_median": model.median(),
        "late_input_median": median(&late),
        "terminal_median": median(&terminals),
        "terminal_iqr": quantile(&terminals, 0.75) - quantile(&terminals, 0.25),
        "final_quarter_tau_zero_paths": final_quarter,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    text.push('\n');
    write_file(&args.out.join("summary.json"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn estimate(args: EstimateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).map_err(io_err(&args.input))?;
    let record = SessionRecord::from_json(&text)?;
    let history = record.to_history()?;
    let family = args.family.unwrap_or(record.family);
    let fit = fit_mle(&history, family)?;
    println!("{}", serde_json::to_string_pretty(&fit).expect("fit serialises"));
    Ok(())
}

/// Applies command-line overrides to an experiment configuration. A new trial
/// count drops horizons and checkpoints beyond it; one that sat at the old
/// path length moves to the new one.
fn apply_overrides(mut config: ExperimentConfig, args: &VerifyArgs) -> ExperimentConfig {
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(p) = args.p {
        config.comparison_p = Some(p);
    }
    if let Some(t) = args.trials {
        let old = config.trials;
        let rescale = |v: &mut Vec<usize>| {
            let had_end = v.contains(&old);
            v.retain(|&h| h <= t);
            if had_end && !v.contains(&t) {
                v.push(t);
            }
        };
        rescale(&mut config.horizons);
        rescale(&mut config.checkpoints);
        config.trials = t;
    }
    config
}

fn print_report(out: &mut impl Write, report: &ExperimentReport) -> io::Result<()> {
    writeln!(out, "== {} (config {})", report.experiment, &report.config_hash[..12])?;
    for c in &report.checks {
        writeln!(out, "{c}")?;
    }
    for s in &report.statistics {
        writeln!(out, "  {} = {} (se {:.3e})", s.name, s.value, s.std_error)?;
    }
    Ok(())
}

pub fn verify(args: VerifyArgs) -> Result<()> {
    let experiments = if args.experiment == "all" {
        Experiment::ALL.to_vec()
    } else {
        vec![args.experiment.parse::<Experiment>()?]
    };
    let base = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let config: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: bad config: {e}", path.display())))?;
            Some(config)
        }
        None => None,
    };
    let configs: Vec<ExperimentConfig> = experiments
        .iter()
        .map(|e| apply_overrides(base.clone().unwrap_or_else(|| e.default_config()), &args))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
    }

    let stdout = io::stdout();
    let mut failed = 0;
    for (e, config) in experiments.into_iter().zip(&configs) {
        tracing::info!(experiment = %e, "running");
        let report = e.run(config)?;
        print_report(&mut stdout.lock(), &report).map_err(io_err(Path::new("<stdout>")))?;
        if let Some(out) = &args.out {
            report.write_to(out).map_err(io_err(out))?;
        }
        failed += report.checks.iter().filter(|c| !c.passed).count();
    }
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let store = Arc::new(SessionStore::open(&args.data)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_err(Path::new("<runtime>")))?;
    runtime.block_on(run_server(store, args.bind))
}

async fn run_server(store: Arc<SessionStore>, bind: SocketAddr) -> Result<()> {
    let bind_path = PathBuf::from(bind.to_string());
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(io_err(&bind_path))?;
    let addr = listener.local_addr().map_err(io_err(&bind_path))?;
    println!("listening on http://{addr}");
    let _ = io::stdout().flush();
    tracing::info!(%addr, sessions = store.list().len(), "serving");
    langlie_service::serve(listener, store, shutdown_signal())
        .await
        .map_err(io_err(&bind_path))?;
    tracing::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
