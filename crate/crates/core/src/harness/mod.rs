//! Reproducible Monte Carlo experiments.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: replicate
//! `r` draws from its own substream of the master seed, replicates may run in
//! parallel, and aggregation folds results in replicate order. "Infinitely
//! often" and "bounded" are not observable in finite time, so each is replaced
//! by a stated finite-horizon proxy.

mod coupling;
mod estimators;
mod figure;
mod recurrence;
pub mod stats;

pub use coupling::experiment_coupling_and_dominance;
pub use estimators::experiment_estimator_comparison;
pub use figure::experiment_figure_paths;
pub use recurrence::{experiment_jump_lower_bound, experiment_tau_recurrence};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::SensitivityModel;
use crate::rng::DEFAULT_SEED;
use crate::trials::Bracket;

/// Frozen regression bounds, see `config/floors.toml`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    pub figure_median_tolerance: f64,
    pub figure_final_quarter_floor: f64,
    pub tau_window_floor: f64,
    pub late_deviation_floor: f64,
    pub langlie_iqr_ratio_floor: f64,
    pub mle_median_bias: f64,
}

const FLOORS_TOML: &str = include_str!("../../config/floors.toml");

impl Default for Floors {
    fn default() -> Self {
        toml::from_str(FLOORS_TOML).expect("embedded floors.toml parses")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FigurePaths,
    TauRecurrence,
    JumpBound,
    CouplingDominance,
    EstimatorComparison,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::FigurePaths,
        Experiment::TauRecurrence,
        Experiment::JumpBound,
        Experiment::CouplingDominance,
        Experiment::EstimatorComparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FigurePaths => "figure-paths",
            Experiment::TauRecurrence => "tau-recurrence",
            Experiment::JumpBound => "jump-bound",
            Experiment::CouplingDominance => "coupling-dominance",
            Experiment::EstimatorComparison => "estimator-comparison",
        }
    }

    /// Default configuration at the figure parameters.
    pub fn default_config(self) -> ExperimentConfig {
        let base = ExperimentConfig::figure_defaults();
        match self {
            Experiment::FigurePaths => ExperimentConfig {
                trials: 1000,
                replicates: 100,
                horizons: vec![50, 1000],
                ..base
            },
            Experiment::TauRecurrence => ExperimentConfig {
                trials: 1600,
                replicates: 10_000,
                horizons: vec![200, 400, 800, 1600],
                ..base
            },
            Experiment::JumpBound => ExperimentConfig {
                trials: 1600,
                replicates: 10_000,
                ..base
            },
            Experiment::CouplingDominance => ExperimentConfig {
                trials: 10_000,
                replicates: 10_000,
                checkpoints: vec![1, 100, 1000, 10_000],
                ..base
            },
            Experiment::EstimatorComparison => ExperimentConfig {
                trials: 10_000,
                replicates: 1000,
                horizons: vec![100, 1000, 10_000],
                ..base
            },
        }
    }

    pub fn run(self, config: &ExperimentConfig) -> Result<ExperimentReport> {
        match self {
            Experiment::FigurePaths => experiment_figure_paths(config),
            Experiment::TauRecurrence => experiment_tau_recurrence(config),
            Experiment::JumpBound => experiment_jump_lower_bound(config),
            Experiment::CouplingDominance => experiment_coupling_and_dominance(config),
            Experiment::EstimatorComparison => experiment_estimator_comparison(config),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: SensitivityModel,
    pub bracket: Bracket,
    /// Trials per simulated path.
    pub trials: usize,
    pub replicates: usize,
    pub master_seed: u64,
    /// Quantile level `q` under study.
    pub quantile: f64,
    /// Path lengths or window ends, depending on the experiment.
    pub horizons: Vec<usize>,
    /// Indices at which running maxima are compared.
    pub checkpoints: Vec<usize>,
    /// Levels `m` for the boundedness proxy.
    pub thresholds: Vec<u64>,
    pub confidence: f64,
    /// Up-step probability of the comparison walk; defaults to
    /// `0.99 * min{F(a), 1 - F(a), F(b), 1 - F(b)}`.
    pub comparison_p: Option<f64>,
    /// Robbins-Monro step scale; defaults to `(b - a) / 2`.
    pub rm_scale: Option<f64>,
    /// Cap on the number of paths written to path tables.
    pub emit_paths: Option<usize>,
    pub floors: Floors,
}

impl ExperimentConfig {
    /// Probit `(3.333, 9.999)` on the bracket `(-1.5, 1.5)`.
    pub fn figure_defaults() -> Self {
        Self {
            model: SensitivityModel::probit(3.333, 9.999).expect("valid model"),
            bracket: Bracket::new(-1.5, 1.5).expect("valid bracket"),
            trials: 1000,
            replicates: 100,
            master_seed: DEFAULT_SEED,
            quantile: 0.5,
            horizons: Vec::new(),
            checkpoints: Vec::new(),
            thresholds: (2..=10).collect(),
            confidence: 0.99,
            comparison_p: None,
            rm_scale: None,
            emit_paths: None,
            floors: Floors::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        Bracket::new(self.bracket.a, self.bracket.b)?;
        if self.replicates < 1 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.trials < 2 {
            return Err(Error::InvalidParameter("trials per path must be at least 2".into()));
        }
        let xi = self.model.quantile(self.quantile)?;
        if !self.bracket.contains_strictly(xi) {
            return Err(Error::InvalidParameter(format!(
                "quantile {xi} of level {} lies outside ({}, {})",
                self.quantile, self.bracket.a, self.bracket.b
            )));
        }
        if let Some(&h) = self.horizons.iter().find(|&&h| h < 2 || h > self.trials) {
            return Err(Error::InvalidParameter(format!(
                "horizon {h} outside [2, {}]",
                self.trials
            )));
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c < 1 || c > self.trials) {
            return Err(Error::InvalidParameter(format!(
                "checkpoint {c} outside [1, {}]",
                self.trials
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex_digest(&json)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Pass/fail verdict for one property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Exact checks admit zero exceptions; statistical ones compare a Monte
    /// Carlo estimate against a frozen bound.
    pub exact: bool,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    /// Monte Carlo standard error or confidence band of `observed`.
    pub band: Option<f64>,
    pub detail: String,
}

impl Check {
    pub fn exact(name: impl Into<String>, exceptions: usize, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            exact: true,
            passed: exceptions == 0,
            observed: exceptions as f64,
            threshold: 0.0,
            band: None,
            detail: detail.into(),
        }
    }

    pub fn statistical(
        name: impl Into<String>,
        passed: bool,
        observed: f64,
        threshold: f64,
        band: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            exact: false,
            passed,
            observed,
            threshold,
            band: Some(band),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {}: observed {}", self.name, self.observed)?;
        if let Some(b) = self.band {
            write!(f, " (band {b:.3e})")?;
        }
        write!(f, ", threshold {}", self.threshold)?;
        if !self.detail.is_empty() {
            write!(f, " - {}", self.detail)?;
        }
        Ok(())
    }
}

/// Reported quantity with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

impl Statistic {
    pub fn new(name: impl Into<String>, value: f64, std_error: f64) -> Self {
        Self {
            name: name.into(),
            value,
            std_error,
        }
    }
}

/// Delimiter-separated table emitted alongside a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub statistics: Vec<Statistic>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    fn new(experiment: Experiment, config: &ExperimentConfig) -> Self {
        Self {
            experiment,
            config_hash: config.hash(),
            config: config.clone(),
            checks: Vec::new(),
            statistics: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn statistic(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.name == name)
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Writes `<dir>/<experiment>/{summary.json, <table>.csv..., manifest.json}`.
    pub fn write_to(&self, dir: &Path) -> io::Result<Manifest> {
        let sub = dir.join(self.experiment.name());
        fs::create_dir_all(&sub)?;
        let mut files = Vec::new();
        let mut emit = |name: String, bytes: &[u8]| -> io::Result<()> {
            fs::write(sub.join(&name), bytes)?;
            files.push(ManifestEntry {
                path: PathBuf::from(self.experiment.name()).join(&name),
                bytes: bytes.len(),
                sha256: hex_digest(bytes),
            });
            Ok(())
        };
        emit("summary.json".into(), self.summary_json().as_bytes())?;
        for t in &self.tables {
            emit(format!("{}.csv", t.name), t.content.as_bytes())?;
        }
        let manifest = Manifest {
            experiment: self.experiment,
            config_hash: self.config_hash.clone(),
            files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        fs::write(sub.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
}

/// Substream id for replicate `r` of sub-run `run`.
fn stream_id(run: usize, r: usize) -> u64 {
    ((run as u64) << 32) | r as u64
}
