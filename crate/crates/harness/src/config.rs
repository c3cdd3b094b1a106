//! Experiment configuration files.

use std::path::{Path, PathBuf};

use iwfa_core::channel::Antennas;
use iwfa_core::contraction::Weights;
use iwfa_core::engine::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use iwfa_core::waterfill::Game;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// Which schedule drives the IWFA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleChoice {
    #[value(name = "seq", alias = "sequential")]
    #[serde(alias = "sequential")]
    Seq,
    #[default]
    #[value(name = "sim", alias = "simultaneous")]
    #[serde(alias = "simultaneous")]
    Sim,
    #[value(name = "async")]
    Async,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Probability that the uniqueness conditions hold on the hexagonal
    /// multicell layout, versus MT position `d`.
    ProbabilityCurves {
        d_grid: Vec<f64>,
        antennas: Vec<Antennas>,
        #[serde(default = "default_snr_fig1")]
        snr_db: f64,
        #[serde(default = "default_path_loss_fig1")]
        path_loss: f64,
        /// `Δ` samples per trial for rows of tall users.
        #[serde(default = "default_samples")]
        samples: usize,
        /// Multiplier on every cross channel (0 decouples the links).
        #[serde(default = "one")]
        cross_scale: f64,
    },
    /// NE sum-rate of the original and the modified game on an i.i.d.
    /// Rayleigh channel with cross variance `ratio^(−γ)`.
    SumrateComparison {
        ratios: Vec<f64>,
        antennas: Vec<Antennas>,
        #[serde(default = "three")]
        users: usize,
        #[serde(default = "default_snr_fig2")]
        snr_db: f64,
        #[serde(default = "default_path_loss_fig2")]
        path_loss: f64,
        /// Number of thresholds of the exceedance table.
        #[serde(default = "default_thresholds")]
        thresholds: usize,
        #[serde(default)]
        schedule: ScheduleChoice,
        #[serde(default = "one")]
        cross_scale: f64,
    },
    /// Per-iteration rates of sequential vs simultaneous IWFA on FIR wideband
    /// channels whose average link gains come from the hexagonal layout.
    ConvergenceSpeed {
        #[serde(default = "three")]
        users: usize,
        antennas: Vec<Antennas>,
        #[serde(default = "default_subcarriers")]
        subcarriers: usize,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_snr_fig3")]
        snr_db: f64,
        #[serde(default = "default_d_fig3")]
        d: f64,
        #[serde(default = "default_path_loss_fig1")]
        path_loss: f64,
        /// Rows emitted per schedule and user (iterations `0..=iterations`).
        #[serde(default = "default_plot_iterations")]
        iterations: usize,
    },
    /// Certificates of one channel file.
    Certify {
        channel: PathBuf,
        #[serde(default)]
        weights: Weights,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// IWFA on one channel file.
    Solve {
        channel: PathBuf,
        #[serde(default)]
        schedule: ScheduleChoice,
        #[serde(default)]
        staleness: usize,
        #[serde(default)]
        game: Game,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Report rates in bits instead of nats.
    #[serde(default)]
    pub bits: bool,
    /// Output directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_snr_fig1() -> f64 {
    5.0
}
fn default_snr_fig2() -> f64 {
    3.0
}
fn default_snr_fig3() -> f64 {
    7.0
}
fn default_path_loss_fig1() -> f64 {
    2.0
}
fn default_path_loss_fig2() -> f64 {
    2.5
}
fn default_samples() -> usize {
    100
}
fn default_thresholds() -> usize {
    41
}
fn default_subcarriers() -> usize {
    16
}
fn default_order() -> usize {
    6
}
fn default_d_fig3() -> f64 {
    0.3
}
fn default_plot_iterations() -> usize {
    40
}
fn default_trials() -> usize {
    200
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn one() -> f64 {
    1.0
}
fn three() -> usize {
    3
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            experiment: kind,
            seed,
            trials: default_trials(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            bits: false,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(format!("malformed config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        let check_antennas = |a: &[Antennas]| {
            if a.is_empty() {
                return Err(invalid("antenna grid is empty"));
            }
            if a.iter().any(|x| x.n_t == 0 || x.n_r == 0) {
                return Err(invalid("antenna counts must be at least 1"));
            }
            Ok(())
        };
        match &self.experiment {
            ExperimentKind::ProbabilityCurves { d_grid, antennas, cross_scale, .. } => {
                check_antennas(antennas)?;
                if d_grid.is_empty() {
                    return Err(invalid("d_grid is empty"));
                }
                if d_grid.iter().any(|d| !(0.0..1.0).contains(d)) {
                    return Err(invalid("every d must lie in [0, 1)"));
                }
                if !(*cross_scale >= 0.0) {
                    return Err(invalid("cross_scale must be non-negative"));
                }
            }
            ExperimentKind::SumrateComparison { ratios, antennas, users, thresholds, cross_scale, .. } => {
                check_antennas(antennas)?;
                if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0)) {
                    return Err(invalid("ratios must be a nonempty list of positive numbers"));
                }
                if *users == 0 || *thresholds < 2 {
                    return Err(invalid("need at least one user and two thresholds"));
                }
                if !(*cross_scale >= 0.0) {
                    return Err(invalid("cross_scale must be non-negative"));
                }
            }
            ExperimentKind::ConvergenceSpeed { users, antennas, subcarriers, order, d, .. } => {
                check_antennas(antennas)?;
                if *users == 0 || *users > iwfa_core::channel::HEX_CELLS {
                    return Err(invalid("users must be between 1 and 7"));
                }
                if *subcarriers == 0 || order + 1 > *subcarriers {
                    return Err(invalid("need order + 1 <= subcarriers"));
                }
                if !(0.0..1.0).contains(d) {
                    return Err(invalid("d must lie in [0, 1)"));
                }
            }
            ExperimentKind::Certify { weights, .. } => {
                if let Weights::Custom(w) = weights {
                    if w.iter().any(|x| !(*x > 0.0)) {
                        return Err(invalid("weights must be positive"));
                    }
                }
            }
            ExperimentKind::Solve { .. } => {}
        }
        Ok(())
    }

    /// Short name used for output files.
    pub fn kind_name(&self) -> &'static str {
        match self.experiment {
            ExperimentKind::ProbabilityCurves { .. } => "probability_curves",
            ExperimentKind::SumrateComparison { .. } => "sumrate_comparison",
            ExperimentKind::ConvergenceSpeed { .. } => "convergence_speed",
            ExperimentKind::Certify { .. } => "certify",
            ExperimentKind::Solve { .. } => "solve",
        }
    }
}
