//! Monte Carlo experiments and the `iwfa` command-line tool.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod table;

use rand::Rng;
use thiserror::Error;

use iwfa_core::channel::{seeded_rng, ChannelError};
use iwfa_core::contraction::ContractionError;
use iwfa_core::engine::EngineError;
use iwfa_core::waterfill::WaterfillError;

pub use cli::cli_main;
pub use config::{ExperimentConfig, ExperimentKind, ScheduleChoice};
pub use experiments::{run_convergence_speed, run_probability_curves, run_sumrate_comparison};
pub use table::Table;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration, input file or command line (exit code 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure while reading or writing files (exit code 2).
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// Numerical failure inside the solver (exit code 3).
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Numeric(_) => 3,
        }
    }
}

impl From<ChannelError> for HarnessError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Format(_) | ChannelError::Json(_) | ChannelError::Invalid(_) => {
                HarnessError::Config(e.to_string())
            }
            ChannelError::Domain(_) => HarnessError::Config(e.to_string()),
        }
    }
}

macro_rules! numeric_from {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Numeric(e.to_string())
            }
        }
    )*};
}
numeric_from!(WaterfillError, ContractionError, EngineError);

/// Seed of trial `trial` at grid point `point`; independent of execution order.
pub fn trial_seed(seed: u64, point: usize, trial: usize) -> u64 {
    seeded_rng(seed, ((point as u64) << 32) | trial as u64).random()
}

/// Worker count: `IWFA_THREADS` if set and positive, else rayon's default.
pub fn worker_count() -> usize {
    std::env::var("IWFA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs `f` on a pool capped by [`worker_count`].
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
