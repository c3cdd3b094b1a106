//! `iwfa` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use iwfa_core::contraction::Weights;
use iwfa_core::engine::{IwfaOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use iwfa_core::waterfill::Game;

use crate::config::{ExperimentConfig, ScheduleChoice};
use crate::experiments::{certify, load_channel, run_experiment, scale_rates, solve, write_outputs, Outputs};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "iwfa", version, about = "Iterative waterfilling for MIMO interference channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GameArg {
    Original,
    Modified,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightsArg {
    Ones,
    Perron,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the uniqueness and convergence certificates of a channel file.
    Certify {
        channel: PathBuf,
        #[arg(long, value_enum, default_value = "ones")]
        weights: WeightsArg,
        /// Random Δ samples for the lower estimate on tall users.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write report.json into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the IWFA on a channel file from uniform power.
    Solve {
        channel: PathBuf,
        #[arg(long, value_enum, default_value = "sim")]
        schedule: ScheduleChoice,
        /// Maximum staleness B of the asynchronous schedule.
        #[arg(long, default_value_t = 0)]
        staleness: usize,
        #[arg(long, value_enum, default_value = "original")]
        game: GameArg,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Report rates in bits instead of nats.
        #[arg(long)]
        bits: bool,
        /// Write trace.csv and trace.json into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment described by a JSON config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long = "max-iter")]
        max_iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command. Returns
/// 0 on success, 2 on usage, configuration or I/O errors and 3 on numerical
/// failures.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("iwfa: {e}");
            e.exit_code()
        }
    }
}

fn emit(outputs: &Outputs, out: Option<PathBuf>, stdout_file: usize) -> Result<(), HarnessError> {
    match out {
        Some(dir) => {
            for p in write_outputs(outputs, &dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(outputs.files[stdout_file].1.as_bytes())
                .map_err(|e| HarnessError::Io { path: "<stdout>".into(), source: e })?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Certify { channel, weights, samples, seed, out } => {
            let ch = load_channel(&channel)?;
            let weights = match weights {
                WeightsArg::Ones => Weights::Ones,
                WeightsArg::Perron => Weights::Perron,
            };
            let report = certify(&ch, weights, samples, seed)?;
            emit(&Outputs { files: vec![("report.json".into(), report.to_json() + "\n")] }, out, 0)
        }
        Command::Solve { channel, schedule, staleness, game, tol, max_iter, seed, format, bits, out } => {
            if !(tol > 0.0) || max_iter == 0 {
                return Err(HarnessError::Config("tol must be positive and max-iter at least 1".into()));
            }
            let ch = load_channel(&channel)?;
            let game = match game {
                GameArg::Original => Game::Original,
                GameArg::Modified => Game::Modified,
            };
            let opts = IwfaOptions { tol, max_iter, ..Default::default() };
            let mut trace = solve(&ch, schedule, staleness, game, &opts, seed)?;
            if bits {
                scale_rates(&mut trace, 1.0 / std::f64::consts::LN_2);
            }
            if !trace.converged {
                eprintln!(
                    "iwfa: not converged after {} iterations (residual {:e}{})",
                    trace.iterations,
                    trace.final_residual(),
                    if trace.limit_cycle { ", limit cycle suspected" } else { "" }
                );
            }
            let outputs =
                Outputs { files: vec![("trace.csv".into(), trace.to_csv()), ("trace.json".into(), trace.to_json() + "\n")] };
            let pick = match format {
                Format::Csv => 0,
                Format::Json => 1,
            };
            emit(&outputs, out, pick)
        }
        Command::Experiment { config, seed, trials, tol, max_iter, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(t) = tol {
                cfg.tol = t;
            }
            if let Some(m) = max_iter {
                cfg.max_iter = m;
            }
            cfg.validate()?;
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
            let outputs = run_experiment(&cfg)?;
            emit(&outputs, Some(dir), 0)
        }
    }
}
