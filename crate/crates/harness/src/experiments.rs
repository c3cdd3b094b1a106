//! Monte Carlo drivers (probability curves, sum-rate comparison, convergence
//! speed) plus the single-channel `certify` and `solve` runs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use iwfa_core::channel::{
    db_to_linear, generate_fir_wideband, generate_hex_scenario, generate_iid_rayleigh, hex_link_variances,
    Antennas, FirWideband, HexScenario, IidRayleigh, InterferenceChannel, HEX_CELLS,
};
use iwfa_core::contraction::{check_conditions, reduce_rank_deficient, CheckOptions, ContractionReport, Weights};
use iwfa_core::engine::{run_iwfa, sum_rate, IterationTrace, IwfaOptions, Schedule};
use iwfa_core::waterfill::{CovarianceProfile, Game};

use crate::config::{ExperimentConfig, ExperimentKind, ScheduleChoice};
use crate::table::{fmt, io_err, Table};
use crate::{trial_seed, with_pool, HarnessError, VERSION};

type Result<T> = std::result::Result<T, HarnessError>;

fn provenance(cfg: &ExperimentConfig, table: &mut Table) {
    table.comment(format!("iwfa-harness {VERSION}"));
    table.comment(format!("experiment: {}", cfg.kind_name()));
    table.comment(format!("seed: {}", cfg.seed));
    table.comment(format!("config_sha256: {}", cfg.hash()));
    table.comment(format!("rate_unit: {}", if cfg.bits { "bits" } else { "nats" }));
}

fn unit(cfg: &ExperimentConfig) -> f64 {
    if cfg.bits { 1.0 / std::f64::consts::LN_2 } else { 1.0 }
}

fn wrong_kind(expected: &str) -> HarnessError {
    HarnessError::Config(format!("expected a {expected} config"))
}

pub fn build_schedule(choice: ScheduleChoice, users: usize, horizon: usize, staleness: usize, seed: u64) -> Schedule {
    match choice {
        ScheduleChoice::Seq => Schedule::sequential(users, horizon),
        ScheduleChoice::Sim => Schedule::simultaneous(users, horizon),
        ScheduleChoice::Async => Schedule::random_async(users, horizon, staleness, seed),
    }
}

fn par_trials<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    with_pool(|| (0..n).into_par_iter().map(&f).collect())
}

/// Fraction of trials satisfying C1 and C2 on the hexagonal layout, per
/// `(d, antennas)` grid point. Columns: `d,nT,nR,P_C1,P_C2,trials,seed`.
///
/// `P_C1` is exact for fat/square users; rows of tall users use the sampled
/// lower estimate.
pub fn run_probability_curves(cfg: &ExperimentConfig) -> Result<Table> {
    let ExperimentKind::ProbabilityCurves { d_grid, antennas, snr_db, path_loss, samples, cross_scale } =
        &cfg.experiment
    else {
        return Err(wrong_kind("probability_curves"));
    };
    let mut table = Table::new(&["d", "nT", "nR", "P_C1", "P_C2", "trials", "seed"]);
    provenance(cfg, &mut table);
    let mut point = 0;
    for &d in d_grid {
        for &ant in antennas {
            let flags = par_trials(cfg.trials, |t| {
                let seed = trial_seed(cfg.seed, point, t);
                let scenario = HexScenario { d, antennas: ant, snr: db_to_linear(*snr_db), path_loss: *path_loss, seed };
                let mut ch = generate_hex_scenario(&scenario)?;
                if *cross_scale != 1.0 {
                    ch = ch.with_cross_scale(*cross_scale)?;
                }
                let rep = check_conditions(&ch, &CheckOptions { weights: Weights::Ones, samples: *samples, seed })?;
                Ok((rep.c1_estimate, rep.c2))
            })?;
            let n = cfg.trials as f64;
            let c1 = flags.iter().filter(|f| f.0).count() as f64 / n;
            let c2 = flags.iter().filter(|f| f.1).count() as f64 / n;
            table.push(vec![
                fmt(d),
                ant.n_t.to_string(),
                ant.n_r.to_string(),
                fmt(c1),
                fmt(c2),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
            ]);
            point += 1;
        }
    }
    Ok(table)
}

/// Outcome of one sum-rate trial.
#[derive(Debug, Clone, Copy)]
struct SumrateTrial {
    original: Option<f64>,
    modified: Option<f64>,
}

/// Mean NE sum-rate of both games per `(ratio, antennas)`, and the exceedance
/// probabilities. Trials are drawn until `trials` of them converge for both
/// games (at most `10 · trials` attempts); the rest are excluded and counted.
pub fn run_sumrate_comparison(cfg: &ExperimentConfig) -> Result<(Table, Table)> {
    let ExperimentKind::SumrateComparison {
        ratios,
        antennas,
        users,
        snr_db,
        path_loss,
        thresholds,
        schedule,
        cross_scale,
    } = &cfg.experiment
    else {
        return Err(wrong_kind("sumrate_comparison"));
    };
    if let Some(a) = antennas.iter().find(|a| a.n_t > a.n_r) {
        return Err(HarnessError::Config(format!(
            "the modified game needs n_T <= n_R, got ({}, {})",
            a.n_t, a.n_r
        )));
    }
    let mut summary = Table::new(&[
        "ratio",
        "nT",
        "nR",
        "mean_sum_rate_original",
        "mean_sum_rate_modified",
        "rel_diff",
        "converged_trials",
        "excluded_trials",
        "trials",
        "seed",
    ]);
    let mut exceed = Table::new(&["ratio", "nT", "nR", "threshold", "p_exceed_original", "p_exceed_modified"]);
    provenance(cfg, &mut summary);
    provenance(cfg, &mut exceed);
    let opts = IwfaOptions { tol: cfg.tol, max_iter: cfg.max_iter, stop_on_limit_cycle: true, ..Default::default() };
    let scale = unit(cfg);
    let mut point = 0;
    for &ratio in ratios {
        for &ant in antennas {
            let cross_gain = ratio.powf(-path_loss) * cross_scale * cross_scale;
            let trial = |t: usize| -> Result<SumrateTrial> {
                let seed = trial_seed(cfg.seed, point, t);
                let ch = generate_iid_rayleigh(&IidRayleigh {
                    antennas: vec![ant; *users],
                    cross_gain,
                    power: db_to_linear(*snr_db),
                    noise_var: 1.0,
                    seed,
                })?;
                let init = CovarianceProfile::uniform(&ch);
                let solve = |game: Game| -> Result<Option<f64>> {
                    let s = build_schedule(*schedule, *users, cfg.max_iter, 0, seed);
                    let tr = run_iwfa(&ch, &s, &init, game, &opts)?;
                    Ok(if tr.converged { Some(sum_rate(&ch, &tr.final_profile)? * scale) } else { None })
                };
                Ok(SumrateTrial { original: solve(Game::Original)?, modified: solve(Game::Modified)? })
            };
            let mut kept: Vec<(f64, f64)> = Vec::new();
            let mut excluded = 0;
            let mut attempted = 0;
            while kept.len() < cfg.trials && attempted < 10 * cfg.trials {
                let batch = (cfg.trials - kept.len()).min(10 * cfg.trials - attempted);
                let results = par_trials(batch, |i| trial(attempted + i))?;
                attempted += batch;
                for r in results {
                    if kept.len() == cfg.trials {
                        break;
                    }
                    match (r.original, r.modified) {
                        (Some(a), Some(b)) => kept.push((a, b)),
                        _ => excluded += 1,
                    }
                }
            }
            let n = kept.len() as f64;
            let mean_a = kept.iter().map(|k| k.0).sum::<f64>() / n;
            let mean_b = kept.iter().map(|k| k.1).sum::<f64>() / n;
            summary.push(vec![
                fmt(ratio),
                ant.n_t.to_string(),
                ant.n_r.to_string(),
                fmt(mean_a),
                fmt(mean_b),
                fmt((mean_a - mean_b).abs() / mean_a),
                kept.len().to_string(),
                excluded.to_string(),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
            ]);
            if !kept.is_empty() {
                let top = kept.iter().map(|k| k.0.max(k.1)).fold(0.0, f64::max);
                for i in 0..*thresholds {
                    let x = top * i as f64 / (*thresholds - 1) as f64;
                    let pa = kept.iter().filter(|k| k.0 > x).count() as f64 / n;
                    let pb = kept.iter().filter(|k| k.1 > x).count() as f64 / n;
                    exceed.push(vec![fmt(ratio), ant.n_t.to_string(), ant.n_r.to_string(), fmt(x), fmt(pa), fmt(pb)]);
                }
            }
            point += 1;
        }
    }
    Ok((summary, exceed))
}

/// Average link gains of the first `users` cells of the hexagonal layout.
pub fn hex_gains(d: f64, users: usize, path_loss: f64) -> Result<Vec<Vec<f64>>> {
    let full = hex_link_variances(d, HEX_CELLS, path_loss)?;
    Ok(full.iter().take(users).map(|row| row[..users].to_vec()).collect())
}

/// Sequential vs simultaneous IWFA on FIR wideband channels.
///
/// The first table holds per-iteration mean rates
/// (`iter,schedule,user,mean_rate,nT,nR`) over trials where both schedules
/// converged, holding converged traces at their final value. The second
/// holds per-trial iterations to tolerance. The power budget is spread over
/// the tones, so `P_q = N · snr`.
pub fn run_convergence_speed(cfg: &ExperimentConfig) -> Result<(Table, Table)> {
    let ExperimentKind::ConvergenceSpeed { users, antennas, subcarriers, order, snr_db, d, path_loss, iterations } =
        &cfg.experiment
    else {
        return Err(wrong_kind("convergence_speed"));
    };
    let mut rates = Table::new(&["iter", "schedule", "user", "mean_rate", "nT", "nR"]);
    let mut iters = Table::new(&[
        "nT",
        "nR",
        "trial",
        "iterations_sequential",
        "iterations_simultaneous",
        "converged_sequential",
        "converged_simultaneous",
    ]);
    provenance(cfg, &mut rates);
    provenance(cfg, &mut iters);
    let gains = hex_gains(*d, *users, *path_loss)?;
    let opts = IwfaOptions { tol: cfg.tol, max_iter: cfg.max_iter, stop_on_limit_cycle: true, ..Default::default() };
    let scale = unit(cfg);
    for (point, &ant) in antennas.iter().enumerate() {
        let traces = par_trials(cfg.trials, |t| {
            let seed = trial_seed(cfg.seed, point, t);
            let ch = generate_fir_wideband(&FirWideband {
                users: *users,
                antennas: ant,
                order: *order,
                subcarriers: *subcarriers,
                link_variance: Some(gains.clone()),
                power: db_to_linear(*snr_db) * *subcarriers as f64,
                noise_var: 1.0,
                seed,
            })?;
            let init = CovarianceProfile::uniform(&ch);
            let seq = run_iwfa(&ch, &Schedule::sequential(*users, cfg.max_iter), &init, Game::Original, &opts)?;
            let sim = run_iwfa(&ch, &Schedule::simultaneous(*users, cfg.max_iter), &init, Game::Original, &opts)?;
            Ok((seq, sim))
        })?;
        for (t, (seq, sim)) in traces.iter().enumerate() {
            iters.push(vec![
                ant.n_t.to_string(),
                ant.n_r.to_string(),
                t.to_string(),
                seq.iterations.to_string(),
                sim.iterations.to_string(),
                seq.converged.to_string(),
                sim.converged.to_string(),
            ]);
        }
        let good: Vec<&(IterationTrace, IterationTrace)> =
            traces.iter().filter(|(a, b)| a.converged && b.converged).collect();
        if good.is_empty() {
            continue;
        }
        let at = |tr: &IterationTrace, n: usize, q: usize| tr.rates[n.min(tr.rates.len() - 1)][q] * scale;
        for (name, pick) in [("sequential", 0usize), ("simultaneous", 1)] {
            for q in 0..*users {
                for n in 0..=*iterations {
                    let mean = good
                        .iter()
                        .map(|pair| at(if pick == 0 { &pair.0 } else { &pair.1 }, n, q))
                        .sum::<f64>()
                        / good.len() as f64;
                    rates.push(vec![
                        n.to_string(),
                        name.to_string(),
                        (q + 1).to_string(),
                        fmt(mean),
                        ant.n_t.to_string(),
                        ant.n_r.to_string(),
                    ]);
                }
            }
        }
    }
    Ok((rates, iters))
}

pub fn load_channel(path: &Path) -> Result<InterferenceChannel> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    InterferenceChannel::from_json(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Certificates of a channel.
pub fn certify(ch: &InterferenceChannel, weights: Weights, samples: usize, seed: u64) -> Result<ContractionReport> {
    Ok(check_conditions(ch, &CheckOptions { weights, samples, seed })?)
}

/// Runs the IWFA from uniform power. The modified game is solved on the
/// rank-reduced channel and its profiles are lifted back.
pub fn solve(
    ch: &InterferenceChannel,
    choice: ScheduleChoice,
    staleness: usize,
    game: Game,
    opts: &IwfaOptions,
    seed: u64,
) -> Result<IterationTrace> {
    let reduced = reduce_rank_deficient(ch)?;
    let (work, lift) = if game == Game::Modified && !reduced.is_identity() {
        (reduced.channel.clone(), Some(&reduced))
    } else {
        (ch.clone(), None)
    };
    let schedule = build_schedule(choice, work.num_users(), opts.max_iter, staleness, seed);
    let mut trace = run_iwfa(&work, &schedule, &CovarianceProfile::uniform(&work), game, opts)?;
    if let Some(r) = lift {
        trace.final_profile = r.lift(&trace.final_profile);
        if let Some(ps) = trace.profiles.as_mut() {
            for p in ps.iter_mut() {
                *p = r.lift(p);
            }
        }
    }
    Ok(trace)
}

/// Named outputs of one experiment run.
pub struct Outputs {
    pub files: Vec<(String, String)>,
}

/// Runs any configured experiment and returns `(file name, contents)` pairs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outputs> {
    let files = match &cfg.experiment {
        ExperimentKind::ProbabilityCurves { .. } => {
            vec![("probability_curves.csv".to_string(), run_probability_curves(cfg)?.to_csv())]
        }
        ExperimentKind::SumrateComparison { .. } => {
            let (a, b) = run_sumrate_comparison(cfg)?;
            vec![("sumrate_comparison.csv".into(), a.to_csv()), ("sumrate_exceedance.csv".into(), b.to_csv())]
        }
        ExperimentKind::ConvergenceSpeed { .. } => {
            let (a, b) = run_convergence_speed(cfg)?;
            vec![("convergence_speed.csv".into(), a.to_csv()), ("convergence_iterations.csv".into(), b.to_csv())]
        }
        ExperimentKind::Certify { channel, weights, samples } => {
            let ch = load_channel(channel)?;
            vec![("report.json".into(), certify(&ch, weights.clone(), *samples, cfg.seed)?.to_json())]
        }
        ExperimentKind::Solve { channel, schedule, staleness, game } => {
            let ch = load_channel(channel)?;
            let opts = IwfaOptions { tol: cfg.tol, max_iter: cfg.max_iter, ..Default::default() };
            let mut trace = solve(&ch, *schedule, *staleness, *game, &opts, cfg.seed)?;
            scale_rates(&mut trace, unit(cfg));
            let mut csv = Table::new(&[]);
            provenance(cfg, &mut csv);
            let header: String = csv.comments.iter().map(|c| format!("# {c}\n")).collect();
            vec![("trace.csv".into(), header + &trace.to_csv()), ("trace.json".into(), trace.to_json())]
        }
    };
    Ok(Outputs { files })
}

pub fn scale_rates(trace: &mut IterationTrace, factor: f64) {
    if factor != 1.0 {
        for row in &mut trace.rates {
            row.iter_mut().for_each(|r| *r *= factor);
        }
    }
}

/// Writes outputs into `dir`, returning the written paths.
pub fn write_outputs(outputs: &Outputs, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    outputs
        .files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Antenna tuple shorthand for configs and tests.
pub fn ant(n_t: usize, n_r: usize) -> Antennas {
    Antennas::new(n_t, n_r)
}
