//! Totally asynchronous iterative waterfilling.
//!
//! At iteration `n` every user in the update set best-responds to the
//! interference it last heard about, i.e. to `Q_r(τ_r^q(n))`; everyone else
//! keeps its strategy. Staleness is bounded by `B`, so only the last `B + 1`
//! profiles are kept.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::channel::{matrix_to_doc, seeded_rng, InterferenceChannel};
use crate::waterfill::{self, CovarianceProfile, Game, WaterfillError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("initial profile is infeasible: {0}")]
    Infeasible(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Waterfill(#[from] WaterfillError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Window over which a non-decreasing residual is flagged as a limit cycle.
pub const LIMIT_CYCLE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Sequential,
    Simultaneous,
    RandomAsync,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Sequential => "sequential",
            ScheduleKind::Simultaneous => "simultaneous",
            ScheduleKind::RandomAsync => "random_async",
        }
    }
}

/// Users updating at one iteration and how stale their information is.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// Ascending user indices.
    pub updates: Vec<usize>,
    /// `delays[k][r] = n − τ_r^q(n)` for `q = updates[k]`.
    pub delays: Vec<Vec<usize>>,
}

/// Update sets and staleness for iterations `0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub users: usize,
    pub max_staleness: usize,
    pub steps: Vec<Step>,
}

impl Schedule {
    /// Round-robin singleton updates with current information.
    pub fn sequential(users: usize, horizon: usize) -> Self {
        let steps = (0..horizon).map(|n| Step { updates: vec![n % users], delays: vec![vec![0; users]] }).collect();
        Self { kind: ScheduleKind::Sequential, users, max_staleness: 0, steps }
    }

    /// All users update at every iteration with current information.
    pub fn simultaneous(users: usize, horizon: usize) -> Self {
        let step = Step { updates: (0..users).collect(), delays: vec![vec![0; users]; users] };
        Self { kind: ScheduleKind::Simultaneous, users, max_staleness: 0, steps: vec![step; horizon] }
    }

    /// Random nonempty update sets (each user with probability 1/2) and
    /// staleness uniform in `[max(0, n − B), n]`. A user idle for
    /// [`Schedule::update_window`] iterations is forced into the next set.
    pub fn random_async(users: usize, horizon: usize, max_staleness: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, 0);
        let window = users + max_staleness;
        let mut idle = vec![0usize; users];
        let mut steps = Vec::with_capacity(horizon);
        for n in 0..horizon {
            let mut updates: Vec<usize> = (0..users).filter(|&q| idle[q] + 1 >= window || rng.random_bool(0.5)).collect();
            if updates.is_empty() {
                updates.push(rng.random_range(0..users));
            }
            let cap = max_staleness.min(n);
            let delays = updates.iter().map(|_| (0..users).map(|_| rng.random_range(0..=cap)).collect()).collect();
            for (q, slot) in idle.iter_mut().enumerate() {
                *slot = if updates.contains(&q) { 0 } else { *slot + 1 };
            }
            steps.push(Step { updates, delays });
        }
        Self { kind: ScheduleKind::RandomAsync, users, max_staleness, steps }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Every user updates at least once in each window of this many iterations.
    pub fn update_window(&self) -> usize {
        self.users + self.max_staleness
    }

    /// `τ_r^q(n)` for the `k`-th updating user of iteration `n`.
    pub fn tau(&self, n: usize, k: usize, r: usize) -> usize {
        n - self.steps[n].delays[k][r]
    }

    /// Checks `τ ≤ n`, `n − τ ≤ B` and the periodic-update property.
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(EngineError::Schedule("no users".into()));
        }
        let window = self.update_window();
        let mut last = vec![None::<usize>; self.users];
        for (n, step) in self.steps.iter().enumerate() {
            if step.updates.is_empty() || step.updates.len() != step.delays.len() {
                return Err(EngineError::Schedule(format!("malformed update set at n = {n}")));
            }
            for (q, d) in step.updates.iter().zip(&step.delays) {
                if *q >= self.users || d.len() != self.users {
                    return Err(EngineError::Schedule(format!("bad user or delay vector at n = {n}")));
                }
                if let Some(bad) = d.iter().find(|&&x| x > n || x > self.max_staleness) {
                    return Err(EngineError::Schedule(format!("delay {bad} at n = {n} exceeds bound")));
                }
                last[*q] = Some(n);
            }
            for (q, l) in last.iter().enumerate() {
                let since = l.map_or(n + 1, |l| n - l);
                if since >= window {
                    return Err(EngineError::Schedule(format!("user {q} idle for {since} iterations at n = {n}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwfaOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Keep a copy of the profile after every iteration.
    pub record_profiles: bool,
    /// Stop as soon as a limit cycle is flagged.
    pub stop_on_limit_cycle: bool,
}

impl Default for IwfaOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, record_profiles: false, stop_on_limit_cycle: false }
    }
}

/// Per-iteration record of a run. Index 0 is the initial profile.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub game: Game,
    pub schedule: ScheduleKind,
    pub tol: f64,
    pub rates: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Seconds since the start of the run.
    pub elapsed: Vec<f64>,
    pub profiles: Option<Vec<CovarianceProfile>>,
    pub final_profile: CovarianceProfile,
    pub converged: bool,
    pub limit_cycle: bool,
    pub iterations: usize,
}

impl IterationTrace {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("trace has the initial entry")
    }

    pub fn sum_rates(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r.iter().sum()).collect()
    }

    /// First iteration whose residual is at most `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.residuals.iter().position(|&r| r <= tol)
    }

    /// One row per iteration: `n,residual,rate_1..rate_Q,sum_rate`.
    pub fn to_csv(&self) -> String {
        let users = self.final_profile.len();
        let mut out = String::from("n,residual");
        for q in 1..=users {
            let _ = write!(out, ",rate_{q}");
        }
        out.push_str(",sum_rate\n");
        for (n, (res, rates)) in self.residuals.iter().zip(&self.rates).enumerate() {
            let _ = write!(out, "{n},{res:e}");
            for r in rates {
                let _ = write!(out, ",{r}");
            }
            let _ = writeln!(out, ",{}", rates.iter().sum::<f64>());
        }
        out
    }

    pub fn to_json(&self) -> String {
        let profile = |p: &CovarianceProfile| p.blocks().iter().map(matrix_to_doc).collect::<Vec<_>>();
        let mut doc = json!({
            "game": self.game,
            "schedule": self.schedule,
            "tol": self.tol,
            "iterations": self.iterations,
            "converged": self.converged,
            "limit_cycle": self.limit_cycle,
            "residuals": self.residuals,
            "rates": self.rates,
            "sum_rates": self.sum_rates(),
            "elapsed_seconds": self.elapsed,
            "final_profile": profile(&self.final_profile),
        });
        if let Some(ps) = &self.profiles {
            doc["profiles"] = ps.iter().map(|p| json!(profile(p))).collect();
        }
        serde_json::to_string_pretty(&doc).expect("trace serializes")
    }
}

/// `max_q ‖Q_q − BR_q(Q_{−q})‖_F`.
pub fn ne_residual(ch: &InterferenceChannel, profile: &CovarianceProfile, game: Game) -> Result<f64> {
    let mut worst = 0.0_f64;
    for q in 0..ch.num_users() {
        let br = game.best_response(ch, profile, q)?;
        worst = worst.max((profile.get(q) - br.covariance).norm());
    }
    Ok(worst)
}

/// `Σ_q rate_q` of the original game.
pub fn sum_rate(ch: &InterferenceChannel, profile: &CovarianceProfile) -> Result<f64> {
    (0..ch.num_users()).map(|q| Ok(waterfill::rate(ch, profile, q)?)).sum()
}

fn payoffs(ch: &InterferenceChannel, profile: &CovarianceProfile, game: Game) -> Result<Vec<f64>> {
    (0..ch.num_users()).map(|q| Ok(game.payoff(ch, profile, q)?)).collect()
}

/// Runs the asynchronous IWFA until the residual reaches `tol`, the iteration
/// budget is exhausted, or the schedule ends.
pub fn run_iwfa(
    ch: &InterferenceChannel,
    schedule: &Schedule,
    initial: &CovarianceProfile,
    game: Game,
    opts: &IwfaOptions,
) -> Result<IterationTrace> {
    initial.validate(ch).map_err(|e| EngineError::Infeasible(e.to_string()))?;
    if schedule.users != ch.num_users() {
        return Err(EngineError::Schedule(format!(
            "schedule for {} users, channel has {}",
            schedule.users,
            ch.num_users()
        )));
    }
    let start = Instant::now();
    let mut history: VecDeque<CovarianceProfile> = VecDeque::with_capacity(schedule.max_staleness + 1);
    history.push_front(initial.clone());
    let mut trace = IterationTrace {
        game,
        schedule: schedule.kind,
        tol: opts.tol,
        rates: vec![payoffs(ch, initial, game)?],
        residuals: vec![ne_residual(ch, initial, game)?],
        elapsed: vec![start.elapsed().as_secs_f64()],
        profiles: opts.record_profiles.then(|| vec![initial.clone()]),
        final_profile: initial.clone(),
        converged: false,
        limit_cycle: false,
        iterations: 0,
    };
    trace.converged = trace.residuals[0] <= opts.tol;
    let budget = opts.max_iter.min(schedule.horizon());
    let mut n = 0;
    while !trace.converged && n < budget {
        let step = &schedule.steps[n];
        let current = history.front().expect("history is never empty");
        let mut next = current.clone();
        for (q, delays) in step.updates.iter().zip(&step.delays) {
            let stale = CovarianceProfile::new(
                (0..ch.num_users())
                    .map(|r| history[delays[r].min(history.len() - 1)].get(r).clone())
                    .collect(),
            );
            next.set(*q, game.best_response(ch, &stale, *q)?.covariance);
        }
        n += 1;
        trace.rates.push(payoffs(ch, &next, game)?);
        trace.residuals.push(ne_residual(ch, &next, game)?);
        trace.elapsed.push(start.elapsed().as_secs_f64());
        if let Some(ps) = trace.profiles.as_mut() {
            ps.push(next.clone());
        }
        history.push_front(next);
        history.truncate(schedule.max_staleness + 1);
        trace.converged = *trace.residuals.last().unwrap() <= opts.tol;
        if !trace.converged && n >= LIMIT_CYCLE_WINDOW {
            let res = &trace.residuals;
            trace.limit_cycle = res[n] >= res[n - LIMIT_CYCLE_WINDOW];
            if trace.limit_cycle && opts.stop_on_limit_cycle {
                break;
            }
        }
    }
    if trace.converged {
        trace.limit_cycle = false;
    }
    trace.iterations = n;
    trace.final_profile = history.pop_front().expect("history is never empty");
    Ok(trace)
}
