//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runtime limits are part of each criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iwfa_core::channel::{complex_gaussian, generate_iid_rayleigh, Antennas, IidRayleigh, InterferenceChannel};
use iwfa_core::contraction::{
    block_max_norm, build_s, build_s_up, check_conditions, estimate_s_p_lower, finite_diff_jacobian, jacobian_f,
    perron_vector, realify, reduce_rank_deficient, sample_alpha_max, weighted_matrix_norm, CheckOptions,
};
use iwfa_core::engine::{ne_residual, run_iwfa, IwfaOptions, Schedule};
use iwfa_core::instances::lipschitz_counterexample;
use iwfa_core::numerics::{spectral_radius_real, CMat, RMat};
use iwfa_core::waterfill::{best_response_wf, c_q_bound, wf_projection_form, CovarianceProfile, Game};
use iwfa_harness::experiments::ant;
use iwfa_harness::{run_convergence_speed, run_probability_curves, run_sumrate_comparison, ExperimentConfig, ExperimentKind, ScheduleChoice};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn iid(ants: Vec<Antennas>, gain: f64, power: f64, seed: u64) -> InterferenceChannel {
    let mut p = IidRayleigh::new(ants, gain, seed);
    p.power = power;
    generate_iid_rayleigh(&p).unwrap()
}

/// Copy of `ch` whose direct link of user `q` is replaced by `h`.
fn with_direct(ch: &InterferenceChannel, q: usize, h: CMat) -> InterferenceChannel {
    InterferenceChannel::from_fn(ch.users().to_vec(), |r, k| if r == q && k == q { h.clone() } else { ch.h(r, k).clone() })
        .unwrap()
}

fn max_gap(a: &CovarianceProfile, b: &CovarianceProfile) -> f64 {
    a.block_distances(b).into_iter().fold(0.0, f64::max)
}

fn leq(a: f64, b: f64) -> bool {
    a <= b * (1.0 + 1e-9) + 1e-12
}

// 1 ------------------------------------------------------------------------

fn counterexample() -> Outcome {
    let (ch, q2a, q2b) = lipschitz_counterexample();
    let mut pa = CovarianceProfile::uniform(&ch);
    pa.set(1, q2a.clone());
    let mut pb = pa.clone();
    pb.set(1, q2b.clone());
    let gap = (best_response_wf(&ch, &pa, 0).map_err(|e| e.to_string())?.covariance
        - best_response_wf(&ch, &pb, 0).map_err(|e| e.to_string())?.covariance)
        .norm();
    let s = build_s(&ch).map_err(|e| e.to_string())?;
    let rho = s[(0, 1)];
    let dist = (&q2a - &q2b).norm();
    let prod = rho * dist;
    for (name, got, want) in [("gap", gap, 5.2925), ("rho", rho, 2.5012), ("dist", dist, 1.9392), ("product", prod, 4.8502)] {
        ensure(rel(got, want) <= 5e-4, || format!("{name} = {got:.6}, expected {want}"))?;
    }
    ensure(gap > prod, || format!("no Lipschitz violation: {gap} <= {prod}"))?;
    Ok(format!("gap {gap:.4} > rho*dist {rho:.4}*{dist:.4} = {prod:.4}"))
}

// 2 ------------------------------------------------------------------------

fn projection_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shapes = [(3, 2), (4, 2), (2, 2), (3, 3), (2, 3), (1, 4), (2, 4)];
    let mut worst = 0.0f64;
    let mut counts = [0usize; 4];
    for i in 0..520 {
        let (n_t, n_r) = shapes[i % shapes.len()];
        let power = log_uniform(&mut rng, 0.1, 20.0);
        let gain = log_uniform(&mut rng, 0.01, 2.0);
        let mut ch = iid(vec![ant(n_t, n_r), ant(2, 2), ant(1, 3)], gain, power, rng.random());
        let deficient = i % 4 == 3;
        if deficient {
            let k = rng.random_range(1..n_t.min(n_r).max(2));
            let k = k.min(n_t.min(n_r)).max(1);
            let h = complex_gaussian(&mut rng, n_r, k, 1.0) * complex_gaussian(&mut rng, k, n_t, 1.0);
            ch = with_direct(&ch, 0, h);
        }
        let kind = if deficient && n_t.min(n_r) > 1 {
            3
        } else if n_t > n_r {
            0
        } else if n_t == n_r {
            1
        } else {
            2
        };
        counts[kind] += 1;
        let prof = CovarianceProfile::random(&ch, &mut rng);
        let c = c_q_bound(&ch, 0).map_err(|e| e.to_string())?;
        let a = wf_projection_form(&ch, &prof, 0, c).map_err(|e| format!("instance {i}: {e}"))?;
        let b = best_response_wf(&ch, &prof, 0).map_err(|e| e.to_string())?.covariance;
        let err = (a - b).norm() / power;
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("instance {i} ({n_t}x{n_r}): error {err:e} x P"))?;
    }
    Ok(format!(
        "520 instances (fat {}, square {}, tall {}, rank-deficient {}), max error {worst:.2e} x P",
        counts[0], counts[1], counts[2], counts[3]
    ))
}

// 3 ------------------------------------------------------------------------

fn log_det(a: &CMat) -> f64 {
    let l = a.clone().cholesky().expect("positive definite").unpack();
    2.0 * l.diagonal().iter().map(|z| z.re.ln()).sum::<f64>()
}

/// Euclidean projection onto `{Q ⪰ 0, Tr Q = p}` with the water level found
/// by bisection.
fn bisection_projection(x: &CMat, p: f64) -> CMat {
    let h = (x + x.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(h);
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let top = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let excess = |mu: f64| lam.iter().map(|l| (l - mu).max(0.0)).sum::<f64>() - p;
    let (mut lo, mut hi) = (top - p, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        lam.len(),
        lam.iter().map(|l| Complex::new((l - mu).max(0.0), 0.0)),
    ));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Projected gradient ascent on `log det(R + H Q Hᴴ)` with backtracking.
fn projected_gradient(h: &CMat, r: &CMat, p: f64) -> (CMat, f64) {
    let n = h.ncols();
    let obj = |q: &CMat| log_det(&(r + h * q * h.adjoint()));
    let grad = |q: &CMat| {
        let inv = (r + h * q * h.adjoint()).try_inverse().expect("invertible");
        h.adjoint() * inv * h
    };
    let mut q = CMat::identity(n, n).map(|z| z * (p / n as f64));
    let mut f = obj(&q);
    let mut t = 1.0;
    for _ in 0..200_000 {
        let g = grad(&q);
        let cand = bisection_projection(&(&q + g.map(|z| z * t)), p);
        let step = &cand - &q;
        let fc = obj(&cand);
        let model = f + (g.adjoint() * &step).trace().re - step.norm_squared() / (2.0 * t);
        if fc >= model - 1e-15 {
            q = cand;
            f = fc;
            t *= 1.5;
            if step.norm() < 1e-11 {
                break;
            }
        } else {
            t *= 0.5;
        }
    }
    (q, f)
}

fn convex_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n_t = rng.random_range(1..=4);
        let n_r = rng.random_range(1..=4);
        let power = log_uniform(&mut rng, 0.5, 10.0);
        let ch = iid(vec![ant(n_t, n_r), ant(2, 2)], log_uniform(&mut rng, 0.05, 1.0), power, rng.random());
        let prof = CovarianceProfile::random(&ch, &mut rng);
        let cross = ch.h(1, 0);
        let r = ch.noise(0) + cross * prof.get(1) * cross.adjoint();
        let h = ch.direct(0);
        let br = best_response_wf(&ch, &prof, 0).map_err(|e| e.to_string())?.covariance;
        let f_br = log_det(&(&r + h * &br * h.adjoint()));
        let (_, f_pg) = projected_gradient(h, &r, power);
        let gap = (f_br - f_pg).abs();
        worst = worst.max(gap);
        ensure(gap <= 1e-7, || format!("instance {i} ({n_t}x{n_r}): objective gap {gap:e} (wf {f_br}, pg {f_pg})"))?;
    }
    Ok(format!("100 instances, max objective gap {worst:.2e}"))
}

// 4 ------------------------------------------------------------------------

fn ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tall = [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)];
    let mut raw_below_s = 0usize;
    let mut entries = 0usize;
    for i in 0..200 {
        let users = rng.random_range(2..=3);
        let ants: Vec<Antennas> = (0..users).map(|_| { let (a, b) = tall[rng.random_range(0..tall.len())]; ant(a, b) }).collect();
        let ch = iid(ants, log_uniform(&mut rng, 0.05, 1.0), log_uniform(&mut rng, 0.5, 10.0), rng.random());
        let s = build_s(&ch).map_err(|e| e.to_string())?;
        let up = build_s_up(&ch).map_err(|e| e.to_string())?;
        let seed: u64 = rng.random();
        let lower = estimate_s_p_lower(&ch, 100, seed).map_err(|e| e.to_string())?;
        let raw = sample_alpha_max(&ch, 100, seed).map_err(|e| e.to_string())?;
        for q in 0..users {
            for r in (0..users).filter(|&r| r != q) {
                let (a, b, c, d) = (s[(q, r)], lower[(q, r)], up[(q, r)], raw[(q, r)]);
                ensure(leq(a, b) && leq(b, c), || format!("instance {i} ({q},{r}): S {a} lower {b} S_up {c}"))?;
                ensure(leq(d, c), || format!("instance {i} ({q},{r}): raw sample {d} > S_up {c}"))?;
                entries += 1;
                if d < a * (1.0 - 1e-9) {
                    raw_below_s += 1;
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..50 {
        let n = rng.random_range(1..=3);
        let ch = iid(vec![ant(n, n); 3], log_uniform(&mut rng, 0.05, 1.0), 2.0, rng.random());
        let s = build_s(&ch).map_err(|e| e.to_string())?;
        let raw = sample_alpha_max(&ch, 20, rng.random()).map_err(|e| e.to_string())?;
        for q in 0..3 {
            for r in (0..3).filter(|&r| r != q) {
                let e = rel(raw[(q, r)], s[(q, r)]);
                worst = worst.max(e);
                ensure(e <= 1e-9, || format!("square instance {i}: sampled {} vs S {}", raw[(q, r)], s[(q, r)]))?;
            }
        }
    }
    Ok(format!(
        "200 tall: S <= lower <= S_up and raw <= S_up; raw sample below S on {raw_below_s}/{entries} entries; 50 square: |sampled - S|/S <= {worst:.1e}"
    ))
}

// 5 ------------------------------------------------------------------------

fn schedule_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shapes = [(2, 2), (2, 3), (3, 2), (1, 2), (2, 4)];
    let opts = IwfaOptions::default();
    let mut accepted = 0;
    let mut drawn = 0;
    let mut worst = 0.0f64;
    let mut runs = 0;
    while accepted < 50 {
        drawn += 1;
        ensure(drawn < 5000, || "too few certified instances".into())?;
        let users = 3;
        let ants: Vec<Antennas> = (0..users).map(|_| { let (a, b) = shapes[rng.random_range(0..shapes.len())]; ant(a, b) }).collect();
        let ch = iid(ants, log_uniform(&mut rng, 0.005, 0.3), log_uniform(&mut rng, 1.0, 10.0), rng.random());
        let rep = check_conditions(&ch, &CheckOptions { samples: 0, ..Default::default() }).map_err(|e| e.to_string())?;
        if !(rep.radii.s_tilde_up < 1.0) {
            continue;
        }
        accepted += 1;
        let horizon = opts.max_iter;
        let schedules = [
            Schedule::sequential(users, horizon),
            Schedule::simultaneous(users, horizon),
            Schedule::random_async(users, horizon, 1, rng.random()),
            Schedule::random_async(users, horizon, 2, rng.random()),
            Schedule::random_async(users, horizon, 4, rng.random()),
        ];
        let mut finals = Vec::new();
        for _ in 0..5 {
            let init = CovarianceProfile::random(&ch, &mut rng);
            for s in &schedules {
                let t = run_iwfa(&ch, s, &init, Game::Original, &opts).map_err(|e| e.to_string())?;
                ensure(t.converged, || format!("{} did not converge (residual {:e})", s.kind.name(), t.final_residual()))?;
                finals.push(t.final_profile);
                runs += 1;
            }
        }
        for a in 0..finals.len() {
            for b in a + 1..finals.len() {
                worst = worst.max(max_gap(&finals[a], &finals[b]));
            }
        }
        ensure(worst <= 1e-6, || format!("instance {accepted}: equilibria differ by {worst:e}"))?;
    }
    Ok(format!("50 certified instances ({drawn} drawn), {runs} runs, max pairwise gap {worst:.2e}"))
}

// 6 ------------------------------------------------------------------------

fn geometric_envelope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut accepted = [0usize; 2];
    let mut steps = 0usize;
    let mut worst_ratio = 0.0f64;
    let mut drawn = 0;
    while accepted.iter().sum::<usize>() < 40 {
        drawn += 1;
        ensure(drawn < 5000, || "too few contracting instances".into())?;
        let kind = if accepted[0] < 20 { 0 } else { 1 };
        let a = if kind == 0 { ant(3, 2) } else { ant(2, 2) };
        let ch = iid(vec![a; 3], log_uniform(&mut rng, 0.01, 0.3), log_uniform(&mut rng, 1.0, 10.0), rng.random());
        let s = build_s(&ch).map_err(|e| e.to_string())?;
        let w = perron_vector(&s);
        let beta = weighted_matrix_norm(&s, &w).map_err(|e| e.to_string())?;
        if !(beta < 1.0) {
            continue;
        }
        let strict = IwfaOptions { tol: 1e-14, max_iter: 20_000, ..Default::default() };
        let ne = run_iwfa(&ch, &Schedule::simultaneous(3, 20_000), &CovarianceProfile::uniform(&ch), Game::Original, &strict)
            .map_err(|e| e.to_string())?;
        if ne.final_residual() > 1e-12 {
            return Err(format!("reference equilibrium not reached (residual {:e})", ne.final_residual()));
        }
        let ne = ne.final_profile;
        let init = CovarianceProfile::random(&ch, &mut rng);
        let opts = IwfaOptions { record_profiles: true, ..Default::default() };
        let t = run_iwfa(&ch, &Schedule::simultaneous(3, opts.max_iter), &init, Game::Original, &opts)
            .map_err(|e| e.to_string())?;
        ensure(t.converged, || "simultaneous IWFA did not converge".into())?;
        let dist = |p: &CovarianceProfile| {
            let d: Vec<CMat> = p.blocks().iter().zip(ne.blocks()).map(|(a, b)| a - b).collect();
            block_max_norm(&d, &w).unwrap()
        };
        let profiles = t.profiles.unwrap();
        let d0 = dist(&profiles[0]);
        for (n, p) in profiles.iter().enumerate() {
            let bound = beta.powi(n as i32) * d0;
            let dn = dist(p);
            if n > 0 && bound > 0.0 {
                worst_ratio = worst_ratio.max(dn / bound);
            }
            ensure(dn <= bound * (1.0 + 1e-6), || format!("n = {n}: dist {dn:e} > beta^n dist0 {bound:e} (beta {beta})"))?;
            steps += 1;
        }
        accepted[kind] += 1;
    }
    Ok(format!(
        "{} fat + {} square instances, {steps} iterates, max over n >= 1 of dist(n)/(beta^n dist(0)) = {worst_ratio:.4}",
        accepted[0], accepted[1]
    ))
}

// 7 ------------------------------------------------------------------------

fn modified_game() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tall = [(1, 2), (2, 3), (2, 4), (1, 3)];
    let opts = IwfaOptions::default();
    let mut accepted = 0;
    let mut drawn = 0;
    let mut max_iters = 0;
    while accepted < 50 {
        drawn += 1;
        ensure(drawn < 20_000, || format!("only {accepted} instances with rho(S) < 1 <= rho(S_up)"))?;
        let ants: Vec<Antennas> = (0..3).map(|_| { let (a, b) = tall[rng.random_range(0..tall.len())]; ant(a, b) }).collect();
        let ch = iid(ants, log_uniform(&mut rng, 0.02, 1.0), log_uniform(&mut rng, 1.0, 10.0), rng.random());
        let rho_s = spectral_radius_real(&build_s(&ch).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let rho_up = spectral_radius_real(&build_s_up(&ch).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if !(rho_s < 1.0 && rho_up >= 1.0) {
            continue;
        }
        accepted += 1;
        let h = opts.max_iter;
        let schedules = [
            Schedule::sequential(3, h),
            Schedule::simultaneous(3, h),
            Schedule::random_async(3, h, 2, rng.random()),
        ];
        let init = CovarianceProfile::random(&ch, &mut rng);
        for s in &schedules {
            let t = run_iwfa(&ch, s, &init, Game::Modified, &opts).map_err(|e| e.to_string())?;
            ensure(t.converged, || format!("{} did not converge (rho(S) = {rho_s:.3})", s.kind.name()))?;
            max_iters = max_iters.max(t.iterations);
        }
    }
    let mut worst = 0.0f64;
    let mut square = 0;
    while square < 20 {
        let n = rng.random_range(1..=3);
        let ch = iid(vec![ant(n, n); 3], log_uniform(&mut rng, 0.01, 0.3), 5.0, rng.random());
        if !(spectral_radius_real(&build_s(&ch).unwrap()).unwrap() < 1.0) {
            continue;
        }
        square += 1;
        let init = CovarianceProfile::random(&ch, &mut rng);
        let s = Schedule::simultaneous(3, opts.max_iter);
        let a = run_iwfa(&ch, &s, &init, Game::Original, &opts).map_err(|e| e.to_string())?;
        let b = run_iwfa(&ch, &s, &init, Game::Modified, &opts).map_err(|e| e.to_string())?;
        ensure(a.converged && b.converged, || "square instance did not converge".into())?;
        let gap = max_gap(&a.final_profile, &b.final_profile);
        worst = worst.max(gap);
        ensure(gap <= 10.0 * opts.tol, || format!("square equilibria differ by {gap:e}"))?;
    }
    Ok(format!(
        "50 tall instances ({drawn} drawn) converge under seq/sim/async (max {max_iters} iterations); 20 square: max NE gap {worst:.1e}"
    ))
}

// 8 ------------------------------------------------------------------------

fn probability_trend() -> Outcome {
    let antennas = vec![ant(2, 2), ant(2, 4), ant(4, 2)];
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::ProbabilityCurves {
            d_grid: vec![0.2, 0.4, 0.6, 0.8],
            antennas: antennas.clone(),
            snr_db: 5.0,
            path_loss: 2.0,
            samples: 100,
            cross_scale: 1.0,
        },
        8,
    );
    cfg.trials = 200;
    let t = run_probability_curves(&cfg).map_err(|e| e.to_string())?;
    let (nt, nr, p1, p2) = (t.values("nT"), t.values("nR"), t.values("P_C1"), t.values("P_C2"));
    let n = cfg.trials as f64;
    let mut summary = Vec::new();
    for a in &antennas {
        let idx: Vec<usize> = (0..t.rows.len()).filter(|&i| nt[i] == a.n_t as f64 && nr[i] == a.n_r as f64).collect();
        for (name, p) in [("C1", &p1), ("C2", &p2)] {
            for w in idx.windows(2) {
                let (x, y) = (p[w[0]], p[w[1]]);
                let sigma = ((x * (1.0 - x) + y * (1.0 - y)) / n).sqrt();
                ensure(y >= x - 2.0 * sigma, || format!("{}x{} P_{name} drops from {x} to {y}", a.n_t, a.n_r))?;
            }
        }
        if a.n_t < a.n_r {
            for &i in &idx {
                ensure((p2[i] * n).round() <= (p1[i] * n).round(), || {
                    format!("{}x{} d-index {i}: C2 count exceeds C1 count", a.n_t, a.n_r)
                })?;
            }
        }
        let curve: Vec<String> = idx.iter().map(|&i| format!("{:.3}", p1[i])).collect();
        summary.push(format!("{}x{} P_C1 [{}]", a.n_t, a.n_r, curve.join(" ")));
    }
    Ok(summary.join("; "))
}

// 9 ------------------------------------------------------------------------

fn sumrate_gap() -> Outcome {
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::SumrateComparison {
            ratios: vec![1.0, 2.0, 3.0],
            antennas: vec![ant(2, 4)],
            users: 3,
            snr_db: 3.0,
            path_loss: 2.5,
            thresholds: 41,
            schedule: ScheduleChoice::Sim,
            cross_scale: 1.0,
        },
        9,
    );
    cfg.trials = 200;
    let (summary, _) = run_sumrate_comparison(&cfg).map_err(|e| e.to_string())?;
    let rel_diff = summary.values("rel_diff");
    let conv = summary.values("converged_trials");
    let ratios = summary.values("ratio");
    for i in 0..rel_diff.len() {
        ensure(conv[i] >= 200.0, || format!("ratio {}: only {} converging trials", ratios[i], conv[i]))?;
        ensure(rel_diff[i] <= 0.05, || format!("ratio {}: relative sum-rate gap {:.4}", ratios[i], rel_diff[i]))?;
    }
    let parts: Vec<String> = ratios.iter().zip(&rel_diff).map(|(r, d)| format!("ratio {r}: {:.2}%", 100.0 * d)).collect();
    Ok(format!("(2,4), 3 dB, 200 converging trials; {}", parts.join(", ")))
}

// 10 -----------------------------------------------------------------------

fn schedule_speed() -> Outcome {
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::ConvergenceSpeed {
            users: 3,
            antennas: vec![ant(2, 2)],
            subcarriers: 16,
            order: 6,
            snr_db: 7.0,
            d: 0.3,
            path_loss: 2.0,
            iterations: 40,
        },
        10,
    );
    cfg.trials = 100;
    let (_, iters) = run_convergence_speed(&cfg).map_err(|e| e.to_string())?;
    let i_seq = iters.column("iterations_sequential").unwrap();
    let i_sim = iters.column("iterations_simultaneous").unwrap();
    let c_seq = iters.column("converged_sequential").unwrap();
    let c_sim = iters.column("converged_simultaneous").unwrap();
    let mut both = 0;
    let mut slower = 0;
    for row in &iters.rows {
        if row[c_seq] == "true" && row[c_sim] == "true" {
            both += 1;
            if row[i_seq].parse::<usize>().unwrap() >= row[i_sim].parse::<usize>().unwrap() {
                slower += 1;
            }
        }
    }
    ensure(both > 0, || "no converging trials".into())?;
    let frac = slower as f64 / both as f64;
    ensure(frac >= 0.9, || format!("sequential slower on only {slower}/{both} trials"))?;
    Ok(format!("sequential >= simultaneous on {slower}/{both} converging trials ({:.0}%)", 100.0 * frac))
}

// 11 -----------------------------------------------------------------------

fn jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shapes = [(1, 1), (2, 2), (2, 3), (1, 3), (3, 3), (2, 4)];
    let h = 1e-5;
    let tol = f64::max(1e-5, 100.0 * h * h);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let ants: Vec<Antennas> = (0..3).map(|_| { let (a, b) = shapes[rng.random_range(0..shapes.len())]; ant(a, b) }).collect();
        let ch = iid(ants, log_uniform(&mut rng, 0.05, 1.0), log_uniform(&mut rng, 0.5, 5.0), rng.random());
        let prof = CovarianceProfile::random(&ch, &mut rng);
        let q = rng.random_range(0..3);
        let exact: RMat = realify(&jacobian_f(&ch, q, &prof).map_err(|e| e.to_string())?);
        let fd = finite_diff_jacobian(&ch, q, &prof, h).map_err(|e| e.to_string())?;
        let err = (&fd - &exact).amax();
        worst = worst.max(err);
        ensure(err <= tol, || format!("instance {i}: max entry error {err:e}"))?;
    }
    Ok(format!("50 instances, h = {h:e}, max entry error {worst:.2e} (tolerance {tol:e})"))
}

// 12 -----------------------------------------------------------------------

fn reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // (n_t, n_r, rank) of user 0's direct link.
    let cases = [(3, 3, 1), (3, 3, 2), (2, 4, 1), (3, 2, 1), (3, 2, 2), (4, 4, 2)];
    let mut worst = 0.0f64;
    for i in 0..50 {
        let (n_t, n_r, k) = cases[i % cases.len()];
        let base = iid(vec![ant(n_t, n_r), ant(2, 2), ant(2, 3)], log_uniform(&mut rng, 0.01, 0.1), 5.0, rng.random());
        let h = complex_gaussian(&mut rng, n_r, k, 1.0) * complex_gaussian(&mut rng, k, n_t, 1.0);
        let ch = with_direct(&base, 0, h);
        let red = reduce_rank_deficient(&ch).map_err(|e| e.to_string())?;
        ensure(red.reduced_users.contains(&0), || format!("instance {i}: user 0 not reduced"))?;
        let opts = IwfaOptions { tol: 1e-10, ..Default::default() };
        let w = &red.channel;
        let t = run_iwfa(w, &Schedule::simultaneous(3, opts.max_iter), &CovarianceProfile::uniform(w), Game::Original, &opts)
            .map_err(|e| e.to_string())?;
        ensure(t.converged, || format!("instance {i}: reduced game did not converge"))?;
        let lifted = red.lift(&t.final_profile);
        lifted.validate(&ch).map_err(|e| e.to_string())?;
        let res = ne_residual(&ch, &lifted, Game::Original).map_err(|e| e.to_string())?;
        worst = worst.max(res);
        ensure(res <= 1e-8, || format!("instance {i}: residual {res:e}"))?;
    }
    Ok(format!("50 rank-deficient instances, max residual of lifted NE {worst:.2e}"))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 12] = [
        ("counter-example regression", 1, counterexample),
        ("projection-form equivalence", 30, projection_form),
        ("convex-oracle equivalence", 60, convex_oracle),
        ("certificate ordering", 60, ordering),
        ("uniqueness and schedule independence", 180, schedule_independence),
        ("geometric envelope", 60, geometric_envelope),
        ("modified game", 120, modified_game),
        ("uniqueness probability trend", 300, probability_trend),
        ("sum-rate of both games", 300, sumrate_gap),
        ("sequential vs simultaneous speed", 300, schedule_speed),
        ("Jacobian vs finite differences", 60, jacobian),
        ("rank-deficient reduction", 60, reduction),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (ok, detail) = match outcome {
            Ok(d) if in_time => (true, d),
            Ok(d) => (false, format!("{d}; exceeded {limit} s")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{id:>2}] {name} ({:.2} s / {limit} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
