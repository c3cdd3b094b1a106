//! Single-user best responses and the PSD-simplex projection behind them.
//!
//! The feasible set of user `q` is `{Q ⪰ 0 : Tr Q = P_q}`. The classical best
//! response waterfills over the eigenmodes of `H_qqᴴ R_{−q}⁻¹ H_qq`; the
//! modified best response projects `−H_qq♯ R_{−q} H_qq♯ᴴ` onto the same set.
//! Water levels are found exactly by scanning the sorted levels (no bisection).

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{complex_gaussian, InterferenceChannel};
use crate::numerics::{self, CMat, NumericsError, DEFAULT_RANK_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaterfillError {
    #[error("user {0}: direct channel is identically zero")]
    DegenerateLink(usize),
    #[error("user {0}: direct channel is not full column-rank; reduce the channel first")]
    NeedsReduction(usize),
    #[error("c_q = {given} is below the required threshold {required}")]
    ContractViolation { given: f64, required: f64 },
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("infeasible profile: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, WaterfillError>;

/// Minimum eigenvalue tolerated for a feasible covariance.
pub const PSD_TOL: f64 = 1e-9;
/// Relative tolerance of the power constraint `Tr Q_q = P_q`.
pub const TRACE_TOL: f64 = 1e-8;

/// Which game's best response to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Game {
    /// Rate-maximizing waterfilling.
    #[default]
    Original,
    /// Projection of `−H♯ R H♯ᴴ`.
    Modified,
}

/// One transmit covariance per user.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceProfile {
    blocks: Vec<CMat>,
}

impl CovarianceProfile {
    pub fn new(blocks: Vec<CMat>) -> Self {
        Self { blocks }
    }

    /// `Q_q = (P_q / n_T) I` for every user.
    pub fn uniform(ch: &InterferenceChannel) -> Self {
        Self::new(ch.users().iter().map(|u| numerics::identity(u.n_t).scale(u.power / u.n_t as f64)).collect())
    }

    /// Random feasible profile: a random Hermitian matrix projected onto each
    /// user's feasible set.
    pub fn random<R: Rng + ?Sized>(ch: &InterferenceChannel, rng: &mut R) -> Self {
        Self::new(
            ch.users()
                .iter()
                .map(|u| {
                    let a = complex_gaussian(rng, u.n_t, u.n_t, 2.0);
                    let x = numerics::hermitian_part(&a).scale(u.power / u.n_t as f64);
                    project_onto_simplex_psd(&x, u.power).expect("positive power budget")
                })
                .collect(),
        )
    }

    /// All-zero profile (not feasible; used for limits and interference-free
    /// evaluations).
    pub fn zeros(ch: &InterferenceChannel) -> Self {
        Self::new(ch.users().iter().map(|u| numerics::zeros(u.n_t, u.n_t)).collect())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, q: usize) -> &CMat {
        &self.blocks[q]
    }

    pub fn set(&mut self, q: usize, m: CMat) {
        self.blocks[q] = m;
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<CMat> {
        self.blocks
    }

    /// Per-user Frobenius distances `‖Q_q − Q'_q‖_F`.
    pub fn block_distances(&self, other: &Self) -> Vec<f64> {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| (a - b).norm()).collect()
    }

    /// Checks shapes, positive semidefiniteness and the power constraints.
    pub fn validate(&self, ch: &InterferenceChannel) -> Result<()> {
        if self.blocks.len() != ch.num_users() {
            return Err(WaterfillError::Infeasible(format!(
                "profile has {} blocks for {} users",
                self.blocks.len(),
                ch.num_users()
            )));
        }
        for (q, (m, u)) in self.blocks.iter().zip(ch.users()).enumerate() {
            if m.shape() != (u.n_t, u.n_t) {
                return Err(WaterfillError::Infeasible(format!("Q_{q} has shape {:?}", m.shape())));
            }
            let eig = numerics::hermitian_eig(m)
                .map_err(|e| WaterfillError::Infeasible(format!("Q_{q}: {e}")))?;
            if eig.min_eigenvalue() < -PSD_TOL {
                return Err(WaterfillError::Infeasible(format!(
                    "Q_{q} has eigenvalue {:.3e}",
                    eig.min_eigenvalue()
                )));
            }
            let tr = numerics::trace_re(m);
            if (tr - u.power).abs() > TRACE_TOL * u.power {
                return Err(WaterfillError::Infeasible(format!("Tr Q_{q} = {tr}, budget {}", u.power)));
            }
        }
        Ok(())
    }
}

/// A best response together with its water level and number of loaded modes.
#[derive(Debug, Clone)]
pub struct WaterfillResult {
    pub covariance: CMat,
    pub water_level: f64,
    pub active_modes: usize,
}

/// Interference-plus-noise covariance `R_{−q} = R_nq + Σ_{r≠q} H_rq Q_r H_rqᴴ`.
pub fn mui_covariance(ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> CMat {
    let mut r = ch.noise(q).clone();
    for other in (0..ch.num_users()).filter(|&o| o != q) {
        let h = ch.h(other, q);
        r += h * profile.get(other) * h.adjoint();
    }
    numerics::hermitian_part(&r)
}

/// `H_qqᴴ R_{−q}⁻¹ H_qq`.
pub fn effective_channel(ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> Result<CMat> {
    let r = mui_covariance(ch, profile, q);
    let h = ch.direct(q);
    let m = h.adjoint() * numerics::hpd_solve(&r, h)?;
    Ok(numerics::hermitian_part(&m))
}

/// Rate `ln det(I + H_qqᴴ R_{−q}⁻¹ H_qq Q_q)` in nats.
pub fn rate(ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> Result<f64> {
    let r = mui_covariance(ch, profile, q);
    let h = ch.direct(q);
    let signal = numerics::hermitian_part(&(&r + h * profile.get(q) * h.adjoint()));
    Ok((numerics::hpd_log_det(&signal)? - numerics::hpd_log_det(&r)?).max(0.0))
}

/// Solves `Σ_i (μ − level_i)⁺ = total` exactly; returns `μ` and the
/// allocations in input order.
pub fn fill_levels(levels: &[f64], total: f64) -> (f64, Vec<f64>) {
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    let mut best = sorted[0] + total;
    let mut sums = Vec::with_capacity(sorted.len());
    for l in &sorted {
        prefix += l;
        sums.push(prefix);
    }
    for k in (1..=sorted.len()).rev() {
        let mu = (total + sums[k - 1]) / k as f64;
        if mu > sorted[k - 1] {
            best = mu;
            break;
        }
    }
    let powers = levels.iter().map(|&l| (best - l).max(0.0)).collect();
    (best, powers)
}

/// Scalar waterfilling `p_i = (μ − 1/d_i)⁺` with `Σ p_i = total`.
pub fn water_level_solve(gains: &[f64], total: f64) -> Result<(f64, Vec<f64>)> {
    if gains.is_empty() {
        return Err(WaterfillError::Domain("no channel modes to waterfill over".into()));
    }
    if let Some(g) = gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(WaterfillError::Domain(format!("mode gain {g} is not positive")));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(WaterfillError::Domain(format!("power budget {total} is not positive")));
    }
    let levels: Vec<f64> = gains.iter().map(|g| 1.0 / g).collect();
    Ok(fill_levels(&levels, total))
}

/// `U diag(p) Uᴴ` over the first `p.len()` columns of `u`.
fn assemble(u: &CMat, cols: &[usize], powers: &[f64]) -> CMat {
    let n = u.nrows();
    let mut out = numerics::zeros(n, n);
    for (&j, &p) in cols.iter().zip(powers) {
        if p > 0.0 {
            let col = u.column(j);
            out += (col * col.adjoint()).scale(p);
        }
    }
    numerics::hermitian_part(&out)
}

/// Euclidean projection of a Hermitian matrix onto `{X ⪰ 0 : Tr X = total}`:
/// `U₀ (D₀ − μI)⁺ U₀ᴴ`.
pub fn project_onto_simplex_psd(x0: &CMat, total: f64) -> Result<CMat> {
    if !(total > 0.0 && total.is_finite()) {
        return Err(WaterfillError::Domain(format!("power budget {total} is not positive")));
    }
    let eig = numerics::hermitian_eig(x0)?;
    let levels: Vec<f64> = eig.eigenvalues.iter().map(|d| -d).collect();
    let (_, powers) = fill_levels(&levels, total);
    let cols: Vec<usize> = (0..levels.len()).collect();
    Ok(assemble(&eig.eigenvectors, &cols, &powers))
}

fn ensure_nonzero_direct(ch: &InterferenceChannel, q: usize) -> Result<()> {
    if ch.direct(q).iter().all(|z| z.norm() == 0.0) {
        return Err(WaterfillError::DegenerateLink(q));
    }
    Ok(())
}

/// Positive eigenmodes of the effective channel after the relative rank screen.
struct Modes {
    eigenvectors: CMat,
    kept: Vec<usize>,
    gains: Vec<f64>,
}

fn positive_modes(m: &CMat, q: usize) -> Result<Modes> {
    let eig = numerics::hermitian_eig(m)?;
    let top = eig.max_eigenvalue();
    if !(top > 0.0) {
        return Err(WaterfillError::DegenerateLink(q));
    }
    let kept: Vec<usize> = (0..eig.dim()).filter(|&i| eig.eigenvalues[i] > DEFAULT_RANK_TOL * top).collect();
    let gains = kept.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(Modes { eigenvectors: eig.eigenvectors, kept, gains })
}

/// Classical MIMO waterfilling best response of user `q`.
pub fn best_response_wf(ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> Result<WaterfillResult> {
    ensure_nonzero_direct(ch, q)?;
    let m = effective_channel(ch, profile, q)?;
    let modes = positive_modes(&m, q)?;
    let (mu, powers) = water_level_solve(&modes.gains, ch.power(q))?;
    Ok(WaterfillResult {
        covariance: assemble(&modes.eigenvectors, &modes.kept, &powers),
        water_level: mu,
        active_modes: powers.iter().filter(|&&p| p > 0.0).count(),
    })
}

/// Upper bound on the data-dependent constant of the projection form that
/// does not depend on the other users' strategies.
pub fn c_q_bound(ch: &InterferenceChannel, q: usize) -> Result<f64> {
    ensure_nonzero_direct(ch, q)?;
    let h = ch.direct(q);
    let hh = numerics::hermitian_part(&(h.adjoint() * h));
    let eig = numerics::hermitian_eig(&hh)?;
    let top = eig.max_eigenvalue();
    let min_pos = eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > DEFAULT_RANK_TOL * top)
        .fold(f64::INFINITY, f64::min);
    let noise = numerics::psd_spectral_radius(ch.noise(q))?;
    let cross = (0..ch.num_users()).map(|r| numerics::gram_spectral_radius(ch.h(r, q))).fold(0.0, f64::max);
    let spread = noise + ch.num_users() as f64 * ch.max_power() * cross;
    Ok(ch.power(q) + spread / min_pos)
}

/// `P_q + max_i 1/d_i` for the current interference.
pub fn c_q_required(ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> Result<f64> {
    ensure_nonzero_direct(ch, q)?;
    let modes = positive_modes(&effective_channel(ch, profile, q)?, q)?;
    let weakest = modes.gains.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ch.power(q) + 1.0 / weakest)
}

/// Best response written as the projection
/// `[−((H_qqᴴ R_{−q}⁻¹ H_qq)♯ + c_q P_{𝒩(H_qq)})]` onto the feasible set.
pub fn wf_projection_form(
    ch: &InterferenceChannel,
    profile: &CovarianceProfile,
    q: usize,
    c_q: f64,
) -> Result<CMat> {
    let required = c_q_required(ch, profile, q)?;
    if c_q < required * (1.0 - 1e-12) {
        return Err(WaterfillError::ContractViolation { given: c_q, required });
    }
    let m = effective_channel(ch, profile, q)?;
    let pinv = numerics::hermitian_part(&numerics::pseudoinverse(&m, DEFAULT_RANK_TOL));
    let null = numerics::null_space_projector(ch.direct(q), DEFAULT_RANK_TOL);
    let x = -(pinv + null.scale(c_q));
    project_onto_simplex_psd(&x, ch.power(q))
}

/// `H_qq♯ R_{−q} H_qq♯ᴴ`; requires a full column-rank direct channel.
pub fn modified_noise(ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> Result<CMat> {
    ensure_nonzero_direct(ch, q)?;
    let h = ch.direct(q);
    if numerics::numerical_rank(h, DEFAULT_RANK_TOL) != h.ncols() {
        return Err(WaterfillError::NeedsReduction(q));
    }
    let pinv = numerics::pseudoinverse(h, DEFAULT_RANK_TOL);
    let r = mui_covariance(ch, profile, q);
    Ok(numerics::hermitian_part(&(&pinv * r * pinv.adjoint())))
}

/// Best response of the modified game: `[−H_qq♯ R_{−q} H_qq♯ᴴ]` projected onto
/// the feasible set, i.e. waterfilling over `(H_qq♯ R_{−q} H_qq♯ᴴ)⁻¹`.
pub fn best_response_modified(
    ch: &InterferenceChannel,
    profile: &CovarianceProfile,
    q: usize,
) -> Result<WaterfillResult> {
    let k = modified_noise(ch, profile, q)?;
    let eig = numerics::hermitian_eig(&k)?;
    let levels: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let (mu, powers) = fill_levels(&levels, ch.power(q));
    let cols: Vec<usize> = (0..levels.len()).collect();
    Ok(WaterfillResult {
        covariance: assemble(&eig.eigenvectors, &cols, &powers),
        water_level: mu,
        active_modes: powers.iter().filter(|&&p| p > 0.0).count(),
    })
}

/// Payoff of the modified game, `ln det(I + (H_qq♯ R_{−q} H_qq♯ᴴ)⁻¹ Q_q)`.
pub fn rate_modified(ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> Result<f64> {
    let k = modified_noise(ch, profile, q)?;
    let sum = numerics::hermitian_part(&(&k + profile.get(q)));
    Ok((numerics::hpd_log_det(&sum)? - numerics::hpd_log_det(&k)?).max(0.0))
}

impl Game {
    pub fn best_response(
        self,
        ch: &InterferenceChannel,
        profile: &CovarianceProfile,
        q: usize,
    ) -> Result<WaterfillResult> {
        match self {
            Game::Original => best_response_wf(ch, profile, q),
            Game::Modified => best_response_modified(ch, profile, q),
        }
    }

    /// The game's own payoff for user `q`.
    pub fn payoff(self, ch: &InterferenceChannel, profile: &CovarianceProfile, q: usize) -> Result<f64> {
        match self {
            Game::Original => rate(ch, profile, q),
            Game::Modified => rate_modified(ch, profile, q),
        }
    }
}

/// Eigenvalues of a Hermitian matrix as a plain vector (diagnostics).
pub fn spectrum(m: &CMat) -> Result<DVector<f64>> {
    Ok(numerics::hermitian_eig(m)?.eigenvalues)
}
