//! Contraction certificates for the waterfilling map and the tools used to
//! check them numerically.
//!
//! `S`, `S^up`, `S̃` and `S̃^up` are Q×Q nonnegative matrices whose spectral
//! radius (or weighted norm) bounds the contraction factor of the joint
//! waterfilling map. Problem-dependent quantities that cannot be computed in
//! closed form (the worst-case oblique projections of tall channels) are
//! bracketed between a sampled lower estimate and the certified `S^up`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{seeded_rng, InterferenceChannel, UserLink};
use crate::numerics::{self, CMat, NumericsError, RMat, DEFAULT_RANK_TOL};
use crate::waterfill::{self, CovarianceProfile, WaterfillError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractionError {
    #[error("user {0}: direct channel is identically zero")]
    DegenerateLink(usize),
    #[error("user {0}: direct channel is not full column-rank; reduce the channel first")]
    NeedsReduction(usize),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Waterfill(WaterfillError),
}

impl From<WaterfillError> for ContractionError {
    fn from(e: WaterfillError) -> Self {
        match e {
            WaterfillError::DegenerateLink(q) => ContractionError::DegenerateLink(q),
            WaterfillError::NeedsReduction(q) => ContractionError::NeedsReduction(q),
            WaterfillError::Numerics(n) => ContractionError::Numerics(n),
            other => ContractionError::Waterfill(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, ContractionError>;

fn direct_pinv(ch: &InterferenceChannel, q: usize) -> Result<CMat> {
    let h = ch.direct(q);
    if h.iter().all(|z| z.norm() == 0.0) {
        return Err(ContractionError::DegenerateLink(q));
    }
    Ok(numerics::pseudoinverse(h, DEFAULT_RANK_TOL))
}

fn direct_rank(ch: &InterferenceChannel, q: usize) -> usize {
    numerics::numerical_rank(ch.direct(q), DEFAULT_RANK_TOL)
}

/// `true` when `rank(H_qq) = n_R`, i.e. row `q` of `S̃` is exact.
pub fn has_full_row_rank(ch: &InterferenceChannel, q: usize) -> bool {
    direct_rank(ch, q) == ch.user(q).n_r
}

/// `true` when `rank(H_qq) = n_T`.
pub fn has_full_column_rank(ch: &InterferenceChannel, q: usize) -> bool {
    direct_rank(ch, q) == ch.user(q).n_t
}

/// `[S]_qr = ρ(H_rqᴴ H_qq♯ᴴ H_qq♯ H_rq)` off the diagonal.
pub fn build_s(ch: &InterferenceChannel) -> Result<RMat> {
    let n = ch.num_users();
    let mut s = RMat::zeros(n, n);
    for q in 0..n {
        let pinv = direct_pinv(ch, q)?;
        for r in (0..n).filter(|&r| r != q) {
            s[(q, r)] = numerics::gram_spectral_radius(&(&pinv * ch.h(r, q)));
        }
    }
    Ok(s)
}

/// Interference-plus-noise to noise ratio of every receiver.
pub fn build_innr(ch: &InterferenceChannel) -> Result<Vec<f64>> {
    (0..ch.num_users())
        .map(|q| {
            let mut total = ch.noise(q).clone();
            for r in (0..ch.num_users()).filter(|&r| r != q) {
                let h = ch.h(r, q);
                total += (h * h.adjoint()).scale(ch.power(r));
            }
            let top = numerics::psd_spectral_radius(&numerics::hermitian_part(&total))?;
            let floor = numerics::hermitian_eig(ch.noise(q))?.min_eigenvalue();
            Ok((top / floor).max(1.0))
        })
        .collect()
}

/// `[S^up]_qr = innr_q · ρ(H_rqᴴ H_rq) · ρ(H_qq♯ᴴ H_qq♯)`.
pub fn build_s_up(ch: &InterferenceChannel) -> Result<RMat> {
    let n = ch.num_users();
    let innr = build_innr(ch)?;
    let mut s = RMat::zeros(n, n);
    for q in 0..n {
        let amp = numerics::gram_spectral_radius(&direct_pinv(ch, q)?);
        for r in (0..n).filter(|&r| r != q) {
            s[(q, r)] = innr[q] * numerics::gram_spectral_radius(ch.h(r, q)) * amp;
        }
    }
    Ok(s)
}

/// `G_rq(Δ) = (H_qqᴴ R⁻¹ H_qq)⁻¹ H_qqᴴ R⁻¹ H_rq` at `R = R_{−q}(Δ)`.
fn g_matrix(ch: &InterferenceChannel, q: usize, r: usize, r_inv_h: &CMat, m_inv: &CMat) -> CMat {
    m_inv * r_inv_h.adjoint() * ch.h(r, q)
}

fn require_column_rank(ch: &InterferenceChannel, q: usize) -> Result<()> {
    direct_pinv(ch, q)?;
    if !has_full_column_rank(ch, q) {
        return Err(ContractionError::NeedsReduction(q));
    }
    Ok(())
}

/// `R_{−q}⁻¹ H_qq` and `(H_qqᴴ R_{−q}⁻¹ H_qq)⁻¹` for a Hermitian interference profile.
fn weighted_normal(ch: &InterferenceChannel, q: usize, profile: &CovarianceProfile) -> Result<(CMat, CMat)> {
    let r = waterfill::mui_covariance(ch, profile, q);
    let r_inv_h = numerics::hpd_solve(&r, ch.direct(q))?;
    let m = numerics::hermitian_part(&(ch.direct(q).adjoint() * &r_inv_h));
    Ok((r_inv_h, numerics::hpd_inverse(&m)?))
}

/// `α_rq(Δ) = ρ(G_rqᴴ(Δ) G_rq(Δ))`.
pub fn sample_alpha(ch: &InterferenceChannel, q: usize, r: usize, delta: &CovarianceProfile) -> Result<f64> {
    require_column_rank(ch, q)?;
    if r == q {
        return Ok(0.0);
    }
    let (r_inv_h, m_inv) = weighted_normal(ch, q, delta)?;
    Ok(numerics::gram_spectral_radius(&g_matrix(ch, q, r, &r_inv_h, &m_inv)))
}

/// A point `t Q⁽¹⁾ + (1 − t) Q⁽²⁾` between two random feasible profiles.
pub fn random_delta<R: Rng + ?Sized>(ch: &InterferenceChannel, rng: &mut R) -> CovarianceProfile {
    let a = CovarianceProfile::random(ch, rng);
    let b = CovarianceProfile::random(ch, rng);
    let t: f64 = rng.random();
    CovarianceProfile::new(a.blocks().iter().zip(b.blocks()).map(|(x, y)| x.scale(t) + y.scale(1.0 - t)).collect())
}

/// Elementwise maximum of `α_rq(Δ)` over `samples` random `Δ`.
///
/// Only rows whose direct channel has full column rank are sampled; the other
/// rows stay at zero. Sample `i` uses RNG stream `i` of `seed`.
pub fn sample_alpha_max(ch: &InterferenceChannel, samples: usize, seed: u64) -> Result<RMat> {
    let n = ch.num_users();
    let mut out = RMat::zeros(n, n);
    let rows: Vec<usize> = (0..n).filter(|&q| has_full_column_rank(ch, q)).collect();
    for i in 0..samples {
        let mut rng = seeded_rng(seed, i as u64);
        let delta = random_delta(ch, &mut rng);
        for &q in &rows {
            let (r_inv_h, m_inv) = weighted_normal(ch, q, &delta)?;
            for r in (0..n).filter(|&r| r != q) {
                let a = numerics::gram_spectral_radius(&g_matrix(ch, q, r, &r_inv_h, &m_inv));
                out[(q, r)] = out[(q, r)].max(a);
            }
        }
    }
    Ok(out)
}

/// Lower estimate of the worst-case certificate: the sampled maxima, floored
/// by `S` (the value attained by the orthogonal projector). Rows of users
/// without full column-rank direct channels carry `S`.
pub fn estimate_s_p_lower(ch: &InterferenceChannel, samples: usize, seed: u64) -> Result<RMat> {
    let s = build_s(ch)?;
    if samples == 0 {
        return Ok(RMat::zeros(ch.num_users(), ch.num_users()));
    }
    Ok(s.zip_map(&sample_alpha_max(ch, samples, seed)?, f64::max))
}

/// Where a row of `S̃` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    /// `rank(H_qq) = n_R`: the row of `S`, exact.
    Exact,
    /// Sampled lower estimate of the worst case.
    SampledLower,
    /// Certified upper bound `S^up`.
    UpperBound,
}

fn mix_rows(ch: &InterferenceChannel, exact: &RMat, other: &RMat, other_src: RowSource) -> (RMat, Vec<RowSource>) {
    let n = ch.num_users();
    let mut out = RMat::zeros(n, n);
    let mut src = Vec::with_capacity(n);
    for q in 0..n {
        let (from, tag) = if has_full_row_rank(ch, q) { (exact, RowSource::Exact) } else { (other, other_src) };
        out.set_row(q, &from.row(q));
        src.push(tag);
    }
    (out, src)
}

/// `S̃`: rows of `S` where `rank(H_qq) = n_R`, rows of `sampled_lower` elsewhere.
pub fn build_s_tilde(ch: &InterferenceChannel, sampled_lower: &RMat) -> Result<RMat> {
    Ok(mix_rows(ch, &build_s(ch)?, sampled_lower, RowSource::SampledLower).0)
}

/// `S̃^up`: rows of `S` where `rank(H_qq) = n_R`, rows of `S^up` elsewhere.
pub fn build_s_tilde_up(ch: &InterferenceChannel) -> Result<RMat> {
    Ok(mix_rows(ch, &build_s(ch)?, &build_s_up(ch)?, RowSource::UpperBound).0)
}

/// `max_q (1/w_q) Σ_r |A_qr| w_r`.
pub fn weighted_matrix_norm(a: &RMat, w: &[f64]) -> Result<f64> {
    check_weights(w, a.nrows())?;
    if a.ncols() != a.nrows() {
        return Err(ContractionError::Dimension(format!("{}x{} matrix", a.nrows(), a.ncols())));
    }
    Ok((0..a.nrows())
        .map(|q| (0..a.ncols()).map(|r| a[(q, r)].abs() * w[r]).sum::<f64>() / w[q])
        .fold(0.0, f64::max))
}

/// `max_q ‖Δ_q‖_F / w_q`.
pub fn block_max_norm(blocks: &[CMat], w: &[f64]) -> Result<f64> {
    check_weights(w, blocks.len())?;
    Ok(blocks.iter().zip(w).map(|(b, wq)| b.norm() / wq).fold(0.0, f64::max))
}

fn check_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(ContractionError::Dimension(format!("{} weights for {n} users", w.len())));
    }
    if let Some(bad) = w.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(ContractionError::Domain(format!("weight {bad} is not positive")));
    }
    Ok(())
}

/// Positive weight vector aligned with the Perron eigenvector of a
/// nonnegative matrix. Power iteration on `A + I`; entries are floored at
/// `1e-9` of the largest so the result is strictly positive.
pub fn perron_vector(a: &RMat) -> Vec<f64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let shifted = a + RMat::identity(n, n);
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..100_000 {
        let mut next = &shifted * &v;
        let norm = next.iter().sum::<f64>();
        if !(norm > 0.0) {
            break;
        }
        next /= norm;
        let diff = (&next - &v).amax();
        v = next;
        if diff < 1e-15 {
            break;
        }
    }
    let top = v.max();
    v.iter().map(|x| x.max(1e-9 * top)).collect()
}

/// Three-valued status of the exact uniqueness condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C1Status {
    /// `ρ(S̃) < 1` holds: exactly computed, or implied by `ρ(S̃^up) < 1`.
    CertifiedTrue,
    /// `ρ(S̃) ≥ 1`: exactly computed, or implied by the sampled lower estimate.
    CertifiedFalse,
    /// The bracket `[sampled, S^up]` straddles 1.
    Undetermined,
}

/// How weights for the low-MUI conditions are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    #[default]
    Ones,
    /// Perron vectors of the relevant matrix (right for row conditions, left
    /// for column conditions).
    Perron,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub weights: Weights,
    /// Number of random `Δ` used for the sampled lower estimate.
    pub samples: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { weights: Weights::Ones, samples: 1000, seed: 0 }
    }
}

/// Per-user flags of a weighted row or column condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCondition {
    pub weights: Vec<f64>,
    pub sums: Vec<f64>,
    pub per_user: Vec<bool>,
    pub holds: bool,
}

impl WeightedCondition {
    fn rows(a: &RMat, w: Vec<f64>) -> Self {
        let n = a.nrows();
        let sums: Vec<f64> = (0..n).map(|q| (0..n).map(|r| a[(q, r)] * w[r]).sum::<f64>() / w[q]).collect();
        Self::finish(w, sums)
    }

    fn columns(a: &RMat, w: Vec<f64>) -> Self {
        let n = a.nrows();
        let sums: Vec<f64> = (0..n).map(|r| (0..n).map(|q| a[(q, r)] * w[q]).sum::<f64>() / w[r]).collect();
        Self::finish(w, sums)
    }

    fn finish(weights: Vec<f64>, sums: Vec<f64>) -> Self {
        let per_user: Vec<bool> = sums.iter().map(|&s| s < 1.0).collect();
        let holds = per_user.iter().all(|&b| b);
        Self { weights, sums, per_user, holds }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRadii {
    pub s: f64,
    pub s_up: f64,
    pub s_tilde: f64,
    pub s_tilde_up: f64,
    pub s_sampled_lower: f64,
}

/// All certificates of one channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub users: usize,
    pub s: Vec<Vec<f64>>,
    pub s_up: Vec<Vec<f64>>,
    pub s_tilde: Vec<Vec<f64>>,
    pub s_tilde_up: Vec<Vec<f64>>,
    pub s_sampled_lower: Vec<Vec<f64>>,
    pub innr: Vec<f64>,
    pub radii: SpectralRadii,
    /// Provenance of each row of `S̃` (and hence of each entry in that row).
    pub s_tilde_rows: Vec<RowSource>,
    /// Provenance of each row of `S̃^up`.
    pub s_tilde_up_rows: Vec<RowSource>,
    pub c1: C1Status,
    /// `ρ(S̃) < 1` evaluated on the sampled estimate; only an estimate when
    /// some row is not exact.
    pub c1_estimate: bool,
    pub c2: bool,
    pub c3: WeightedCondition,
    pub c4: WeightedCondition,
    pub c5: WeightedCondition,
    pub c6: WeightedCondition,
    pub c7: bool,
    pub samples: usize,
    pub seed: u64,
}

impl ContractionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn to_rows(m: &RMat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Evaluates every certificate and condition for `ch`.
pub fn check_conditions(ch: &InterferenceChannel, opts: &CheckOptions) -> Result<ContractionReport> {
    let n = ch.num_users();
    if let Weights::Custom(w) = &opts.weights {
        check_weights(w, n)?;
    }
    let s = build_s(ch)?;
    let s_up = build_s_up(ch)?;
    let innr = build_innr(ch)?;
    let all_exact = (0..n).all(|q| has_full_row_rank(ch, q));
    let lower = if all_exact {
        s.clone()
    } else {
        s.zip_map(&estimate_s_p_lower(ch, opts.samples, opts.seed)?, f64::max)
    };
    let (s_tilde, s_tilde_rows) = mix_rows(ch, &s, &lower, RowSource::SampledLower);
    let (s_tilde_up, s_tilde_up_rows) = mix_rows(ch, &s, &s_up, RowSource::UpperBound);

    let rho = |m: &RMat| numerics::spectral_radius_real(m);
    let radii = SpectralRadii {
        s: rho(&s)?,
        s_up: rho(&s_up)?,
        s_tilde: rho(&s_tilde)?,
        s_tilde_up: rho(&s_tilde_up)?,
        s_sampled_lower: rho(&lower)?,
    };
    let c2 = radii.s_tilde_up < 1.0;
    let c1_estimate = radii.s_tilde < 1.0;
    let c1 = if all_exact {
        if c1_estimate { C1Status::CertifiedTrue } else { C1Status::CertifiedFalse }
    } else if c2 {
        C1Status::CertifiedTrue
    } else if !c1_estimate && opts.samples > 0 {
        C1Status::CertifiedFalse
    } else {
        C1Status::Undetermined
    };

    let weights = |m: &RMat, left: bool| -> Vec<f64> {
        match &opts.weights {
            Weights::Ones => vec![1.0; n],
            Weights::Custom(w) => w.clone(),
            Weights::Perron if left => perron_vector(&m.transpose()),
            Weights::Perron => perron_vector(m),
        }
    };
    Ok(ContractionReport {
        users: n,
        c3: WeightedCondition::rows(&s, weights(&s, false)),
        c4: WeightedCondition::columns(&s, weights(&s, true)),
        c5: WeightedCondition::rows(&s_up, weights(&s_up, false)),
        c6: WeightedCondition::columns(&s_up, weights(&s_up, true)),
        c7: radii.s < 1.0,
        s: to_rows(&s),
        s_up: to_rows(&s_up),
        s_tilde: to_rows(&s_tilde),
        s_tilde_up: to_rows(&s_tilde_up),
        s_sampled_lower: to_rows(&lower),
        innr,
        radii,
        s_tilde_rows,
        s_tilde_up_rows,
        c1,
        c1_estimate,
        c2,
        samples: opts.samples,
        seed: opts.seed,
    })
}

/// Channel with rank-deficient direct links replaced by their row-space
/// restriction.
#[derive(Debug, Clone)]
pub struct ReducedChannel {
    pub channel: InterferenceChannel,
    /// `V_{q,1}` (n_T × r_q) for reduced users, `None` for untouched ones.
    pub bases: Vec<Option<CMat>>,
    pub reduced_users: Vec<usize>,
}

impl ReducedChannel {
    /// `Q_q = V_{q,1} Q̄_q V_{q,1}ᴴ` for reduced users.
    pub fn lift(&self, reduced: &CovarianceProfile) -> CovarianceProfile {
        CovarianceProfile::new(
            reduced
                .blocks()
                .iter()
                .zip(&self.bases)
                .map(|(q, v)| match v {
                    Some(v) => numerics::hermitian_part(&(v * q * v.adjoint())),
                    None => q.clone(),
                })
                .collect(),
        )
    }

    /// `Q̄_q = V_{q,1}ᴴ Q_q V_{q,1}` for reduced users.
    pub fn restrict(&self, full: &CovarianceProfile) -> CovarianceProfile {
        CovarianceProfile::new(
            full.blocks()
                .iter()
                .zip(&self.bases)
                .map(|(q, v)| match v {
                    Some(v) => numerics::hermitian_part(&(v.adjoint() * q * v)),
                    None => q.clone(),
                })
                .collect(),
        )
    }

    pub fn is_identity(&self) -> bool {
        self.reduced_users.is_empty()
    }
}

/// Restricts every user whose direct channel is column-rank deficient
/// (`rank(H_qq) < n_T`, which includes every fat link) to the row space of
/// `H_qq`.
pub fn reduce_rank_deficient(ch: &InterferenceChannel) -> Result<ReducedChannel> {
    let n = ch.num_users();
    let mut bases = Vec::with_capacity(n);
    let mut reduced_users = Vec::new();
    for q in 0..n {
        let u = ch.user(q);
        let rank = direct_rank(ch, q);
        if rank == 0 {
            return Err(ContractionError::DegenerateLink(q));
        }
        if rank < u.n_t {
            bases.push(Some(numerics::row_space_basis(ch.direct(q), DEFAULT_RANK_TOL)));
            reduced_users.push(q);
        } else {
            bases.push(None);
        }
    }
    let users: Vec<UserLink> = ch
        .users()
        .iter()
        .zip(&bases)
        .map(|(u, v)| UserLink { n_t: v.as_ref().map_or(u.n_t, |v| v.ncols()), ..u.clone() })
        .collect();
    let channel = InterferenceChannel::from_fn(users, |r, q| match &bases[r] {
        Some(v) => ch.h(r, q) * v,
        None => ch.h(r, q).clone(),
    })
    .map_err(|e| ContractionError::Domain(e.to_string()))?;
    Ok(ReducedChannel { channel, bases, reduced_users })
}

/// `F_q(Q_{−q}) = (H_qqᴴ R_{−q}⁻¹ H_qq)⁻¹` for a Hermitian profile.
pub fn f_map(ch: &InterferenceChannel, q: usize, profile: &CovarianceProfile) -> Result<CMat> {
    require_column_rank(ch, q)?;
    Ok(weighted_normal(ch, q, profile)?.1)
}

// Same map through LU, valid for the non-Hermitian perturbations used by
// finite differences (F_q is holomorphic in the entries of Q_{−q}).
fn f_map_general(ch: &InterferenceChannel, q: usize, blocks: &[CMat]) -> Result<CMat> {
    let mut r = ch.noise(q).clone();
    for o in (0..ch.num_users()).filter(|&o| o != q) {
        let h = ch.h(o, q);
        r += h * &blocks[o] * h.adjoint();
    }
    let h = ch.direct(q);
    let singular = || ContractionError::Numerics(NumericsError::NotPositiveDefinite);
    let r_inv_h = r.lu().solve(h).ok_or_else(singular)?;
    (h.adjoint() * r_inv_h).try_inverse().ok_or_else(singular)
}

/// Complex Jacobian of `vec F_q` with respect to `[vec Q_r]_{r≠q}`, stacked
/// horizontally as `[G_rq* ⊗ G_rq]_{r≠q}`.
pub fn jacobian_f(ch: &InterferenceChannel, q: usize, profile: &CovarianceProfile) -> Result<CMat> {
    require_column_rank(ch, q)?;
    let (r_inv_h, m_inv) = weighted_normal(ch, q, profile)?;
    let blocks: Vec<CMat> = (0..ch.num_users())
        .filter(|&r| r != q)
        .map(|r| {
            let g = g_matrix(ch, q, r, &r_inv_h, &m_inv);
            g.conjugate().kronecker(&g)
        })
        .collect();
    let rows = ch.user(q).n_t * ch.user(q).n_t;
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = numerics::zeros(rows, cols);
    let mut c0 = 0;
    for b in &blocks {
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    Ok(out)
}

/// `[[Re J, −Im J], [Im J, Re J]]`.
pub fn realify(j: &CMat) -> RMat {
    let (m, n) = j.shape();
    let mut out = RMat::zeros(2 * m, 2 * n);
    for a in 0..m {
        for b in 0..n {
            let z = j[(a, b)];
            out[(a, b)] = z.re;
            out[(a, n + b)] = -z.im;
            out[(m + a, b)] = z.im;
            out[(m + a, n + b)] = z.re;
        }
    }
    out
}

/// Central-difference Jacobian of the realified map
/// `[Re vec Q_{−q}; Im vec Q_{−q}] ↦ [Re vec F_q; Im vec F_q]`.
pub fn finite_diff_jacobian(
    ch: &InterferenceChannel,
    q: usize,
    profile: &CovarianceProfile,
    h: f64,
) -> Result<RMat> {
    if !(1e-7..=1e-4).contains(&h) {
        return Err(ContractionError::Domain(format!("step {h} outside [1e-7, 1e-4]")));
    }
    require_column_rank(ch, q)?;
    let others: Vec<usize> = (0..ch.num_users()).filter(|&r| r != q).collect();
    let n_in: usize = others.iter().map(|&r| ch.user(r).n_t.pow(2)).sum();
    let n_out = ch.user(q).n_t.pow(2);
    let mut out = RMat::zeros(2 * n_out, 2 * n_in);
    let base: Vec<CMat> = profile.blocks().to_vec();
    let mut col = 0;
    for &r in &others {
        let len = ch.user(r).n_t.pow(2);
        for k in 0..len {
            for (part, unit) in [(0, numerics::c(1.0)), (1, nalgebra::Complex::new(0.0, 1.0))] {
                let eval = |sign: f64| -> Result<CMat> {
                    let mut blocks = base.clone();
                    blocks[r][k] += unit * (sign * h);
                    f_map_general(ch, q, &blocks)
                };
                let diff = (eval(1.0)? - eval(-1.0)?) / numerics::c(2.0 * h);
                let target = col + k + part * n_in;
                for (i, z) in diff.iter().enumerate() {
                    out[(i, target)] = z.re;
                    out[(n_out + i, target)] = z.im;
                }
            }
        }
        col += len;
    }
    Ok(out)
}

/// Result of checking the matrix mean-value inequality along a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanValueOutcome {
    pub holds: bool,
    /// `‖F(Y) − F(X)‖_F`.
    pub lhs: f64,
    /// `max_t ‖D F(Z_t)‖₂ · ‖Y − X‖_F`.
    pub rhs: f64,
    /// The grid point attaining the maximum.
    pub witness_t: f64,
}

/// Checks `‖F(Y) − F(X)‖_F ≤ max_t ‖D F(tY + (1−t)X)‖₂ ‖Y − X‖_F` on a uniform
/// grid of `t_grid` points in `[0, 1]`.
pub fn mean_value_check(
    ch: &InterferenceChannel,
    q: usize,
    x: &CovarianceProfile,
    y: &CovarianceProfile,
    t_grid: usize,
) -> Result<MeanValueOutcome> {
    if t_grid == 0 {
        return Err(ContractionError::Domain("empty t grid".into()));
    }
    let lhs = (f_map(ch, q, y)? - f_map(ch, q, x)?).norm();
    let dist = (0..ch.num_users())
        .filter(|&r| r != q)
        .map(|r| (y.get(r) - x.get(r)).norm_squared())
        .sum::<f64>()
        .sqrt();
    let mut best = (0.0, 0.5);
    for k in 0..t_grid {
        let t = if t_grid == 1 { 0.5 } else { k as f64 / (t_grid - 1) as f64 };
        let z = CovarianceProfile::new(
            x.blocks().iter().zip(y.blocks()).map(|(a, b)| b.scale(t) + a.scale(1.0 - t)).collect(),
        );
        let norm = numerics::spectral_norm(&jacobian_f(ch, q, &z)?);
        if norm > best.0 {
            best = (norm, t);
        }
    }
    let rhs = best.0 * dist;
    Ok(MeanValueOutcome { holds: lhs <= rhs * (1.0 + 1e-6), lhs, rhs, witness_t: best.1 })
}

/// `RMat` from nested rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> RMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}
