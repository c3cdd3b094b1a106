//! Interference-channel data model and random scenario generators.
//!
//! All generators draw from [`ChaCha8Rng`] seeded with `seed_from_u64`, so a
//! channel is a pure function of its parameters and seed on every platform.
//! Complex Gaussian entries `CN(0, v)` have independent real and imaginary
//! parts, each `N(0, v/2)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, CMat};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel: {0}")]
    Invalid(String),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("malformed channel document: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

/// Per-user link parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLink {
    pub n_t: usize,
    pub n_r: usize,
    /// Transmit power budget `P_q`.
    pub power: f64,
    /// Noise covariance `R_nq` (Hermitian PD, `n_r × n_r`).
    pub noise: CMat,
}

/// `Q` transmit/receive pairs with cross channels `H_rq` (transmitter `r` to
/// receiver `q`, shape `n_R(q) × n_T(r)`).
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceChannel {
    users: Vec<UserLink>,
    /// Row-major over `(r, q)`.
    links: Vec<CMat>,
}

impl InterferenceChannel {
    /// Validates and builds a channel. `links[r * Q + q]` is `H_rq`.
    pub fn new(users: Vec<UserLink>, links: Vec<CMat>) -> Result<Self> {
        let ch = Self { users, links };
        ch.validate()?;
        Ok(ch)
    }

    /// Builds a channel from a closure producing `H_rq`.
    pub fn from_fn(users: Vec<UserLink>, mut f: impl FnMut(usize, usize) -> CMat) -> Result<Self> {
        let q = users.len();
        let links = (0..q * q).map(|i| f(i / q, i % q)).collect();
        Self::new(users, links)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[UserLink] {
        &self.users
    }

    pub fn user(&self, q: usize) -> &UserLink {
        &self.users[q]
    }

    /// `H_rq`: from transmitter `r` to receiver `q`.
    pub fn h(&self, r: usize, q: usize) -> &CMat {
        &self.links[r * self.users.len() + q]
    }

    pub fn direct(&self, q: usize) -> &CMat {
        self.h(q, q)
    }

    pub fn power(&self, q: usize) -> f64 {
        self.users[q].power
    }

    pub fn max_power(&self) -> f64 {
        self.users.iter().map(|u| u.power).fold(0.0, f64::max)
    }

    pub fn noise(&self, q: usize) -> &CMat {
        &self.users[q].noise
    }

    /// Copy with every power budget multiplied by `factor`.
    pub fn with_power_scale(&self, factor: f64) -> Result<Self> {
        let users = self
            .users
            .iter()
            .map(|u| UserLink { power: u.power * factor, ..u.clone() })
            .collect();
        Self::new(users, self.links.clone())
    }

    /// Copy with every cross channel `H_rq`, `r ≠ q`, multiplied by `factor`.
    pub fn with_cross_scale(&self, factor: f64) -> Result<Self> {
        let q = self.num_users();
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, h)| if i / q == i % q { h.clone() } else { h.scale(factor) })
            .collect();
        Self::new(self.users.clone(), links)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.users.len();
        if q == 0 {
            return Err(ChannelError::Invalid("channel has no users".into()));
        }
        if self.links.len() != q * q {
            return Err(ChannelError::Invalid(format!(
                "expected {} link matrices, found {}",
                q * q,
                self.links.len()
            )));
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.n_t == 0 || u.n_r == 0 {
                return Err(ChannelError::Invalid(format!("user {i} has a zero antenna count")));
            }
            if !(u.power.is_finite() && u.power > 0.0) {
                return Err(ChannelError::Invalid(format!("user {i} power {} is not positive", u.power)));
            }
            if u.noise.shape() != (u.n_r, u.n_r) {
                return Err(ChannelError::Invalid(format!(
                    "user {i} noise covariance is {:?}, expected {}x{}",
                    u.noise.shape(),
                    u.n_r,
                    u.n_r
                )));
            }
            let eig = numerics::hermitian_eig(&u.noise)
                .map_err(|e| ChannelError::Invalid(format!("user {i} noise covariance: {e}")))?;
            if eig.min_eigenvalue() <= 0.0 {
                return Err(ChannelError::Invalid(format!("user {i} noise covariance is not positive definite")));
            }
        }
        for r in 0..q {
            for rx in 0..q {
                let h = self.h(r, rx);
                let want = (self.users[rx].n_r, self.users[r].n_t);
                if h.shape() != want {
                    return Err(ChannelError::Invalid(format!(
                        "H[{r},{rx}] has shape {:?}, expected {:?}",
                        h.shape(),
                        want
                    )));
                }
                if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(ChannelError::Invalid(format!("H[{r},{rx}] has non-finite entries")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ChannelDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChannelDoc = serde_json::from_str(text)?;
        doc.into_channel()
    }
}

/// A complex matrix as row-major `[re, im]` pairs.
pub type MatrixDoc = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_doc(m: &CMat) -> MatrixDoc {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_doc(doc: &MatrixDoc, rows: usize, cols: usize, what: &str) -> Result<CMat> {
    if doc.len() != rows || doc.iter().any(|row| row.len() != cols) {
        return Err(ChannelError::Format(format!("{what}: expected a {rows}x{cols} matrix")));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| Complex64::new(doc[i][j][0], doc[i][j][1])))
}

#[derive(Debug, Serialize, Deserialize)]
struct UserDoc {
    #[serde(rename = "nT")]
    n_t: usize,
    #[serde(rename = "nR")]
    n_r: usize,
    #[serde(rename = "P")]
    power: f64,
    #[serde(rename = "Rn")]
    noise: MatrixDoc,
}

/// JSON interchange document for channel sets.
#[derive(Debug, Serialize, Deserialize)]
struct ChannelDoc {
    #[serde(rename = "Q")]
    num_users: usize,
    users: Vec<UserDoc>,
    /// Keys are `"r,q"` with zero-based indices.
    #[serde(rename = "H")]
    links: BTreeMap<String, MatrixDoc>,
}

impl From<&InterferenceChannel> for ChannelDoc {
    fn from(ch: &InterferenceChannel) -> Self {
        let q = ch.num_users();
        let users = ch
            .users
            .iter()
            .map(|u| UserDoc { n_t: u.n_t, n_r: u.n_r, power: u.power, noise: matrix_to_doc(&u.noise) })
            .collect();
        let mut links = BTreeMap::new();
        for r in 0..q {
            for rx in 0..q {
                links.insert(format!("{r},{rx}"), matrix_to_doc(ch.h(r, rx)));
            }
        }
        ChannelDoc { num_users: q, users, links }
    }
}

impl ChannelDoc {
    fn into_channel(self) -> Result<InterferenceChannel> {
        let q = self.num_users;
        if self.users.len() != q {
            return Err(ChannelError::Format(format!("Q = {q} but {} users listed", self.users.len())));
        }
        let mut users = Vec::with_capacity(q);
        for (i, u) in self.users.iter().enumerate() {
            let noise = matrix_from_doc(&u.noise, u.n_r, u.n_r, &format!("users[{i}].Rn"))?;
            users.push(UserLink { n_t: u.n_t, n_r: u.n_r, power: u.power, noise });
        }
        let mut links = Vec::with_capacity(q * q);
        for r in 0..q {
            for rx in 0..q {
                let key = format!("{r},{rx}");
                let doc = self
                    .links
                    .get(&key)
                    .ok_or_else(|| ChannelError::Format(format!("missing H[\"{key}\"]")))?;
                links.push(matrix_from_doc(doc, users[rx].n_r, users[r].n_t, &format!("H[\"{key}\"]"))?);
            }
        }
        if self.links.len() != q * q {
            return Err(ChannelError::Format(format!("expected {} entries in H, found {}", q * q, self.links.len())));
        }
        InterferenceChannel::new(users, links)
    }
}

/// Matrix of i.i.d. `CN(0, variance)` entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    let s = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// Deterministic RNG for `(seed, stream)`; distinct streams are independent.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Antenna counts of one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Antennas {
    pub n_t: usize,
    pub n_r: usize,
}

impl Antennas {
    pub fn new(n_t: usize, n_r: usize) -> Self {
        Self { n_t, n_r }
    }
}

/// Parameters of a flat i.i.d. Rayleigh interference channel.
#[derive(Debug, Clone)]
pub struct IidRayleigh {
    pub antennas: Vec<Antennas>,
    /// Variance of every cross-channel entry; direct entries have variance 1.
    pub cross_gain: f64,
    pub power: f64,
    /// White noise variance `σ²` (so `R_nq = σ² I`).
    pub noise_var: f64,
    pub seed: u64,
}

impl IidRayleigh {
    pub fn new(antennas: Vec<Antennas>, cross_gain: f64, seed: u64) -> Self {
        Self { antennas, cross_gain, power: 1.0, noise_var: 1.0, seed }
    }
}

pub fn generate_iid_rayleigh(params: &IidRayleigh) -> Result<InterferenceChannel> {
    if !(params.cross_gain >= 0.0 && params.cross_gain.is_finite()) {
        return Err(ChannelError::Domain(format!("cross_gain {} must be non-negative", params.cross_gain)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let users = white_noise_users(&params.antennas, params.power, params.noise_var);
    let ants = &params.antennas;
    InterferenceChannel::from_fn(users, |r, q| {
        let (rows, cols) = (ants[q].n_r, ants[r].n_t);
        if r == q {
            complex_gaussian(&mut rng, rows, cols, 1.0)
        } else if params.cross_gain == 0.0 {
            numerics::zeros(rows, cols)
        } else {
            complex_gaussian(&mut rng, rows, cols, params.cross_gain)
        }
    })
}

fn white_noise_users(antennas: &[Antennas], power: f64, noise_var: f64) -> Vec<UserLink> {
    antennas
        .iter()
        .map(|a| UserLink { n_t: a.n_t, n_r: a.n_r, power, noise: numerics::identity(a.n_r).scale(noise_var) })
        .collect()
}

/// Number of cells in the hexagonal layout.
pub const HEX_CELLS: usize = 7;

/// Minimum transmitter–receiver distance (in cell radii) used for path loss.
pub const MIN_DISTANCE: f64 = 0.05;

/// Seven-cell hexagonal downlink scenario with unit cell radius.
///
/// Base stations sit at the cell centres. Each mobile terminal lies on the
/// segment joining its cell's corner at angle 0 to the cell centre, at
/// normalized distance `d` from that corner, so `d → 1` moves it onto its own
/// base station.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HexScenario {
    pub d: f64,
    pub antennas: Antennas,
    /// `P_q / σ_q²` as a linear ratio.
    pub snr: f64,
    /// Path-loss exponent: entry variance is `dist^(−γ)`.
    pub path_loss: f64,
    pub seed: u64,
}

impl HexScenario {
    pub fn new(d: f64, antennas: Antennas, snr_db: f64, seed: u64) -> Self {
        Self { d, antennas, snr: db_to_linear(snr_db), path_loss: 2.0, seed }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Cell centres of the seven-cell cluster (flat-topped hexagons, radius 1).
pub fn hex_cell_centers() -> [(f64, f64); HEX_CELLS] {
    let mut out = [(0.0, 0.0); HEX_CELLS];
    let spacing = 3f64.sqrt();
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        let angle = std::f64::consts::FRAC_PI_6 + (k - 1) as f64 * std::f64::consts::FRAC_PI_3;
        *slot = (spacing * angle.cos(), spacing * angle.sin());
    }
    out
}

/// Mobile-terminal positions for normalized corner distance `d`.
pub fn hex_terminal_positions(d: f64) -> [(f64, f64); HEX_CELLS] {
    let centers = hex_cell_centers();
    let mut out = [(0.0, 0.0); HEX_CELLS];
    for (slot, &(cx, cy)) in out.iter_mut().zip(centers.iter()) {
        let corner = (cx + 1.0, cy);
        *slot = (corner.0 + d * (cx - corner.0), corner.1 + d * (cy - corner.1));
    }
    out
}

/// Path-loss variance matrix `[r][q] = max(dist(BS_r, MT_q), MIN_DISTANCE)^(−γ)`
/// for the first `users` cells.
pub fn hex_link_variances(d: f64, users: usize, path_loss: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&d) {
        return Err(ChannelError::Domain(format!("normalized distance d = {d} must lie in [0, 1)")));
    }
    if users == 0 || users > HEX_CELLS {
        return Err(ChannelError::Domain(format!("hex layout supports 1..={HEX_CELLS} users, got {users}")));
    }
    let bs = hex_cell_centers();
    let mt = hex_terminal_positions(d);
    Ok((0..users)
        .map(|r| {
            (0..users)
                .map(|q| {
                    let dist = ((bs[r].0 - mt[q].0).powi(2) + (bs[r].1 - mt[q].1).powi(2)).sqrt();
                    dist.max(MIN_DISTANCE).powf(-path_loss)
                })
                .collect()
        })
        .collect())
}

pub fn generate_hex_scenario(s: &HexScenario) -> Result<InterferenceChannel> {
    if s.antennas.n_t == 0 || s.antennas.n_r == 0 {
        return Err(ChannelError::Domain("antenna counts must be at least 1".into()));
    }
    let var = hex_link_variances(s.d, HEX_CELLS, s.path_loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let users = white_noise_users(&[s.antennas; HEX_CELLS], s.snr, 1.0);
    InterferenceChannel::from_fn(users, |r, q| complex_gaussian(&mut rng, s.antennas.n_r, s.antennas.n_t, var[r][q]))
}

/// Frequency-selective (FIR) interference channel realized as block-diagonal
/// MIMO matrices over `subcarriers` tones.
#[derive(Debug, Clone)]
pub struct FirWideband {
    pub users: usize,
    pub antennas: Antennas,
    /// Filter order `L`; each link has `L + 1` taps.
    pub order: usize,
    pub subcarriers: usize,
    /// Average per-tone power gain of link `(r, q)`; `None` means unit gain.
    pub link_variance: Option<Vec<Vec<f64>>>,
    pub power: f64,
    pub noise_var: f64,
    pub seed: u64,
}

/// `N`-point DFT of a tap sequence of `n_r × n_t` matrices:
/// `H(k) = Σ_l h_l e^{−j2πkl/N}`.
pub fn frequency_response(taps: &[CMat], subcarriers: usize) -> Vec<CMat> {
    assert!(!taps.is_empty() && taps.len() <= subcarriers, "need 1..=N taps");
    let (rows, cols) = taps[0].shape();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(subcarriers);
    let mut out = vec![numerics::zeros(rows, cols); subcarriers];
    let mut buf = vec![Complex64::new(0.0, 0.0); subcarriers];
    for i in 0..rows {
        for j in 0..cols {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (l, t) in taps.iter().enumerate() {
                buf[l] = t[(i, j)];
            }
            fft.process(&mut buf);
            for (k, z) in buf.iter().enumerate() {
                out[k][(i, j)] = *z;
            }
        }
    }
    out
}

pub fn generate_fir_wideband(p: &FirWideband) -> Result<InterferenceChannel> {
    if p.subcarriers < p.order || p.subcarriers == 0 {
        return Err(ChannelError::Domain(format!(
            "subcarrier count {} must be at least the filter order {}",
            p.subcarriers, p.order
        )));
    }
    if p.order + 1 > p.subcarriers {
        return Err(ChannelError::Domain(format!(
            "{} taps do not fit in a {}-point DFT",
            p.order + 1,
            p.subcarriers
        )));
    }
    if let Some(v) = &p.link_variance {
        if v.len() != p.users || v.iter().any(|row| row.len() != p.users) {
            return Err(ChannelError::Domain("link_variance must be users x users".into()));
        }
    }
    let n = p.subcarriers;
    let taps = p.order + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let wide = Antennas::new(n * p.antennas.n_t, n * p.antennas.n_r);
    let users = white_noise_users(&vec![wide; p.users], p.power, p.noise_var);
    InterferenceChannel::from_fn(users, |r, q| {
        let gain = p.link_variance.as_ref().map_or(1.0, |v| v[r][q]);
        let tap_var = gain / taps as f64;
        let h: Vec<CMat> =
            (0..taps).map(|_| complex_gaussian(&mut rng, p.antennas.n_r, p.antennas.n_t, tap_var)).collect();
        numerics::block_diag(&frequency_response(&h, n))
    })
}

/// Mean squared modulus of a set of complex samples.
pub fn entry_power(values: impl Iterator<Item = Complex64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, n), z| (s + z.norm_sqr(), n + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
