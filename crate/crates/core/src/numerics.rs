//! Dense complex linear-algebra kernels.
//!
//! Everything here is a pure function of its inputs. Hermitian inputs are
//! symmetrized before factorization and rejected when their asymmetry exceeds
//! [`HERMITIAN_TOL`] relative to their Frobenius norm. Eigenvector phases and
//! the ordering of repeated eigenvalues are not part of any contract; callers
//! should only rely on basis-invariant quantities.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense real matrix.
pub type RMat = DMatrix<f64>;

/// Default relative threshold below which singular values (or eigenvalues of
/// PSD matrices) are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Allowed relative asymmetry `‖A − Aᴴ‖_F / max(1, ‖A‖_F)` for Hermitian input.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

pub type Result<T> = std::result::Result<T, NumericsError>;

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

/// Builds a complex matrix from a row-major slice of `(re, im)` pairs.
pub fn from_rows(rows: usize, cols: usize, data: &[(f64, f64)]) -> CMat {
    assert_eq!(data.len(), rows * cols, "from_rows: wrong element count");
    CMat::from_fn(rows, cols, |i, j| {
        let (re, im) = data[i * cols + j];
        Complex64::new(re, im)
    })
}

/// Real diagonal matrix lifted to complex.
pub fn diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| c(v))))
}

/// Complex matrix with the given real entries.
pub fn real_to_complex(m: &RMat) -> CMat {
    m.map(c)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm()
}

/// Real part of the trace.
pub fn trace_re(a: &CMat) -> f64 {
    a.trace().re
}

/// Relative asymmetry of a square matrix.
pub fn asymmetry(a: &CMat) -> f64 {
    let diff = a - a.adjoint();
    diff.norm() / a.norm().max(1.0)
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

fn ensure_square(a: &CMat, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::Dimension(format!(
            "{what} requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn ensure_hermitian(a: &CMat, what: &str) -> Result<CMat> {
    ensure_square(a, what)?;
    let asym = asymmetry(a);
    if asym > HERMITIAN_TOL || !asym.is_finite() {
        return Err(NumericsError::NotHermitian(asym));
    }
    Ok(hermitian_part(a))
}

/// Eigendecomposition `A = U diag(λ) Uᴴ` of a Hermitian matrix with ascending
/// eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMat,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U f(Λ) Uᴴ` for a spectral function `f`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..n {
            let s = f(self.eigenvalues[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        hermitian_part(&(scaled * self.eigenvectors.adjoint()))
    }

    pub fn reconstruct(&self) -> CMat {
        self.reconstruct_with(|x| x)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn hermitian_eig(a: &CMat) -> Result<HermitianEigen> {
    let h = ensure_hermitian(a, "hermitian_eig")?;
    let n = h.nrows();
    if n == 0 {
        return Ok(HermitianEigen { eigenvalues: DVector::zeros(0), eigenvectors: zeros(0, 0) });
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok(HermitianEigen { eigenvalues, eigenvectors })
}

/// Thin SVD `A = U diag(σ) Vᴴ` with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: CMat,
    pub singular_values: DVector<f64>,
    pub v: CMat,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    /// Number of singular values above `rank_tol · σ_max`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let smax = self.max_singular_value();
        if smax == 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rank_tol * smax).count()
    }
}

pub fn svd(a: &CMat) -> SvdFactors {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return SvdFactors { u: zeros(m, 0), singular_values: DVector::zeros(0), v: zeros(n, 0) };
    }
    let dec = SVD::new(a.clone(), true, true);
    let u = dec.u.expect("svd: u requested");
    let v_t = dec.v_t.expect("svd: v_t requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let singular_values = DVector::from_iterator(k, order.iter().map(|&i| dec.singular_values[i]));
    let u = CMat::from_fn(m, k, |r, j| u[(r, order[j])]);
    let v = CMat::from_fn(n, k, |r, j| v_t[(order[j], r)].conj());
    SvdFactors { u, singular_values, v }
}

/// Count of singular values greater than `rank_tol · σ_max`.
pub fn numerical_rank(a: &CMat, rank_tol: f64) -> usize {
    svd(a).rank(rank_tol)
}

/// Moore–Penrose pseudoinverse; singular values at or below `rank_tol · σ_max`
/// are treated as zero.
pub fn pseudoinverse(a: &CMat, rank_tol: f64) -> CMat {
    let f = svd(a);
    let r = f.rank(rank_tol);
    let (m, n) = a.shape();
    let mut out = zeros(n, m);
    for j in 0..r {
        let s = f.singular_values[j];
        let vj = f.v.column(j);
        let uj = f.u.column(j);
        out += (vj * uj.adjoint()).scale(1.0 / s);
    }
    out
}

/// Orthogonal projector onto the null space of `a`.
pub fn null_space_projector(a: &CMat, rank_tol: f64) -> CMat {
    let n = a.ncols();
    let f = svd(a);
    let r = f.rank(rank_tol);
    let mut p = identity(n);
    for j in 0..r {
        let vj = f.v.column(j);
        p -= vj * vj.adjoint();
    }
    hermitian_part(&p)
}

/// Orthonormal basis of the row space (right singular vectors with non-zero
/// singular value).
pub fn row_space_basis(a: &CMat, rank_tol: f64) -> CMat {
    let f = svd(a);
    let r = f.rank(rank_tol);
    f.v.columns(0, r).into_owned()
}

/// Largest eigenvalue modulus of a square complex matrix.
pub fn spectral_radius(a: &CMat) -> Result<f64> {
    ensure_square(a, "spectral_radius")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if asymmetry(a) <= HERMITIAN_TOL {
        let e = hermitian_eig(a)?;
        return Ok(e.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    }
    let schur = nalgebra::Schur::new(a.clone());
    let (_, t) = schur.unpack();
    Ok((0..n).fold(0.0_f64, |m, i| m.max(t[(i, i)].norm())))
}

/// Largest eigenvalue modulus of a square real matrix.
pub fn spectral_radius_real(a: &RMat) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::Dimension(format!(
            "spectral_radius requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    spectral_radius(&real_to_complex(a))
}

/// Largest eigenvalue of a Hermitian PSD matrix, i.e. its spectral radius.
pub fn psd_spectral_radius(a: &CMat) -> Result<f64> {
    Ok(hermitian_eig(a)?.max_eigenvalue().max(0.0))
}

/// `ρ(AᴴA) = σ_max(A)²`.
pub fn gram_spectral_radius(a: &CMat) -> f64 {
    let s = svd(a).max_singular_value();
    s * s
}

// nalgebra's complex Cholesky takes complex square roots of negative pivots
// instead of failing, so pivots are checked here.
fn cholesky(h: CMat) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let chol = nalgebra::Cholesky::new(h).ok_or(NumericsError::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    if ok {
        Ok(chol)
    } else {
        Err(NumericsError::NotPositiveDefinite)
    }
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(a: &CMat) -> Result<CMat> {
    let h = ensure_hermitian(a, "hpd_inverse")?;
    Ok(hermitian_part(&cholesky(h)?.inverse()))
}

/// `X` solving `A X = B` for Hermitian positive-definite `A`.
pub fn hpd_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let h = ensure_hermitian(a, "hpd_solve")?;
    if h.nrows() != b.nrows() {
        return Err(NumericsError::Dimension(format!(
            "hpd_solve: {}x{} system with {} right-hand rows",
            h.nrows(),
            h.ncols(),
            b.nrows()
        )));
    }
    Ok(cholesky(h)?.solve(b))
}

/// `ln det A` for Hermitian positive-definite `A`.
pub fn hpd_log_det(a: &CMat) -> Result<f64> {
    let h = ensure_hermitian(a, "hpd_log_det")?;
    let chol = cholesky(h)?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Principal square root of a Hermitian PSD matrix.
pub fn psd_sqrt(a: &CMat) -> Result<CMat> {
    Ok(hermitian_eig(a)?.reconstruct_with(|x| x.max(0.0).sqrt()))
}

/// Block-diagonal assembly of square or rectangular blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Column-stacking `vec` operator.
pub fn vec_of(a: &CMat) -> DVector<Complex64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Spectral norm `σ_max(A)`.
pub fn spectral_norm(a: &CMat) -> f64 {
    svd(a).max_singular_value()
}
