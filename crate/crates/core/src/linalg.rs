//! Dense complex linear-algebra helpers shared by the metric, surrogate and
//! zero-forcing code.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen, SVD};
pub use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Relative eigenvalue tolerance below which a Hermitian matrix is rejected as
/// not PSD. Smaller negative eigenvalues are clamped to zero.
pub const PSD_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// `X Xᴴ`.
pub fn gram(x: &CMat) -> CMat {
    x * x.adjoint()
}

/// Real trace of a (nominally Hermitian) matrix.
pub fn re_trace(a: &CMat) -> f64 {
    a.trace().re
}

/// `Re⟨X, Y⟩ = Re tr(Xᴴ Y)`.
pub fn re_inner(x: &CMat, y: &CMat) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

pub fn fro_norm_sq(x: &CMat) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_finite(x: &CMat) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigen-decomposition of a Hermitian PSD matrix with clamping.
///
/// Eigenvalues below `-PSD_TOL * ‖A‖` raise [`Error::NonPsd`]; the remaining
/// negative ones are set to zero.
pub fn psd_eigen(a: &CMat, what: &'static str) -> Result<(Vec<f64>, CMat)> {
    psd_eigen_scaled(a, 0.0, what)
}

/// As [`psd_eigen`], with the tolerance taken relative to
/// `max(‖A‖, scale)`. Use it for differences of matrices of size `scale`,
/// whose exact value may be (numerically) zero.
pub fn psd_eigen_scaled(a: &CMat, scale: f64, what: &'static str) -> Result<(Vec<f64>, CMat)> {
    if !is_finite(a) {
        return Err(Error::NonFiniteInput(what));
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min_eig < -PSD_TOL * norm.max(scale).max(f64::MIN_POSITIVE) {
        return Err(Error::NonPsd { what, min_eig, norm });
    }
    let vals = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    Ok((vals, eig.eigenvectors))
}

/// Returns `F` (r × n) with `Fᴴ F = A` for a Hermitian PSD `A`, dropping the
/// numerically null eigen-directions.
pub fn psd_factor(a: &CMat, what: &'static str) -> Result<CMat> {
    psd_factor_scaled(a, 0.0, what)
}

/// As [`psd_factor`], with tolerances relative to `max(‖A‖, scale)`.
pub fn psd_factor_scaled(a: &CMat, scale: f64, what: &'static str) -> Result<CMat> {
    let n = a.nrows();
    let (vals, vecs) = psd_eigen_scaled(a, scale, what)?;
    let top = vals.iter().fold(0.0f64, |m, &v| m.max(v)).max(scale);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 1e-14 * top && vals[i] > 0.0).collect();
    let mut f = CMat::zeros(keep.len(), n);
    for (r, &i) in keep.iter().enumerate() {
        let s = vals[i].sqrt();
        for col in 0..n {
            f[(r, col)] = vecs[(col, i)].conj() * s;
        }
    }
    Ok(f)
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn inv_pd(a: &CMat, what: &'static str) -> Result<CMat> {
    let chol = Cholesky::new(hermitian_part(a)).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(hermitian_part(&chol.inverse()))
}

/// `ln|A|` of a Hermitian positive-definite matrix, `2 Σ ln diag(L)`.
pub fn logdet_pd(a: &CMat, what: &'static str) -> Result<f64> {
    let chol = Cholesky::new(hermitian_part(a)).ok_or(Error::NotPositiveDefinite(what))?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..a.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// `ln|I + S⁻¹ Q|` for PSD `Q` and PD `S`, evaluated on the whitened matrix
/// `I + L⁻¹ Q L⁻ᴴ` with `S = L Lᴴ`.
pub fn logdet_whitened(q: &CMat, s: &CMat, what: &'static str) -> Result<f64> {
    let n = q.nrows();
    if s.nrows() != n || q.ncols() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{what}: Q is {}x{}, S is {}x{}",
            q.nrows(),
            q.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    let chol = Cholesky::new(hermitian_part(s)).ok_or(Error::NotPositiveDefinite(what))?;
    let l = chol.l();
    let tmp = l
        .solve_lower_triangular(q)
        .ok_or(Error::NumericalFailure(format!("{what}: triangular solve")))?;
    let w = l
        .solve_lower_triangular(&tmp.adjoint())
        .ok_or(Error::NumericalFailure(format!("{what}: triangular solve")))?;
    let whitened = identity(n) + hermitian_part(&w);
    logdet_pd(&whitened, what)
}

/// Orthonormal basis (columns) of the null space of `a` (m × n), together with
/// the numerical rank. Rank uses the tolerance `rel_tol · σ_max`.
pub fn null_space(a: &CMat, rel_tol: f64) -> (CMat, usize) {
    let n = a.ncols();
    if a.nrows() == 0 {
        return (identity(n), 0);
    }
    // SVD of the n × n matrix [Aᴴ | 0] gives a full set of left singular
    // vectors, the trailing ones spanning null(A).
    let mut padded = CMat::zeros(n, n.max(a.nrows()));
    padded.view_mut((0, 0), (n, a.nrows())).copy_from(&a.adjoint());
    let svd = SVD::new(padded, true, false);
    let u = svd.u.expect("requested U");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));
    let rank = sv.iter().filter(|&&v| v > rel_tol * smax && smax > 0.0).count();
    let null_cols: Vec<usize> = order.into_iter().skip(rank).filter(|&i| i < u.ncols()).collect();
    let mut basis = CMat::zeros(n, n - rank);
    for (k, &i) in null_cols.iter().take(n - rank).enumerate() {
        basis.set_column(k, &u.column(i));
    }
    (basis, rank)
}

/// Orthonormalizes the columns of `a` (thin QR, Q factor).
pub fn orthonormalize(a: &CMat) -> CMat {
    let qr = a.clone().qr();
    qr.q()
}
