//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here works on `nalgebra` dense matrices of `Complex64`. Problem
//! sizes are small (dimensions up to a few dozen), so no effort is spent on
//! sparsity or blocking.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Asymmetry above which a matrix is rejected as non-Hermitian.
pub const HERMITIAN_REJECT_TOL: f64 = 1e-8;
/// Relative PSD acceptance band: `λ_min ≥ -PSD_TOL · max(1, ‖H‖₂)`.
pub const PSD_TOL: f64 = 1e-8;
/// Eigenvalue below which `sqrtm_psd` refuses its input.
pub const SQRT_REJECT_TOL: f64 = 1e-8;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// the matching orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEig {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V†`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            let s = f(v);
            scaled.column_mut(k).scale_mut(s);
        }
        let out = &scaled * self.vectors.adjoint();
        debug_assert_eq!(out.nrows(), n);
        hermitian_part(&out)
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map_values(|v| v)
    }
}

pub fn ensure_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entrywise modulus of `H - H†`.
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(H + H†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn checked_hermitian(h: &CMatrix) -> Result<CMatrix> {
    ensure_square(h)?;
    if !all_finite(h) {
        return Err(Error::NonFinite);
    }
    let asym = hermitian_asymmetry(h);
    if asym > HERMITIAN_REJECT_TOL * h.norm().max(1.0) {
        return Err(Error::NonHermitian { asymmetry: asym });
    }
    Ok(hermitian_part(h))
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn eigh(h: &CMatrix) -> Result<HermitianEig> {
    let sym = checked_hermitian(h)?;
    Ok(eigh_unchecked(&sym))
}

/// Eigendecomposition of a matrix already known to be Hermitian.
pub(crate) fn eigh_unchecked(sym: &CMatrix) -> HermitianEig {
    let n = sym.nrows();
    if n == 0 {
        return HermitianEig {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = sym.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEig { values, vectors }
}

/// Spectral norm of a Hermitian matrix.
pub fn spectral_norm_hermitian(h: &CMatrix) -> Result<f64> {
    let e = eigh(h)?;
    Ok(e.min().abs().max(e.max().abs()))
}

/// `M = U diag(s) V†` with singular values in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd<T: ComplexField<RealField = f64>> {
    pub u: DMatrix<T>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<T>,
}

/// Scalars with a dense SVD backend.
pub trait SvdScalar: ComplexField<RealField = f64> + Copy {
    fn raw_svd(m: &DMatrix<Self>) -> Option<Svd<Self>>;
}

// nalgebra 0.35's SVD returns wrong factorizations on rank-deficient input
// without reporting it, so decompositions go through faer.
macro_rules! faer_svd {
    ($t:ty) => {
        impl SvdScalar for $t {
            fn raw_svd(m: &DMatrix<$t>) -> Option<Svd<$t>> {
                let f = faer::Mat::<$t>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
                let s = f.thin_svd().ok()?;
                let (fu, fv, fs) = (s.U(), s.V(), s.S().column_vector());
                let k = fs.nrows();
                Some(Svd {
                    u: DMatrix::from_fn(m.nrows(), k, |i, j| fu[(i, j)]),
                    singular_values: DVector::from_fn(k, |i, _| ComplexField::real(fs[i])),
                    v_t: DMatrix::from_fn(k, m.ncols(), |i, j| ComplexField::conjugate(fv[(j, i)])),
                })
            }
        }
    };
}
faer_svd!(f64);
faer_svd!(C64);

fn svd_ok<T: SvdScalar>(m: &DMatrix<T>, s: &Svd<T>) -> bool {
    let mut us = s.u.clone();
    for (j, &x) in s.singular_values.iter().enumerate() {
        us.column_mut(j).scale_mut(x);
    }
    let err = (&us * &s.v_t - m).iter().map(|z| z.modulus()).fold(0.0, f64::max);
    let scale = m.iter().map(|z| z.modulus()).fold(1.0, f64::max);
    let k = s.singular_values.len();
    let orth = (s.u.adjoint() * &s.u - DMatrix::<T>::identity(k, k))
        .iter()
        .chain((&s.v_t * s.v_t.adjoint() - DMatrix::<T>::identity(k, k)).iter())
        .map(|z| z.modulus())
        .fold(0.0, f64::max);
    s.singular_values.iter().all(|x| x.is_finite())
        && err <= 1e-11 * scale * (k.max(1) as f64)
        && orth <= 1e-10
}

/// Thin singular value decomposition, verified by reconstruction.
pub fn checked_svd<T: SvdScalar>(m: &DMatrix<T>) -> Result<Svd<T>> {
    if m.iter().any(|z| !z.modulus().is_finite()) {
        return Err(Error::NonFinite);
    }
    match T::raw_svd(m) {
        Some(s) if svd_ok(m, &s) => Ok(s),
        _ => Err(Error::SvdFailed),
    }
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> Result<f64> {
    ensure_square(a)?;
    if !all_finite(a) {
        return Err(Error::NonFinite);
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    if hermitian_asymmetry(a) <= 1e-14 * a.norm().max(1.0) {
        let e = eigh_unchecked(&hermitian_part(a));
        return Ok(e.values.iter().map(|v| v.abs()).sum());
    }
    Ok(checked_svd(a)?.singular_values.iter().sum())
}

/// Principal square root of a PSD matrix. Eigenvalues in `[-1e-8, 0)` are
/// clipped to zero.
pub fn sqrtm_psd(p: &CMatrix) -> Result<CMatrix> {
    let e = eigh(p)?;
    if e.min() < -SQRT_REJECT_TOL * e.max().abs().max(1.0) {
        return Err(Error::NotPsd { min_eig: e.min() });
    }
    Ok(e.map_values(|v| v.max(0.0).sqrt()))
}

/// Uhlmann fidelity `tr √(√ω ρ √ω)` (not squared).
pub fn fidelity(rho: &CMatrix, omega: &CMatrix) -> Result<f64> {
    let d = ensure_square(rho)?;
    let d2 = ensure_square(omega)?;
    if d != d2 {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: d2,
        });
    }
    let s = sqrtm_psd(omega)?;
    let inner = hermitian_part(&(&s * rho * &s));
    let e = eigh_unchecked(&inner);
    let f: f64 = e.values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Purifications of `rho` and `omega` on system ⊗ ancilla (ancilla of the
/// same dimension, index `s * d + a`) whose overlap attains the fidelity.
///
/// `|ξ_ρ⟩ = (√ρ ⊗ I)|Ω⟩` and `|ξ_ω⟩ = (√ω V ⊗ I)|Ω⟩` with `V` the unitary from
/// the polar decomposition of `√ρ √ω`.
pub fn max_overlap_purifications(rho: &CMatrix, omega: &CMatrix) -> Result<(CVector, CVector)> {
    let d = ensure_square(rho)?;
    let d2 = ensure_square(omega)?;
    if d != d2 {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: d2,
        });
    }
    let sr = sqrtm_psd(rho)?;
    let so = sqrtm_psd(omega)?;
    let y = &sr * &so;
    let Svd { u, v_t, .. } = checked_svd(&y)?;
    // Y = U Σ W†, best unitary is W U†
    let v = v_t.adjoint() * u.adjoint();
    let w = &so * v;
    Ok((vectorize_columns(&sr), vectorize_columns(&w)))
}

/// `Σ_k (X|k⟩) ⊗ |k⟩`, i.e. `(X ⊗ I)|Ω⟩` with `|Ω⟩ = Σ_k |k⟩|k⟩`.
fn vectorize_columns(x: &CMatrix) -> CVector {
    let d = x.nrows();
    let a = x.ncols();
    let mut out = CVector::zeros(d * a);
    for s in 0..d {
        for k in 0..a {
            out[s * a + k] = x[(s, k)];
        }
    }
    out
}

/// Entrywise (Hadamard) product.
pub fn hadamard(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(a.component_mul(b))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn psd_margin(h: &CMatrix) -> Result<f64> {
    Ok(eigh(h)?.min())
}

/// PSD test with the relative acceptance band `PSD_TOL`.
pub fn is_psd(h: &CMatrix) -> Result<bool> {
    let e = eigh(h)?;
    let scale = e.min().abs().max(e.max().abs()).max(1.0);
    Ok(e.min() >= -PSD_TOL * scale)
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    out
}

/// Partial trace over the second factor of a `(d1·d2)`-dimensional operator.
pub fn partial_trace_second(m: &CMatrix, d1: usize, d2: usize) -> CMatrix {
    assert_eq!(m.nrows(), d1 * d2);
    CMatrix::from_fn(d1, d1, |i, j| {
        (0..d2).map(|k| m[(i * d2 + k, j * d2 + k)]).sum()
    })
}

/// Partial trace over the first factor of a `(d1·d2)`-dimensional operator.
pub fn partial_trace_first(m: &CMatrix, d1: usize, d2: usize) -> CMatrix {
    assert_eq!(m.nrows(), d1 * d2);
    CMatrix::from_fn(d2, d2, |i, j| {
        (0..d1).map(|k| m[(k * d2 + i, k * d2 + j)]).sum()
    })
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Basis ket `|k⟩` in dimension `d`.
pub fn basis(d: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[k] = ONE;
    v
}

/// Nearest isometry (polar factor) of a full-column-rank matrix:
/// `U (U†U)^{-1/2}`.
pub fn nearest_isometry(u: &CMatrix) -> Result<CMatrix> {
    let gram = hermitian_part(&(u.adjoint() * u));
    let e = eigh_unchecked(&gram);
    if e.min() <= 1e-12 {
        return Err(Error::NotPsd { min_eig: e.min() });
    }
    let inv_sqrt = e.map_values(|v| 1.0 / v.sqrt());
    Ok(u * inv_sqrt)
}

/// Orthonormal basis (columns) of the orthogonal complement of the column
/// span of `a` within `C^n`, where `n = a.nrows()`.
pub fn orthogonal_complement(a: &CMatrix, tol: f64) -> CMatrix {
    let n = a.nrows();
    if a.ncols() == 0 {
        return identity(n);
    }
    let proj = hermitian_part(&(a * a.adjoint()));
    let e = eigh_unchecked(&proj);
    let scale = e.max().max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&k| e.values[k] <= tol * scale).collect();
    CMatrix::from_fn(n, cols.len(), |i, j| e.vectors[(i, cols[j])])
}

/// Orthonormal basis (columns) of the column span of `a`.
pub fn column_span(a: &CMatrix, tol: f64) -> CMatrix {
    let n = a.nrows();
    if a.ncols() == 0 {
        return CMatrix::zeros(n, 0);
    }
    let proj = hermitian_part(&(a * a.adjoint()));
    let e = eigh_unchecked(&proj);
    let scale = e.max().max(1e-300);
    let cols: Vec<usize> = (0..n).filter(|&k| e.values[k] > tol * scale).collect();
    CMatrix::from_fn(n, cols.len(), |i, j| e.vectors[(i, cols[j])])
}
