//! Feasibility of affine constraints over positive semidefinite matrices.
//!
//! The engine runs Dykstra's alternating projections between the PSD cone
//! (eigenvalue clipping) and the affine constraint set (least-squares
//! projection). The iteration itself is untrusted: a `Feasible` answer is
//! only returned after the witness has been substituted back into the
//! original constraints, and `Infeasible` only with an obstruction that was
//! checked independently:
//!
//! * the affine system has no solution,
//! * a block fully pinned by the equalities has a negative eigenvalue, or
//! * multipliers `y` exist with `Σ y_k C_k ⪰ 0` and `Σ y_k b_k < 0`
//!   (a separating functional; requires the total trace to be pinned when
//!   `Σ y_k C_k` is only PSD up to rounding).
//!
//! Everything else ends `Indeterminate`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matcore::{self, c, eigh_unchecked, hermitian_part, CMatrix, HermitianEig, C64};
use crate::stateset::GramMatrix;

pub const DEFAULT_FEAS_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERATIONS: usize = 50_000;
pub const DEFAULT_STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub feas_tol: f64,
    pub max_iterations: usize,
    /// Convergence: successive iterates moving less than this.
    pub step_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feas_tol: DEFAULT_FEAS_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            step_tol: DEFAULT_STEP_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `Σ ⟨C_b, X_b⟩ = rhs`
    Eq,
    /// `Σ ⟨C_b, X_b⟩ ≥ rhs`
    Ge,
}

/// One real linear constraint over a block-diagonal Hermitian variable.
#[derive(Debug, Clone)]
pub struct Constraint {
    /// `(block index, Hermitian coefficient)` pairs.
    pub terms: Vec<(usize, CMatrix)>,
    pub rhs: f64,
    pub relation: Relation,
}

/// Find Hermitian PSD blocks `X_0, …, X_{B-1}` satisfying real linear
/// constraints `Σ_b tr(C_{k,b} X_b) (= | ≥) b_k`.
#[derive(Debug, Clone)]
pub struct AffinePsdProblem {
    blocks: Vec<usize>,
    constraints: Vec<Constraint>,
}

impl AffinePsdProblem {
    pub fn new(blocks: Vec<usize>) -> Self {
        AffinePsdProblem {
            blocks,
            constraints: Vec::new(),
        }
    }

    /// A single `n×n` variable.
    pub fn single(n: usize) -> Self {
        Self::new(vec![n])
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn add(&mut self, terms: Vec<(usize, CMatrix)>, relation: Relation, rhs: f64) -> &mut Self {
        for (b, m) in &terms {
            assert!(*b < self.blocks.len(), "block index out of range");
            assert_eq!(m.shape(), (self.blocks[*b], self.blocks[*b]), "coefficient shape");
        }
        self.constraints.push(Constraint {
            terms: terms.into_iter().map(|(b, m)| (b, hermitian_part(&m))).collect(),
            rhs,
            relation,
        });
        self
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, CMatrix)>, rhs: f64) -> &mut Self {
        self.add(terms, Relation::Eq, rhs)
    }

    pub fn add_ge(&mut self, terms: Vec<(usize, CMatrix)>, rhs: f64) -> &mut Self {
        self.add(terms, Relation::Ge, rhs)
    }

    /// `Σ_b tr(F_b X_b) = target` for arbitrary (non-Hermitian) `F_b`,
    /// expanded into its real and imaginary parts. The imaginary equation is
    /// skipped when every `F_b` is Hermitian.
    pub fn add_complex_eq(&mut self, terms: Vec<(usize, CMatrix)>, target: C64) -> &mut Self {
        let hermitian = terms
            .iter()
            .all(|(_, f)| matcore::hermitian_asymmetry(f) == 0.0);
        let re: Vec<_> = terms.iter().map(|(b, f)| (*b, hermitian_part(f))).collect();
        self.add_eq(re, target.re);
        if !hermitian {
            // Im tr(F X) = tr(H X) with H = (F − F†) / 2i
            let im: Vec<_> = terms
                .iter()
                .map(|(b, f)| (*b, (f - f.adjoint()) * c(0.0, -0.5)))
                .collect();
            self.add_eq(im, target.im);
        }
        self
    }

    /// Pin entry `(i, j)` of block `b` to `value` (real part only on the
    /// diagonal).
    pub fn fix_entry(&mut self, block: usize, i: usize, j: usize, value: C64) -> &mut Self {
        let n = self.blocks[block];
        let mut f = CMatrix::zeros(n, n);
        // tr(|j⟩⟨i| X) = X_ij
        f[(j, i)] = matcore::ONE;
        self.add_complex_eq(vec![(block, f)], value)
    }

    /// Largest violation of the constraints at `x` (one matrix per block).
    pub fn residual(&self, x: &[CMatrix]) -> f64 {
        self.constraints
            .iter()
            .map(|k| {
                let lhs: f64 = k.terms.iter().map(|(b, m)| frob_inner(m, &x[*b])).sum();
                match k.relation {
                    Relation::Eq => (lhs - k.rhs).abs(),
                    Relation::Ge => (k.rhs - lhs).max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `tr(A B)` for Hermitian `A`, `B`.
fn frob_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Feasible,
    Infeasible,
    Indeterminate,
}

/// Certified reason for an `Infeasible` status.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstruction {
    /// The equality system alone has no solution.
    AffineInconsistent { residual: f64 },
    /// A block completely determined by the equalities is not PSD.
    NegativeDeterminedBlock { block: usize, min_eig: f64 },
    /// A fully specified principal submatrix is not PSD.
    NegativePrincipalSubmatrix { indices: Vec<usize>, min_eig: f64 },
    /// Multipliers whose combination of constraint matrices is PSD while the
    /// same combination of right-hand sides is negative. `gap` is the
    /// normalized amount of separation.
    SeparatingFunctional { gap: f64 },
    /// Problem-specific structural obstruction.
    Structural(String),
}

impl std::fmt::Display for Obstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Obstruction::AffineInconsistent { residual } => {
                write!(f, "linear constraints inconsistent (residual {residual:.3e})")
            }
            Obstruction::NegativeDeterminedBlock { block, min_eig } => {
                write!(f, "block {block} is pinned by the constraints and has eigenvalue {min_eig:.3e}")
            }
            Obstruction::NegativePrincipalSubmatrix { indices, min_eig } => {
                write!(f, "fixed principal submatrix {indices:?} has eigenvalue {min_eig:.3e}")
            }
            Obstruction::SeparatingFunctional { gap } => {
                write!(f, "separating functional with gap {gap:.3e}")
            }
            Obstruction::Structural(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeasibilityOutcome {
    pub status: Status,
    /// One matrix per user block.
    pub witness: Option<Vec<CMatrix>>,
    /// Smallest eigenvalue over the witness blocks (or the best iterate /
    /// the negative obstruction size when there is no witness).
    pub margin: f64,
    /// Largest constraint violation of the witness or best iterate.
    pub residual: f64,
    pub iterations: usize,
    pub obstruction: Option<Obstruction>,
}

impl FeasibilityOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }

    fn infeasible(obstruction: Obstruction, margin: f64, iterations: usize) -> Self {
        FeasibilityOutcome {
            status: Status::Infeasible,
            witness: None,
            margin,
            residual: f64::NAN,
            iterations,
            obstruction: Some(obstruction),
        }
    }
}

/// Solve with default settings.
pub fn affine_psd_feasibility(prob: &AffinePsdProblem) -> FeasibilityOutcome {
    affine_psd_feasibility_with(prob, &SolverSettings::default())
}

pub fn affine_psd_feasibility_with(prob: &AffinePsdProblem, settings: &SolverSettings) -> FeasibilityOutcome {
    let mut out = engine::solve(prob, settings);
    if let Some(w) = &out.witness {
        let margin = w
            .iter()
            .filter(|b| b.nrows() > 0)
            .map(|b| eigh_unchecked(&hermitian_part(b)).min())
            .fold(f64::INFINITY, f64::min);
        let margin = if margin.is_finite() { margin } else { 0.0 };
        let residual = prob.residual(w);
        out.margin = margin;
        out.residual = residual;
        if margin < -settings.feas_tol || residual > settings.feas_tol {
            out.status = Status::Indeterminate;
        }
    }
    out
}

mod engine {
    //! Vectorized Dykstra iteration. Hermitian `k×k` blocks map isometrically
    //! to `k²` reals: diagonal entries, then `√2·Re`, `√2·Im` of the strict
    //! upper triangle.

    use super::*;

    const RANK_TOL: f64 = 1e-10;
    const FR_PSD_TOL: f64 = 1e-12;
    const FR_KERNEL_TOL: f64 = 1e-10;
    const POLISH_ITERATIONS: usize = 200;
    const CERTIFICATE_EVERY: usize = 25;
    /// Dykstra iterations before the barrier method is tried once.
    const BARRIER_AFTER: usize = 2_000;

    pub(super) fn vec_len(k: usize) -> usize {
        k * k
    }

    pub(super) fn vectorize(m: &CMatrix, out: &mut [f64]) {
        let k = m.nrows();
        let s2 = std::f64::consts::SQRT_2;
        let mut p = 0;
        for i in 0..k {
            out[p] = m[(i, i)].re;
            p += 1;
        }
        for i in 0..k {
            for j in (i + 1)..k {
                out[p] = s2 * m[(i, j)].re;
                out[p + 1] = s2 * m[(i, j)].im;
                p += 2;
            }
        }
    }

    pub(super) fn devectorize(v: &[f64], k: usize) -> CMatrix {
        let mut m = CMatrix::zeros(k, k);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut p = 0;
        for i in 0..k {
            m[(i, i)] = c(v[p], 0.0);
            p += 1;
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let z = c(h * v[p], h * v[p + 1]);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                p += 2;
            }
        }
        m
    }

    /// Problem after slack introduction and facial reduction.
    struct Reduced {
        /// Per internal block: isometry `V` with `X = V Z V†`.
        bases: Vec<CMatrix>,
        /// Internal block -> user block (None for slacks).
        owner: Vec<Option<usize>>,
        sizes: Vec<usize>,
        offsets: Vec<usize>,
        total: usize,
        rows: Vec<(Vec<(usize, CMatrix)>, f64)>,
    }

    impl Reduced {
        fn to_blocks(&self, x: &DVector<f64>) -> Vec<CMatrix> {
            (0..self.sizes.len())
                .map(|b| devectorize(&x.as_slice()[self.offsets[b]..self.offsets[b] + vec_len(self.sizes[b])], self.sizes[b]))
                .collect()
        }

        fn lift(&self, blocks: &[CMatrix], user_blocks: &[usize]) -> Vec<CMatrix> {
            let mut out: Vec<CMatrix> = user_blocks.iter().map(|&n| CMatrix::zeros(n, n)).collect();
            for (b, z) in blocks.iter().enumerate() {
                if let Some(u) = self.owner[b] {
                    let v = &self.bases[b];
                    out[u] = hermitian_part(&(v * z * v.adjoint()));
                }
            }
            out
        }
    }

    fn reduce(prob: &AffinePsdProblem) -> Reduced {
        let mut sizes: Vec<usize> = prob.blocks.clone();
        let mut owner: Vec<Option<usize>> = (0..sizes.len()).map(Some).collect();
        let mut rows: Vec<(Vec<(usize, CMatrix)>, f64)> = Vec::with_capacity(prob.constraints.len());
        for k in &prob.constraints {
            let mut terms = k.terms.clone();
            if k.relation == Relation::Ge {
                // ⟨C, X⟩ − s = b with s ≥ 0 as a 1×1 block
                let slack = sizes.len();
                sizes.push(1);
                owner.push(None);
                terms.push((slack, CMatrix::from_element(1, 1, c(-1.0, 0.0))));
            }
            rows.push((terms, k.rhs));
        }
        let mut bases: Vec<CMatrix> = sizes.iter().map(|&n| matcore::identity(n)).collect();

        // Facial reduction: ⟨C, X_b⟩ = 0 with C ⪰ 0 forces range(X_b) ⊆ ker C.
        loop {
            let mut changed = false;
            for b in 0..sizes.len() {
                if sizes[b] == 0 {
                    continue;
                }
                let mut acc = CMatrix::zeros(sizes[b], sizes[b]);
                let mut found = false;
                for (terms, rhs) in &rows {
                    if *rhs != 0.0 || terms.len() != 1 || terms[0].0 != b {
                        continue;
                    }
                    let cm = &terms[0].1;
                    let norm = cm.norm();
                    if norm == 0.0 {
                        continue;
                    }
                    let e = eigh_unchecked(cm);
                    if e.min() >= -FR_PSD_TOL * norm {
                        acc += cm.unscale(norm);
                        found = true;
                    }
                }
                if !found {
                    continue;
                }
                let e = eigh_unchecked(&acc);
                let cut = FR_KERNEL_TOL * e.max().max(1e-300);
                let keep: Vec<usize> = (0..sizes[b]).filter(|&i| e.values[i] <= cut).collect();
                if keep.len() == sizes[b] {
                    continue;
                }
                let w = CMatrix::from_fn(sizes[b], keep.len(), |i, j| e.vectors[(i, keep[j])]);
                for (terms, _) in rows.iter_mut() {
                    for (tb, cm) in terms.iter_mut() {
                        if *tb == b {
                            let before = cm.norm();
                            let after = hermitian_part(&(w.adjoint() * &*cm * &w));
                            // rounding residue of a coefficient annihilated by the face
                            *cm = if after.norm() <= FR_KERNEL_TOL * before {
                                CMatrix::zeros(after.nrows(), after.ncols())
                            } else {
                                after
                            };
                        }
                    }
                }
                bases[b] = &bases[b] * &w;
                sizes[b] = keep.len();
                changed = true;
            }
            if !changed {
                break;
            }
        }

        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += vec_len(s);
        }
        Reduced {
            bases,
            owner,
            sizes,
            offsets,
            total,
            rows,
        }
    }

    struct Affine {
        /// Orthonormal basis of the row space (columns), `N × r`.
        row_basis: DMatrix<f64>,
        /// Minimum-norm particular solution.
        particular: DVector<f64>,
        /// `y = pinv_t · v` gives multipliers with `Aᵀy = P_row v`.
        pinv_t: DMatrix<f64>,
        inconsistency: f64,
        rhs: DVector<f64>,
    }

    impl Affine {
        fn project(&self, v: &DVector<f64>) -> DVector<f64> {
            if self.row_basis.ncols() == 0 {
                return v.clone();
            }
            let coeff = self.row_basis.tr_mul(v);
            v - &self.row_basis * coeff + &self.particular
        }

        fn row_component(&self, v: &DVector<f64>) -> DVector<f64> {
            if self.row_basis.ncols() == 0 {
                return DVector::zeros(v.len());
            }
            &self.row_basis * self.row_basis.tr_mul(v)
        }
    }

    fn build_affine(red: &Reduced) -> Result<Affine> {
        let m = red.rows.len();
        let n = red.total;
        let mut a = DMatrix::<f64>::zeros(m, n);
        let mut b = DVector::<f64>::zeros(m);
        let mut buf = vec![0.0; n];
        for (k, (terms, rhs)) in red.rows.iter().enumerate() {
            buf.iter_mut().for_each(|x| *x = 0.0);
            for (blk, cm) in terms {
                let off = red.offsets[*blk];
                let len = vec_len(red.sizes[*blk]);
                let mut tmp = vec![0.0; len];
                vectorize(cm, &mut tmp);
                for (dst, src) in buf[off..off + len].iter_mut().zip(&tmp) {
                    *dst += src;
                }
            }
            a.row_mut(k).copy_from_slice(&buf);
            b[k] = *rhs;
        }
        if m == 0 || n == 0 {
            let inconsistency = if n == 0 { b.amax() } else { 0.0 };
            return Ok(Affine {
                row_basis: DMatrix::zeros(n, 0),
                particular: DVector::zeros(n),
                pinv_t: DMatrix::zeros(m, n),
                inconsistency,
                rhs: b,
            });
        }
        // SVD of Aᵀ (n × m) so the thin factors hold the row space of A.
        let matcore::Svd {
            u,   // n × p
            v_t, // p × m
            singular_values: sv,
        } = matcore::checked_svd(&a.transpose())?;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > RANK_TOL * smax.max(1e-300)).collect();
        let r = keep.len();
        let row_basis = DMatrix::from_fn(n, r, |i, j| u[(i, keep[j])]);
        // A = V Σ Uᵀ  ⇒  A⁺ = U Σ⁻¹ Vᵀ,  (A⁺)ᵀ = V Σ⁻¹ Uᵀ
        let left = DMatrix::from_fn(m, r, |i, j| v_t[(keep[j], i)] / sv[keep[j]]);
        let pinv_t = &left * row_basis.transpose(); // m × n
        let particular = pinv_t.tr_mul(&b);
        let inconsistency = (&a * &particular - &b).amax();
        Ok(Affine {
            row_basis,
            particular,
            pinv_t,
            inconsistency,
            rhs: b,
        })
    }

    fn block_eigs(red: &Reduced, x: &DVector<f64>) -> Vec<Option<HermitianEig>> {
        red.to_blocks(x)
            .iter()
            .map(|m| (m.nrows() > 0).then(|| eigh_unchecked(m)))
            .collect()
    }

    fn min_eig(eigs: &[Option<HermitianEig>]) -> f64 {
        eigs.iter()
            .flatten()
            .map(HermitianEig::min)
            .fold(f64::INFINITY, f64::min)
    }

    fn write_blocks(red: &Reduced, mats: &[CMatrix], out: &mut DVector<f64>) {
        for (b, m) in mats.iter().enumerate() {
            let off = red.offsets[b];
            vectorize(m, &mut out.as_mut_slice()[off..off + vec_len(red.sizes[b])]);
        }
    }

    fn project_cone(red: &Reduced, x: &DVector<f64>) -> DVector<f64> {
        let mats: Vec<CMatrix> = red
            .to_blocks(x)
            .iter()
            .map(|m| {
                if m.nrows() == 0 {
                    m.clone()
                } else {
                    eigh_unchecked(m).map_values(|v| v.max(0.0))
                }
            })
            .collect();
        let mut out = DVector::zeros(x.len());
        write_blocks(red, &mats, &mut out);
        out
    }

    /// Identity on every block, vectorized.
    fn identity_vec(red: &Reduced) -> DVector<f64> {
        let mats: Vec<CMatrix> = red.sizes.iter().map(|&s| matcore::identity(s)).collect();
        let mut out = DVector::zeros(red.total);
        write_blocks(red, &mats, &mut out);
        out
    }

    /// Try to extract a separating functional from an affine-feasible point.
    fn certificate(red: &Reduced, aff: &Affine, x: &DVector<f64>, trace_bound: Option<f64>) -> Option<f64> {
        let neg: Vec<CMatrix> = red
            .to_blocks(x)
            .iter()
            .map(|m| {
                if m.nrows() == 0 {
                    m.clone()
                } else {
                    eigh_unchecked(m).map_values(|v| (-v).max(0.0))
                }
            })
            .collect();
        let mut v = DVector::zeros(red.total);
        write_blocks(red, &neg, &mut v);
        let vn = v.norm();
        if vn == 0.0 {
            return None;
        }
        let v = v / vn;
        let w = aff.row_component(&v);
        let wn = w.norm();
        if wn < 1e-3 {
            return None;
        }
        let y = &aff.pinv_t * &v;
        let value = y.dot(&aff.rhs);
        let lam = min_eig(&block_eigs(red, &w));
        let lam = if lam.is_finite() { lam } else { 0.0 };
        let slack = if lam >= 0.0 {
            0.0
        } else {
            trace_bound? * (-lam)
        };
        let safety = 1e-12 * (y.norm() * aff.rhs.norm() + wn * trace_bound.unwrap_or(1.0)) + 1e-15;
        let bound = value + slack;
        (bound < -safety).then(|| -bound / wn)
    }

    pub(super) fn solve(prob: &AffinePsdProblem, settings: &SolverSettings) -> FeasibilityOutcome {
        let red = reduce(prob);
        let Ok(aff) = build_affine(&red) else {
            return FeasibilityOutcome {
                status: Status::Indeterminate,
                witness: None,
                margin: f64::NAN,
                residual: f64::NAN,
                iterations: 0,
                obstruction: Some(Obstruction::Structural("linear algebra failure in constraint setup".into())),
            };
        };
        let tol = settings.feas_tol;

        if aff.inconsistency > tol {
            return FeasibilityOutcome::infeasible(
                Obstruction::AffineInconsistent {
                    residual: aff.inconsistency,
                },
                -aff.inconsistency,
                0,
            );
        }
        let finish_feasible = |x: &DVector<f64>, iterations: usize| {
            let blocks = red.to_blocks(x);
            let witness = red.lift(&blocks, &prob.blocks);
            FeasibilityOutcome {
                status: Status::Feasible,
                witness: Some(witness),
                margin: 0.0,
                residual: 0.0,
                iterations,
                obstruction: None,
            }
        };
        if red.total == 0 {
            return finish_feasible(&DVector::zeros(0), 0);
        }

        // Blocks pinned by the equalities (no null-space direction touches them).
        let x_part = aff.particular.clone();
        let part_eigs = block_eigs(&red, &x_part);
        let mut all_pinned = true;
        for b in 0..red.sizes.len() {
            let len = vec_len(red.sizes[b]);
            if len == 0 {
                continue;
            }
            let off = red.offsets[b];
            let mut pinned = true;
            for i in off..off + len {
                let mut e = DVector::zeros(red.total);
                e[i] = 1.0;
                if (&e - aff.row_component(&e)).norm() > 1e-9 {
                    pinned = false;
                    break;
                }
            }
            if !pinned {
                all_pinned = false;
                continue;
            }
            let lam = part_eigs[b].as_ref().map(HermitianEig::min).unwrap_or(0.0);
            if lam < -10.0 * tol {
                return FeasibilityOutcome::infeasible(
                    Obstruction::NegativeDeterminedBlock {
                        block: red.owner[b].unwrap_or(usize::MAX),
                        min_eig: lam,
                    },
                    lam,
                    0,
                );
            }
        }
        if all_pinned {
            let lam = min_eig(&part_eigs);
            if lam >= -tol {
                return finish_feasible(&x_part, 0);
            }
            return FeasibilityOutcome {
                status: Status::Indeterminate,
                witness: None,
                margin: lam,
                residual: aff.inconsistency,
                iterations: 0,
                obstruction: None,
            };
        }

        let ident = identity_vec(&red);
        let trace_bound = {
            let off_row = (&ident - aff.row_component(&ident)).norm();
            (off_row <= 1e-9 * ident.norm().max(1.0)).then(|| ident.dot(&x_part).max(0.0))
        };
        let scale = match trace_bound {
            Some(t) => t / red.sizes.iter().sum::<usize>().max(1) as f64,
            None => 1.0,
        };
        let mut x = aff.project(&(&ident * scale));
        let mut p = DVector::<f64>::zeros(red.total);
        let mut best: Option<(DVector<f64>, f64)> = None;
        let mut polish_deadline: Option<usize> = None;
        let mut last_lam = f64::NEG_INFINITY;
        let mut iterations = 0;

        for it in 1..=settings.max_iterations {
            iterations = it;
            let check = it <= 50 || it % 5 == 0 || polish_deadline.is_some();
            if check {
                let lam = min_eig(&block_eigs(&red, &x));
                last_lam = lam;
                if lam >= -tol && best.as_ref().is_none_or(|(_, b)| lam > *b) {
                    best = Some((x.clone(), lam));
                    polish_deadline.get_or_insert(it + POLISH_ITERATIONS);
                }
                if lam >= -1e-12 * scale.max(1.0) {
                    break;
                }
                if polish_deadline.is_some_and(|d| it >= d) {
                    break;
                }
            }
            if best.is_none() && it % CERTIFICATE_EVERY == 0 {
                if let Some(gap) = certificate(&red, &aff, &x, trace_bound) {
                    return FeasibilityOutcome::infeasible(Obstruction::SeparatingFunctional { gap }, -gap, it);
                }
            }
            // Dykstra crawls when the affine slice meets the cone at a
            // shallow angle; try to jump to an interior point instead.
            if best.is_none() && it == BARRIER_AFTER {
                let found = barrier::interior_point(&red, &aff, &x, scale)
                    .filter(|xb| min_eig(&block_eigs(&red, xb)) >= -tol)
                    .or_else(|| factored::polish(&red, &x, tol));
                if let Some(xb) = found {
                    return finish_feasible(&xb, it);
                }
            }
            let y = project_cone(&red, &(&x + &p));
            p = &x + &p - &y;
            let x_new = aff.project(&y);
            let step = (&x_new - &x).norm();
            x = x_new;
            if step < settings.step_tol {
                break;
            }
        }

        let lam = min_eig(&block_eigs(&red, &x));
        if lam >= -tol && best.as_ref().is_none_or(|(_, b)| lam > *b) {
            best = Some((x.clone(), lam));
        }
        if let Some((xb, _)) = best {
            return finish_feasible(&xb, iterations);
        }
        if let Some(gap) = certificate(&red, &aff, &x, trace_bound) {
            return FeasibilityOutcome::infeasible(Obstruction::SeparatingFunctional { gap }, -gap, iterations);
        }
        let dist = (project_cone(&red, &x) - &x).norm();
        FeasibilityOutcome {
            status: Status::Indeterminate,
            witness: None,
            margin: last_lam.min(lam),
            residual: dist,
            iterations,
            obstruction: None,
        }
    }

    /// Levenberg–Marquardt on low-rank factors `X_b = W_b W_b†`, started
    /// from the leading eigenpairs of an iterate. Positivity holds by
    /// construction, so only the affine residual has to be driven below
    /// `tol`; this converges where the feasible set has no interior and
    /// Dykstra only creeps. Ranks 1, 2, … are tried in turn.
    mod factored {
        use super::*;

        const MAX_STEPS: usize = 100;
        /// An attempt is abandoned unless the residual drops tenfold within
        /// this many steps.
        const STALL_WINDOW: usize = 15;

        struct Layout {
            sizes: Vec<usize>,
            ranks: Vec<usize>,
            offsets: Vec<usize>,
            params: usize,
        }

        impl Layout {
            fn new(sizes: &[usize], cap: usize) -> Self {
                let ranks: Vec<usize> = sizes.iter().map(|&n| n.min(cap)).collect();
                let mut offsets = Vec::with_capacity(sizes.len());
                let mut params = 0;
                for (n, r) in sizes.iter().zip(&ranks) {
                    offsets.push(params);
                    params += 2 * n * r;
                }
                Layout {
                    sizes: sizes.to_vec(),
                    ranks,
                    offsets,
                    params,
                }
            }

            fn unpack(&self, p: &DVector<f64>) -> Vec<CMatrix> {
                (0..self.sizes.len())
                    .map(|b| {
                        let (n, r, at) = (self.sizes[b], self.ranks[b], self.offsets[b]);
                        CMatrix::from_fn(n, r, |i, j| c(p[at + i * r + j], p[at + n * r + i * r + j]))
                    })
                    .collect()
            }

            fn pack(&self, ws: &[CMatrix]) -> DVector<f64> {
                let mut out = DVector::zeros(self.params);
                for (b, w) in ws.iter().enumerate() {
                    let (n, r, at) = (self.sizes[b], self.ranks[b], self.offsets[b]);
                    for i in 0..n {
                        for j in 0..r {
                            out[at + i * r + j] = w[(i, j)].re;
                            out[at + n * r + i * r + j] = w[(i, j)].im;
                        }
                    }
                }
                out
            }
        }

        fn leading_factors(red: &Reduced, x: &DVector<f64>, layout: &Layout) -> Vec<CMatrix> {
            red.to_blocks(x)
                .iter()
                .zip(&layout.ranks)
                .map(|(m, &r)| {
                    let n = m.nrows();
                    if n == 0 {
                        return CMatrix::zeros(0, 0);
                    }
                    // eigenvalues ascend; keep the top r
                    let e = eigh_unchecked(m);
                    CMatrix::from_fn(n, r, |i, j| {
                        let k = n - 1 - j;
                        e.vectors[(i, k)] * e.values[k].max(0.0).sqrt()
                    })
                })
                .collect()
        }

        fn gram(ws: &[CMatrix]) -> Vec<CMatrix> {
            ws.iter().map(|w| hermitian_part(&(w * w.adjoint()))).collect()
        }

        fn residuals(red: &Reduced, xs: &[CMatrix]) -> DVector<f64> {
            DVector::from_iterator(
                red.rows.len(),
                red.rows.iter().map(|(terms, rhs)| {
                    terms.iter().map(|(b, cm)| cm.transpose().component_mul(&xs[*b]).sum().re).sum::<f64>() - rhs
                }),
            )
        }

        fn attempt(red: &Reduced, x: &DVector<f64>, layout: &Layout, tol: f64) -> Option<DVector<f64>> {
            let mut p = layout.pack(&leading_factors(red, x, layout));
            let mut r = residuals(red, &gram(&layout.unpack(&p)));
            let mut cost = r.norm_squared();
            let mut damping: Option<f64> = None;
            let mut window_start = r.amax();
            for step in 0..MAX_STEPS {
                if r.amax() <= 0.1 * tol {
                    let mut out = DVector::zeros(red.total);
                    write_blocks(red, &gram(&layout.unpack(&p)), &mut out);
                    return Some(out);
                }
                if step > 0 && step % STALL_WINDOW == 0 {
                    if r.amax() > 0.1 * window_start {
                        return None;
                    }
                    window_start = r.amax();
                }
                let ws = layout.unpack(&p);
                let mut jac = DMatrix::<f64>::zeros(red.rows.len(), layout.params);
                for (k, (terms, _)) in red.rows.iter().enumerate() {
                    for (b, cm) in terms {
                        let (n, rk, at) = (layout.sizes[*b], layout.ranks[*b], layout.offsets[*b]);
                        let g = cm * &ws[*b];
                        for i in 0..n {
                            for j in 0..rk {
                                let z = g[(i, j)];
                                jac[(k, at + i * rk + j)] += 2.0 * z.re;
                                jac[(k, at + n * rk + i * rk + j)] += 2.0 * z.im;
                            }
                        }
                    }
                }
                let jtj = jac.tr_mul(&jac);
                let jtr = jac.tr_mul(&r);
                let mut mu = *damping.get_or_insert(1e-3 * jtj.diagonal().amax().max(1e-300));
                let mut improved = false;
                for _ in 0..30 {
                    let mut lhs = jtj.clone();
                    for i in 0..layout.params {
                        lhs[(i, i)] += mu;
                    }
                    if let Some(ch) = nalgebra::Cholesky::new(lhs) {
                        let trial = &p - ch.solve(&jtr);
                        let r_t = residuals(red, &gram(&layout.unpack(&trial)));
                        let c_t = r_t.norm_squared();
                        if c_t.is_finite() && c_t < cost {
                            p = trial;
                            r = r_t;
                            cost = c_t;
                            mu /= 3.0;
                            improved = true;
                            break;
                        }
                    }
                    mu *= 4.0;
                }
                damping = Some(mu);
                if !improved {
                    return None;
                }
            }
            None
        }

        pub(in super::super) fn polish(red: &Reduced, x: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
            let largest = red.sizes.iter().copied().max().unwrap_or(0);
            if largest == 0 || red.rows.is_empty() {
                return None;
            }
            (1..=largest).find_map(|cap| attempt(red, x, &Layout::new(&red.sizes, cap), tol))
        }
    }

    /// Log-barrier Newton method for `max t` subject to `X(z) ⪰ t·I`, with
    /// `X(z) = x0 + N z` ranging over the affine set (`N` an orthonormal
    /// null-space basis, so all derivatives are dot products in the
    /// isometric vectorization).
    mod barrier {
        use super::*;
        use nalgebra::Cholesky;

        const MAX_NEWTON: usize = 60;
        const LEVELS: usize = 14;
        const GROWTH: f64 = 8.0;

        fn null_basis(aff: &Affine, n: usize) -> DMatrix<f64> {
            let r = &aff.row_basis;
            let proj = DMatrix::<f64>::identity(n, n) - r * r.transpose();
            let e = proj.symmetric_eigen();
            let keep: Vec<usize> = (0..n).filter(|&i| e.eigenvalues[i] > 0.5).collect();
            DMatrix::from_fn(n, keep.len(), |i, j| e.eigenvectors[(i, keep[j])])
        }

        /// `−Σ log det Y_b` and the inverses, or None unless every block is
        /// positive definite.
        fn barrier(ys: &[CMatrix]) -> Option<(f64, Vec<CMatrix>)> {
            let mut value = 0.0;
            let mut inv = Vec::with_capacity(ys.len());
            for y in ys {
                if y.nrows() == 0 {
                    inv.push(y.clone());
                    continue;
                }
                let ch = Cholesky::new(hermitian_part(y))?;
                let l = ch.l_dirty();
                for i in 0..y.nrows() {
                    value -= 2.0 * l[(i, i)].re.ln();
                }
                inv.push(hermitian_part(&ch.inverse()));
            }
            value.is_finite().then_some((value, inv))
        }

        fn vec_blocks(red: &Reduced, mats: &[CMatrix]) -> DVector<f64> {
            let mut out = DVector::zeros(red.total);
            write_blocks(red, mats, &mut out);
            out
        }

        /// A point of the affine set with all blocks PSD, found by following
        /// the central path from `x0` until `t ≥ 0`.
        pub(in super::super) fn interior_point(red: &Reduced, aff: &Affine, x0: &DVector<f64>, scale: f64) -> Option<DVector<f64>> {
            let null = null_basis(aff, red.total);
            let k = null.ncols();
            if k == 0 {
                return None;
            }
            let dirs: Vec<Vec<CMatrix>> = (0..k).map(|i| red.to_blocks(&null.column(i).into_owned())).collect();
            let at = |w: &DVector<f64>| -> Vec<CMatrix> {
                let x = x0 + &null * w.rows(0, k);
                let mut ys = red.to_blocks(&x);
                for y in ys.iter_mut() {
                    for d in 0..y.nrows() {
                        y[(d, d)] -= c(w[k], 0.0);
                    }
                }
                ys
            };
            let lam = min_eig(&block_eigs(red, x0));
            let mut w = DVector::<f64>::zeros(k + 1);
            w[k] = lam - (0.1 * scale).max(lam.abs()).max(1e-12);
            let (mut phi, mut inv) = barrier(&at(&w))?;
            let mut s = 1.0 / scale.max(1e-300);
            for _ in 0..LEVELS {
                let mut f = -s * w[k] + phi;
                for _ in 0..MAX_NEWTON {
                    if w[k] >= 0.0 {
                        return Some(x0 + &null * w.rows(0, k));
                    }
                    let wv = vec_blocks(red, &inv);
                    let w2: Vec<CMatrix> = inv.iter().map(|m| m * m).collect();
                    let w2v = vec_blocks(red, &w2);
                    let tr_w: f64 = inv.iter().map(|m| m.trace().re).sum();
                    let tr_w2: f64 = w2.iter().map(|m| m.trace().re).sum();
                    let mut sandwich = DMatrix::<f64>::zeros(red.total, k);
                    for (i, d) in dirs.iter().enumerate() {
                        let m: Vec<CMatrix> = inv.iter().zip(d).map(|(wi, a)| hermitian_part(&(wi * a * wi))).collect();
                        sandwich.set_column(i, &vec_blocks(red, &m));
                    }
                    let mut grad = DVector::<f64>::zeros(k + 1);
                    grad.rows_mut(0, k).copy_from(&(-null.tr_mul(&wv)));
                    grad[k] = -s + tr_w;
                    let mut hess = DMatrix::<f64>::zeros(k + 1, k + 1);
                    hess.view_mut((0, 0), (k, k)).copy_from(&null.tr_mul(&sandwich));
                    let cross = -null.tr_mul(&w2v);
                    hess.view_mut((0, k), (k, 1)).copy_from(&cross);
                    hess.view_mut((k, 0), (1, k)).copy_from(&cross.transpose());
                    hess[(k, k)] = tr_w2;
                    let ridge = 1e-14 * hess.diagonal().amax().max(1e-300);
                    for i in 0..=k {
                        hess[(i, i)] += ridge;
                    }
                    let step = match Cholesky::new(hess.clone()) {
                        Some(ch) => ch.solve(&(-&grad)),
                        None => hess.lu().solve(&(-&grad))?,
                    };
                    let decrement = -grad.dot(&step);
                    if !decrement.is_finite() || decrement <= 0.0 {
                        break;
                    }
                    if decrement < 1e-10 {
                        break;
                    }
                    let mut alpha = 1.0;
                    let mut moved = false;
                    while alpha > 1e-12 {
                        let trial = &w + &step * alpha;
                        if let Some((phi_t, inv_t)) = barrier(&at(&trial)) {
                            let f_t = -s * trial[k] + phi_t;
                            if f_t <= f - 0.25 * alpha * decrement {
                                w = trial;
                                phi = phi_t;
                                inv = inv_t;
                                f = f_t;
                                moved = true;
                                break;
                            }
                        }
                        alpha *= 0.5;
                    }
                    if !moved || !w.iter().all(|v| v.is_finite()) {
                        break;
                    }
                }
                if w[k] >= 0.0 {
                    return Some(x0 + &null * w.rows(0, k));
                }
                s *= GROWTH;
            }
            None
        }
    }
}

/// Hermitian matrix with some entries fixed and the rest free.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialHermitian {
    n: usize,
    fixed: BTreeMap<(usize, usize), C64>,
}

impl PartialHermitian {
    pub fn new(n: usize) -> Self {
        PartialHermitian {
            n,
            fixed: BTreeMap::new(),
        }
    }

    /// Every entry fixed to `m`.
    pub fn from_full(m: &CMatrix) -> Self {
        let mut p = Self::new(m.nrows());
        for i in 0..m.nrows() {
            for j in i..m.nrows() {
                p.fix(i, j, m[(i, j)]);
            }
        }
        p
    }

    /// Fix entry `(i, j)` (and implicitly `(j, i)` to the conjugate).
    /// Diagonal values keep only their real part.
    pub fn fix(&mut self, i: usize, j: usize, value: C64) -> &mut Self {
        assert!(i < self.n && j < self.n);
        let (key, v) = if i <= j { ((i, j), value) } else { ((j, i), value.conj()) };
        let v = if key.0 == key.1 { c(v.re, 0.0) } else { v };
        self.fixed.insert(key, v);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<C64> {
        if i <= j {
            self.fixed.get(&(i, j)).copied()
        } else {
            self.fixed.get(&(j, i)).map(|z| z.conj())
        }
    }

    pub fn is_fixed(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    pub fn free_count(&self) -> usize {
        self.n * (self.n + 1) / 2 - self.fixed.len()
    }

    /// Fixed entries, free ones set to zero.
    pub fn fill_zero(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).unwrap_or(matcore::ZERO))
    }

    fn principal(&self, idx: &[usize]) -> CMatrix {
        CMatrix::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b]).expect("fixed"))
    }

    /// Maximal index sets whose principal submatrix is completely fixed.
    fn fixed_cliques(&self) -> Vec<Vec<usize>> {
        let verts: Vec<usize> = (0..self.n).filter(|&i| self.is_fixed(i, i)).collect();
        let adj = |i: usize, j: usize| self.is_fixed(i, j);
        let mut out = Vec::new();
        bron_kerbosch(Vec::new(), verts, Vec::new(), &adj, &mut out);
        out
    }
}

fn bron_kerbosch(
    r: Vec<usize>,
    mut p: Vec<usize>,
    mut x: Vec<usize>,
    adj: &impl Fn(usize, usize) -> bool,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        if !r.is_empty() {
            out.push(r);
        }
        return;
    }
    while let Some(v) = p.pop() {
        let mut r2 = r.clone();
        r2.push(v);
        let p2 = p.iter().copied().filter(|&u| adj(u, v)).collect();
        let x2 = x.iter().copied().filter(|&u| adj(u, v)).collect();
        bron_kerbosch(r2, p2, x2, adj, out);
        x.push(v);
    }
}

pub fn psd_complete(p: &PartialHermitian) -> FeasibilityOutcome {
    psd_complete_with(p, &SolverSettings::default())
}

/// PSD completion of a partially specified Hermitian matrix. The witness
/// carries the fixed entries exactly.
pub fn psd_complete_with(p: &PartialHermitian, settings: &SolverSettings) -> FeasibilityOutcome {
    let tol = settings.feas_tol;
    let n = p.n;
    if n == 0 {
        return FeasibilityOutcome {
            status: Status::Feasible,
            witness: Some(vec![CMatrix::zeros(0, 0)]),
            margin: 0.0,
            residual: 0.0,
            iterations: 0,
            obstruction: None,
        };
    }
    if p.free_count() == 0 {
        let m = p.fill_zero();
        let lam = if n == 2 {
            min_eig_2x2(&m)
        } else {
            eigh_unchecked(&m).min()
        };
        return if lam >= -tol {
            FeasibilityOutcome {
                status: Status::Feasible,
                witness: Some(vec![m]),
                margin: lam,
                residual: 0.0,
                iterations: 0,
                obstruction: None,
            }
        } else if lam < -10.0 * tol {
            FeasibilityOutcome::infeasible(
                Obstruction::NegativePrincipalSubmatrix {
                    indices: (0..n).collect(),
                    min_eig: lam,
                },
                lam,
                0,
            )
        } else {
            FeasibilityOutcome {
                status: Status::Indeterminate,
                witness: None,
                margin: lam,
                residual: 0.0,
                iterations: 0,
                obstruction: None,
            }
        };
    }
    let mut worst: Option<(Vec<usize>, f64)> = None;
    for clique in p.fixed_cliques() {
        let lam = eigh_unchecked(&p.principal(&clique)).min();
        if worst.as_ref().is_none_or(|(_, w)| lam < *w) {
            worst = Some((clique, lam));
        }
    }
    if let Some((mut indices, lam)) = worst {
        if lam < -10.0 * tol {
            indices.sort_unstable();
            return FeasibilityOutcome::infeasible(
                Obstruction::NegativePrincipalSubmatrix { indices, min_eig: lam },
                lam,
                0,
            );
        }
    }

    let mut prob = AffinePsdProblem::single(n);
    for (&(i, j), &v) in &p.fixed {
        prob.fix_entry(0, i, j, v);
    }
    let mut out = affine_psd_feasibility_with(&prob, settings);
    if let Some(w) = out.witness.as_mut() {
        let x = &mut w[0];
        for (&(i, j), &v) in &p.fixed {
            x[(i, j)] = v;
            x[(j, i)] = v.conj();
        }
        let lam = eigh_unchecked(x).min();
        out.margin = lam;
        out.residual = 0.0;
        if lam < -tol {
            out.status = Status::Indeterminate;
            out.witness = None;
        }
    }
    out
}

/// Smallest eigenvalue of a 2×2 Hermitian matrix in closed form.
fn min_eig_2x2(m: &CMatrix) -> f64 {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)].norm();
    let half = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    half - rad
}

/// Non-negative `n × m` matrix of branch probabilities `P_i^j`; row `i`
/// sums to at most one, the remainder being the failure probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    n: usize,
    m: usize,
    entries: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::BadProbabilityMatrix("no rows".into()));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::BadProbabilityMatrix("no columns".into()));
        }
        let mut entries = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::BadProbabilityMatrix(format!("row {i} has {} entries, expected {m}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::BadProbabilityMatrix(format!("entry ({i},{j}) = {v}")));
                }
            }
            let s: f64 = row.iter().sum();
            if s > 1.0 + 1e-12 {
                return Err(Error::BadProbabilityMatrix(format!("row {i} sums to {s} > 1")));
            }
            entries.extend_from_slice(row);
        }
        Ok(ProbabilityMatrix { n, m, entries })
    }

    /// Every entry equal to `p`.
    pub fn uniform(n: usize, m: usize, p: f64) -> Result<Self> {
        Self::new(vec![vec![p; m]; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.entries[i * self.m..(i + 1) * self.m].iter().sum()
    }

    /// `P_i^0 = 1 − Σ_j P_i^j`, clamped at zero.
    pub fn failure(&self, i: usize) -> f64 {
        (1.0 - self.row_sum(i)).max(0.0)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(
            (0..self.n)
                .map(|i| (0..self.m).map(|j| self.get(i, j) * s).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.entries[i * self.m..(i + 1) * self.m].to_vec())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `G_A = Σ_j Π^j ∘ G_{B^j}`, rows of `P` sum to one.
    Exact,
    /// `G_A − Σ_j Π^j ∘ G_{B^j} ⪰ 0`, rows of `P` sum to at most one.
    Subnormalized,
}

pub fn hadamard_sum_feasibility(
    g_a: &GramMatrix,
    targets: &[GramMatrix],
    probs: &ProbabilityMatrix,
    mode: Mode,
) -> Result<FeasibilityOutcome> {
    hadamard_sum_feasibility_with(g_a, targets, probs, mode, &SolverSettings::default())
}

/// Search for PSD `Π^1, …, Π^m` with `diag Π^j = P^j` satisfying the
/// Hadamard-sum condition of `mode`. The witness lists the `Π^j`.
pub fn hadamard_sum_feasibility_with(
    g_a: &GramMatrix,
    targets: &[GramMatrix],
    probs: &ProbabilityMatrix,
    mode: Mode,
    settings: &SolverSettings,
) -> Result<FeasibilityOutcome> {
    let n = g_a.n();
    let m = targets.len();
    if m == 0 {
        return Err(Error::Empty("target families"));
    }
    if let Some(bad) = targets.iter().find(|g| g.n() != n) {
        return Err(Error::SizeMismatch { left: n, right: bad.n() });
    }
    if probs.n() != n || probs.m() != m {
        return Err(Error::BadProbabilityMatrix(format!(
            "expected {n}x{m}, got {}x{}",
            probs.n(),
            probs.m()
        )));
    }
    if mode == Mode::Exact {
        for i in 0..n {
            let s = probs.row_sum(i);
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::BadProbabilityMatrix(format!("row {i} sums to {s}, exact mode needs 1")));
            }
        }
    }
    let slack_block = (mode == Mode::Subnormalized).then_some(m);
    let blocks = vec![n; m + usize::from(slack_block.is_some())];
    let mut prob = AffinePsdProblem::new(blocks);
    for j in 0..m {
        for i in 0..n {
            let mut f = CMatrix::zeros(n, n);
            f[(i, i)] = matcore::ONE;
            prob.add_eq(vec![(j, f)], probs.get(i, j));
        }
    }
    let ga = g_a.matrix();
    for i in 0..n {
        for k in i..n {
            let mut terms = Vec::with_capacity(m + 1);
            for (j, gb) in targets.iter().enumerate() {
                let coef = gb.matrix()[(i, k)];
                if coef.norm() == 0.0 {
                    continue;
                }
                let mut f = CMatrix::zeros(n, n);
                // tr(F Π) = coef · Π_ik
                f[(k, i)] = coef;
                terms.push((j, f));
            }
            if let Some(s) = slack_block {
                let mut f = CMatrix::zeros(n, n);
                f[(k, i)] = matcore::ONE;
                terms.push((s, f));
            }
            if terms.is_empty() {
                if ga[(i, k)].norm() > settings.feas_tol {
                    return Ok(FeasibilityOutcome::infeasible(
                        Obstruction::AffineInconsistent {
                            residual: ga[(i, k)].norm(),
                        },
                        -ga[(i, k)].norm(),
                        0,
                    ));
                }
                continue;
            }
            let target = if i == k { c(ga[(i, i)].re, 0.0) } else { ga[(i, k)] };
            if i == k {
                let re = terms.into_iter().map(|(b, f)| (b, hermitian_part(&f))).collect();
                prob.add_eq(re, target.re);
            } else {
                prob.add_complex_eq(terms, target);
            }
        }
    }
    let mut out = affine_psd_feasibility_with(&prob, settings);
    if let Some(w) = out.witness.take() {
        let mut pis: Vec<CMatrix> = w.into_iter().take(m).collect();
        for (j, pi) in pis.iter_mut().enumerate() {
            for i in 0..n {
                pi[(i, i)] = c(probs.get(i, j), 0.0);
            }
        }
        let margin = pis
            .iter()
            .map(|pi| eigh_unchecked(pi).min())
            .fold(f64::INFINITY, f64::min);
        let rem = hadamard_remainder(g_a, targets, &pis);
        let (residual, slack_margin) = match mode {
            Mode::Exact => (rem.norm(), f64::INFINITY),
            Mode::Subnormalized => (0.0, eigh_unchecked(&rem).min()),
        };
        out.margin = margin.min(slack_margin);
        out.residual = residual;
        if out.margin < -settings.feas_tol || residual > settings.feas_tol {
            out.status = Status::Indeterminate;
        } else {
            out.witness = Some(pis);
        }
    }
    Ok(out)
}

/// `G_A − Σ_j Π^j ∘ G_{B^j}`.
pub fn hadamard_remainder(g_a: &GramMatrix, targets: &[GramMatrix], pis: &[CMatrix]) -> CMatrix {
    let mut rem = g_a.matrix().clone();
    for (pi, gb) in pis.iter().zip(targets) {
        rem -= pi.component_mul(gb.matrix());
    }
    hermitian_part(&rem)
}
