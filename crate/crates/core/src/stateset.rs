//! Kets, density matrices, state sets and Gram matrices.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matcore::{
    self, all_finite, c, eigh, eigh_unchecked, hermitian_asymmetry, hermitian_part, outer, CMatrix,
    CVector, C64,
};

/// Inner products with modulus below this are treated as exact zeros.
pub const ZERO_OVERLAP: f64 = 1e-12;
/// Purity threshold on `tr ρ²`.
pub const PURITY_TOL: f64 = 1e-9;
/// Default eigenvalue cut for [`eigendecompose_to_pure`].
pub const DECOMPOSITION_TOL: f64 = 1e-10;

const GRAM_TOL: f64 = 1e-8;

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket(CVector);

impl Ket {
    /// Normalizes `amplitudes`; fails on a zero or non-finite vector.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Empty("ket amplitudes"));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidState("zero ket".into()));
        }
        Ok(Ket(amplitudes.unscale(norm)))
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        Ket(matcore::basis(dim, k))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn projector(&self) -> CMatrix {
        outer(&self.0, &self.0)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(self.projector())
    }

    pub fn with_phase(&self, theta: f64) -> Ket {
        Ket(self.0.map(|z| z * C64::from_polar(1.0, theta)))
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket(matcore::kron_vec(&self.0, &other.0))
    }
}

/// Hermitian, PSD, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        matcore::ensure_square(&matrix)?;
        if matrix.nrows() == 0 {
            return Err(Error::Empty("density matrix"));
        }
        if !all_finite(&matrix) {
            return Err(Error::NonFinite);
        }
        let asym = hermitian_asymmetry(&matrix);
        if asym > 1e-10 {
            return Err(Error::NonHermitian { asymmetry: asym });
        }
        let m = hermitian_part(&matrix);
        let tr = matcore::trace(&m).re;
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = eigh_unchecked(&m).min();
        if min < -1e-8 {
            return Err(Error::NotPsd { min_eig: min });
        }
        Ok(DensityMatrix(m))
    }

    /// Wraps a matrix produced by internal computation, only renormalizing
    /// the Hermitian part. Callers are responsible for positivity.
    pub(crate) fn from_raw(matrix: CMatrix) -> Self {
        DensityMatrix(hermitian_part(&matrix))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(matcore::identity(dim).unscale(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    pub fn is_pure(&self) -> bool {
        self.purity() >= 1.0 - PURITY_TOL
    }

    pub fn fidelity(&self, other: &DensityMatrix) -> Result<f64> {
        matcore::fidelity(&self.0, &other.0)
    }

    /// Dominant eigenvector; meaningful when the state is pure.
    pub fn top_ket(&self) -> Ket {
        let e = eigh_unchecked(&self.0);
        let k = e.values.len() - 1;
        Ket(e.vectors.column(k).into_owned())
    }
}

/// Input form of a state: a ket or a density matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(Ket),
    Mixed(DensityMatrix),
}

/// One member of a [`StateSet`]; `ket` is present exactly when the member is
/// pure (given as a ket, or a density matrix passing the purity test).
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub density: DensityMatrix,
    pub ket: Option<Ket>,
}

impl Member {
    pub fn is_pure(&self) -> bool {
        self.ket.is_some()
    }
}

/// Ordered, non-empty list of states sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSet {
    dim: usize,
    members: Vec<Member>,
}

impl StateSet {
    pub fn new(states: Vec<State>) -> Result<Self> {
        let first = states.first().ok_or(Error::Empty("state set"))?;
        let dim = match first {
            State::Pure(k) => k.dim(),
            State::Mixed(r) => r.dim(),
        };
        let mut members = Vec::with_capacity(states.len());
        for s in states {
            let member = match s {
                State::Pure(k) => Member {
                    density: k.density(),
                    ket: Some(k),
                },
                State::Mixed(r) => {
                    let ket = r.is_pure().then(|| r.top_ket());
                    Member { density: r, ket }
                }
            };
            if member.density.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: member.density.dim(),
                });
            }
            members.push(member);
        }
        Ok(StateSet { dim, members })
    }

    pub fn from_kets(kets: Vec<Ket>) -> Result<Self> {
        Self::new(kets.into_iter().map(State::Pure).collect())
    }

    pub fn from_densities(rhos: Vec<DensityMatrix>) -> Result<Self> {
        Self::new(rhos.into_iter().map(State::Mixed).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn all_pure(&self) -> bool {
        self.members.iter().all(Member::is_pure)
    }

    pub fn densities(&self) -> Vec<&DensityMatrix> {
        self.members.iter().map(|m| &m.density).collect()
    }

    /// Kets of all members, or `MixedMember` naming the first mixed one.
    pub fn kets(&self) -> Result<Vec<Ket>> {
        self.members
            .iter()
            .enumerate()
            .map(|(index, m)| m.ket.clone().ok_or(Error::MixedMember { index }))
            .collect()
    }

    /// Reorders members so that member `i` of the result is member `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> StateSet {
        StateSet {
            dim: self.dim,
            members: perm.iter().map(|&p| self.members[p].clone()).collect(),
        }
    }
}

/// Unit-diagonal Hermitian PSD matrix of pairwise inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(CMatrix);

impl GramMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let n = matcore::ensure_square(&m)?;
        if n == 0 {
            return Err(Error::Empty("gram matrix"));
        }
        if !all_finite(&m) {
            return Err(Error::NonFinite);
        }
        let asym = hermitian_asymmetry(&m);
        if asym > 1e-10 {
            return Err(Error::NonHermitian { asymmetry: asym });
        }
        if (0..n).any(|i| (m[(i, i)] - matcore::ONE).norm() > 1e-10) {
            return Err(Error::InvalidState("gram matrix diagonal must be 1".into()));
        }
        let m = hermitian_part(&m);
        let min = eigh_unchecked(&m).min();
        if min < -GRAM_TOL {
            return Err(Error::NotPsd { min_eig: min });
        }
        Ok(GramMatrix(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

/// Phases `θ_i`; the associated matrix is `K_ij = e^{i(θ_i − θ_j)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub thetas: Vec<f64>,
}

impl PhaseVector {
    pub fn zeros(n: usize) -> Self {
        PhaseVector { thetas: vec![0.0; n] }
    }

    pub fn phase_matrix(&self) -> CMatrix {
        let n = self.thetas.len();
        CMatrix::from_fn(n, n, |i, j| C64::from_polar(1.0, self.thetas[i] - self.thetas[j]))
    }

    /// Whether `G2 = G ∘ K` holds within `tol` entrywise.
    pub fn relates(&self, g: &GramMatrix, g2: &GramMatrix, tol: f64) -> bool {
        let k = self.phase_matrix();
        let n = g.n();
        n == g2.n()
            && n == self.thetas.len()
            && (0..n).all(|i| (0..n).all(|j| (g2.0[(i, j)] - g.0[(i, j)] * k[(i, j)]).norm() <= tol))
    }
}

/// `G_ij = ⟨a_i|a_j⟩`.
pub fn gram_from_kets(kets: &[Ket]) -> Result<GramMatrix> {
    let first = kets.first().ok_or(Error::Empty("ket list"))?;
    let d = first.dim();
    if let Some(bad) = kets.iter().find(|k| k.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    let n = kets.len();
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = matcore::ONE;
        for j in (i + 1)..n {
            let z = kets[i].inner(&kets[j]);
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
    }
    Ok(GramMatrix(g))
}

/// Factor a Hermitian PSD matrix as `M = C†C`. Columns of `C` carry the
/// vectors; their squared lengths are the diagonal of `M`. Rows are the
/// eigen-directions with eigenvalue above `1e-12·max(1, λ_max)`, so `C` has
/// `rank(M)` rows (at least one).
pub fn factor_psd(m: &CMatrix) -> Result<CMatrix> {
    let e = eigh(m)?;
    let scale = e.max().abs().max(1.0);
    if e.min() < -1e-6 * scale {
        return Err(Error::NotPsd { min_eig: e.min() });
    }
    let n = m.nrows();
    let keep: Vec<usize> = (0..n).filter(|&k| e.values[k] > 1e-12 * scale).collect();
    if keep.is_empty() {
        return Ok(CMatrix::zeros(1, n));
    }
    Ok(CMatrix::from_fn(keep.len(), n, |r, col| {
        let k = keep[r];
        e.vectors[(col, k)].conj() * e.values[k].sqrt()
    }))
}

/// Kets whose Gram matrix reproduces `g`: the columns of a factor `C` with
/// `G = C†C`, living in dimension `rank(G)`.
pub fn kets_from_gram(g: &GramMatrix) -> Result<Vec<Ket>> {
    kets_from_gram_matrix(&g.0)
}

pub(crate) fn kets_from_gram_matrix(g: &CMatrix) -> Result<Vec<Ket>> {
    let cfac = factor_psd(g)?;
    (0..g.ncols())
        .map(|j| Ket::new(cfac.column(j).into_owned()))
        .collect()
}

/// Canonical Gram matrix of pure states given as projectors:
/// `G_ij = r_ij e^{iθ_ij}` with `r_ij² = tr α_iα_j` and `θ_ij` the phase of
/// `tr α_1α_iα_j`. Undefined when some state is orthogonal to the first.
pub fn canonical_gram(set: &StateSet) -> Result<GramMatrix> {
    let projectors: Vec<CMatrix> = set
        .members()
        .iter()
        .enumerate()
        .map(|(index, m)| {
            if m.is_pure() {
                Ok(m.density.matrix().clone())
            } else {
                Err(Error::MixedMember { index })
            }
        })
        .collect::<Result<_>>()?;
    let n = projectors.len();
    let a1 = &projectors[0];
    for (i, p) in projectors.iter().enumerate().skip(1) {
        let overlap = (a1 * p).trace().re.max(0.0).sqrt();
        if overlap < ZERO_OVERLAP {
            return Err(Error::OrthogonalPair { index: i });
        }
    }
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = matcore::ONE;
        for j in (i + 1)..n {
            let r = (&projectors[i] * &projectors[j]).trace().re.max(0.0).sqrt();
            let triple = (a1 * &projectors[i] * &projectors[j]).trace();
            let z = if r < ZERO_OVERLAP || triple.norm() == 0.0 {
                matcore::ZERO
            } else {
                C64::from_polar(r, triple.arg())
            };
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
    }
    Ok(GramMatrix(g))
}

/// Phases with `G2_ij = G_ij e^{i(θ_i − θ_j)}` if they exist.
///
/// Phase differences are propagated over a spanning forest of the graph
/// whose edges are the entries nonzero in both matrices, then checked on
/// every entry. Components without a connecting edge get independent phases
/// (zero at their root).
pub fn gram_equivalent(g: &GramMatrix, g2: &GramMatrix) -> Option<PhaseVector> {
    let n = g.n();
    if g2.n() != n {
        return None;
    }
    let (a, b) = (&g.0, &g2.0);
    for i in 0..n {
        for j in 0..n {
            if (a[(i, j)].norm() - b[(i, j)].norm()).abs() > GRAM_TOL {
                return None;
            }
        }
    }
    let edge = |i: usize, j: usize| a[(i, j)].norm() >= ZERO_OVERLAP && b[(i, j)].norm() >= ZERO_OVERLAP;
    let mut theta: Vec<Option<f64>> = vec![None; n];
    for root in 0..n {
        if theta[root].is_some() {
            continue;
        }
        theta[root] = Some(0.0);
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            let ti = theta[i].expect("visited");
            for j in 0..n {
                if theta[j].is_none() && j != i && edge(i, j) {
                    // b_ij = a_ij e^{i(θ_i − θ_j)}
                    theta[j] = Some(ti - (b[(i, j)] / a[(i, j)]).arg());
                    queue.push_back(j);
                }
            }
        }
    }
    let phases = PhaseVector {
        thetas: theta.into_iter().map(|t| t.unwrap_or(0.0)).collect(),
    };
    phases.relates(g, g2, GRAM_TOL).then_some(phases)
}

/// Unitary equivalence of two pure sets via their Gram matrices.
pub fn unitary_equivalence(a: &StateSet, b: &StateSet) -> Result<Option<PhaseVector>> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let ga = gram_from_kets(&a.kets()?)?;
    let gb = gram_from_kets(&b.kets()?)?;
    Ok(gram_equivalent(&ga, &gb))
}

/// Spectral decomposition `ρ = Σ p |a⟩⟨a|` keeping weights above `tol`,
/// largest weight first.
pub fn eigendecompose_to_pure(rho: &DensityMatrix, tol: f64) -> Vec<(f64, Ket)> {
    let e = eigh_unchecked(rho.matrix());
    let d = e.values.len();
    (0..d)
        .rev()
        .filter(|&k| e.values[k] > tol)
        .map(|k| (e.values[k], Ket(e.vectors.column(k).into_owned())))
        .collect()
}

/// Builds a ket from real and imaginary parts; convenience for tests and
/// examples.
pub fn ket(parts: &[(f64, f64)]) -> Result<Ket> {
    Ket::new(CVector::from_iterator(parts.len(), parts.iter().map(|&(re, im)| c(re, im))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rket(d: usize, rng: &mut impl Rng) -> Ket {
        Ket::new(CVector::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))).unwrap()
    }

    fn plus() -> Ket {
        ket(&[(1.0, 0.0), (1.0, 0.0)]).unwrap()
    }

    fn plus_i() -> Ket {
        ket(&[(1.0, 0.0), (0.0, 1.0)]).unwrap()
    }

    #[test]
    fn ket_normalizes_and_rejects_zero() {
        let k = ket(&[(3.0, 0.0), (0.0, 4.0)]).unwrap();
        assert_abs_diff_eq!(k.amplitudes().norm(), 1.0, epsilon = 1e-12);
        assert!(ket(&[(0.0, 0.0)]).is_err());
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(matcore::identity(2)).is_err());
        assert!(DensityMatrix::new(CMatrix::from_diagonal_element(2, 2, c(0.5, 0.0))).is_ok());
        let neg = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(neg), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn state_set_detects_purity_of_matrices() {
        let set = StateSet::new(vec![
            State::Mixed(plus().density()),
            State::Mixed(DensityMatrix::maximally_mixed(2)),
        ])
        .unwrap();
        assert!(set.members()[0].is_pure());
        assert!(!set.members()[1].is_pure());
        assert!(matches!(set.kets(), Err(Error::MixedMember { index: 1 })));
        let bad = StateSet::new(vec![State::Pure(plus()), State::Pure(Ket::basis(3, 0))]);
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
        assert!(StateSet::new(vec![]).is_err());
    }

    #[test]
    fn gram_examples() {
        let basis: Vec<Ket> = (0..3).map(|k| Ket::basis(3, k)).collect();
        assert!((gram_from_kets(&basis).unwrap().matrix() - matcore::identity(3)).norm() < 1e-14);
        let same = gram_from_kets(&[plus(), plus()]).unwrap();
        assert!((same.matrix() - CMatrix::from_element(2, 2, matcore::ONE)).norm() < 1e-14);
        let g = gram_from_kets(&[Ket::basis(2, 0), plus()]).unwrap();
        assert_abs_diff_eq!(g.matrix()[(0, 1)].re, 0.5f64.sqrt(), epsilon = 1e-14);
        assert!(gram_from_kets(&[Ket::basis(2, 0), Ket::basis(3, 0)]).is_err());
    }

    #[test]
    fn kets_from_gram_examples() {
        let id = GramMatrix::new(matcore::identity(3)).unwrap();
        let kets = kets_from_gram(&id).unwrap();
        assert!((gram_from_kets(&kets).unwrap().matrix() - id.matrix()).norm() < 1e-8);
        let ones = GramMatrix::new(CMatrix::from_element(3, 3, matcore::ONE)).unwrap();
        let kets = kets_from_gram(&ones).unwrap();
        assert_eq!(kets[0].dim(), 1);
        assert!((gram_from_kets(&kets).unwrap().matrix() - ones.matrix()).norm() < 1e-8);
    }

    #[test]
    fn canonical_gram_examples() {
        let k = plus();
        let set = StateSet::from_kets(vec![k.clone(), k.clone(), k]).unwrap();
        let g = canonical_gram(&set).unwrap();
        assert!((g.matrix() - CMatrix::from_element(3, 3, matcore::ONE)).norm() < 1e-12);

        let kets = vec![Ket::basis(2, 0), plus(), plus_i()];
        let g = canonical_gram(&StateSet::from_kets(kets.clone()).unwrap()).unwrap();
        // reference: re-phase each ket so ⟨a_1|a_i⟩ > 0, then take inner products
        let rephased: Vec<Ket> = kets
            .iter()
            .map(|k| k.with_phase(-kets[0].inner(k).arg()))
            .collect();
        let reference = gram_from_kets(&rephased).unwrap();
        assert!((g.matrix() - reference.matrix()).norm() < 1e-12);

        let orth = StateSet::from_kets(vec![Ket::basis(2, 0), Ket::basis(2, 1)]).unwrap();
        assert!(matches!(canonical_gram(&orth), Err(Error::OrthogonalPair { index: 1 })));
    }

    #[test]
    fn gram_equivalent_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kets: Vec<Ket> = (0..4).map(|_| rket(3, &mut rng)).collect();
        let g = gram_from_kets(&kets).unwrap();
        let self_phases = gram_equivalent(&g, &g).unwrap();
        assert!(self_phases.thetas.iter().all(|t| t.abs() < 1e-12));

        let thetas: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let k = PhaseVector { thetas: thetas.clone() }.phase_matrix();
        let g2 = GramMatrix::new(g.matrix().component_mul(&k)).unwrap();
        let found = gram_equivalent(&g, &g2).unwrap();
        assert!(found.relates(&g, &g2, 1e-8));
        // recovered up to a global shift
        let shift = found.thetas[0] - thetas[0];
        for (f, t) in found.thetas.iter().zip(&thetas) {
            let diff = (f - t - shift).rem_euclid(std::f64::consts::TAU);
            assert!(diff < 1e-8 || diff > std::f64::consts::TAU - 1e-8);
        }

        let a = gram_from_kets(&[Ket::basis(2, 0), ket(&[(0.5, 0.0), (0.75f64.sqrt(), 0.0)]).unwrap()]).unwrap();
        let b = gram_from_kets(&[Ket::basis(2, 0), ket(&[(0.6, 0.0), (0.8, 0.0)]).unwrap()]).unwrap();
        assert!(gram_equivalent(&a, &b).is_none());
    }

    #[test]
    fn gram_equivalent_handles_disconnected_components() {
        // two orthogonal blocks: phases in each block are independent
        let kets = vec![Ket::basis(4, 0), ket(&[(1.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]).unwrap(), Ket::basis(4, 2), ket(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap()];
        let g = gram_from_kets(&kets).unwrap();
        let rotated: Vec<Ket> = kets.iter().zip([0.3, 1.1, -2.0, 0.7]).map(|(k, t)| k.with_phase(t)).collect();
        let g2 = gram_from_kets(&rotated).unwrap();
        assert!(gram_equivalent(&g, &g2).unwrap().relates(&g, &g2, 1e-10));
    }

    #[test]
    fn unitary_equivalence_examples() {
        let a = StateSet::from_kets(vec![Ket::basis(2, 0), plus()]).unwrap();
        let rotated = StateSet::from_kets(vec![Ket::basis(2, 0).with_phase(0.4), plus().with_phase(-1.3)]).unwrap();
        assert!(unitary_equivalence(&a, &rotated).unwrap().is_some());
        let z = StateSet::from_kets(vec![Ket::basis(2, 0), Ket::basis(2, 1)]).unwrap();
        let x = StateSet::from_kets(vec![plus(), ket(&[(1.0, 0.0), (-1.0, 0.0)]).unwrap()]).unwrap();
        assert!(unitary_equivalence(&z, &x).unwrap().is_some());
        let p5 = StateSet::from_kets(vec![Ket::basis(2, 0), ket(&[(0.5, 0.0), (0.75f64.sqrt(), 0.0)]).unwrap()]).unwrap();
        let p6 = StateSet::from_kets(vec![Ket::basis(2, 0), ket(&[(0.6, 0.0), (0.8, 0.0)]).unwrap()]).unwrap();
        assert!(unitary_equivalence(&p5, &p6).unwrap().is_none());
        let mixed = StateSet::from_densities(vec![DensityMatrix::maximally_mixed(2); 2]).unwrap();
        assert!(matches!(unitary_equivalence(&a, &mixed), Err(Error::MixedMember { .. })));
    }

    #[test]
    fn eigendecompose_examples() {
        let terms = eigendecompose_to_pure(&plus().density(), DECOMPOSITION_TOL);
        assert_eq!(terms.len(), 1);
        assert_abs_diff_eq!(terms[0].0, 1.0, epsilon = 1e-12);
        let terms = eigendecompose_to_pure(&DensityMatrix::maximally_mixed(2), DECOMPOSITION_TOL);
        assert_eq!(terms.len(), 2);
        assert_abs_diff_eq!(terms[0].0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(terms[0].1.inner(&terms[1].1).norm(), 0.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = (rket(3, &mut rng), rket(3, &mut rng));
        let rho = DensityMatrix::new(x.projector().scale(0.3) + y.projector().scale(0.7)).unwrap();
        let terms = eigendecompose_to_pure(&rho, DECOMPOSITION_TOL);
        assert_eq!(terms.len(), 2);
        let rebuilt = terms.iter().fold(CMatrix::zeros(3, 3), |acc, (p, k)| acc + k.projector().scale(*p));
        assert!((rebuilt - rho.matrix()).norm() <= 1e-9);
        assert_abs_diff_eq!(terms.iter().map(|t| t.0).sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn product_gram_is_hadamard(seed in any::<u64>(), n in 1usize..=4, da in 1usize..=3, dx in 1usize..=3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a: Vec<Ket> = (0..n).map(|_| rket(da, &mut rng)).collect();
                let x: Vec<Ket> = (0..n).map(|_| rket(dx, &mut rng)).collect();
                let ax: Vec<Ket> = a.iter().zip(&x).map(|(p, q)| p.tensor(q)).collect();
                let lhs = gram_from_kets(&ax).unwrap();
                let rhs = matcore::hadamard(gram_from_kets(&a).unwrap().matrix(), gram_from_kets(&x).unwrap().matrix()).unwrap();
                prop_assert!((lhs.matrix() - rhs).norm() <= 1e-10);
            }

            #[test]
            fn gram_round_trip(seed in any::<u64>(), n in 1usize..=5, d in 1usize..=4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let kets: Vec<Ket> = (0..n).map(|_| rket(d, &mut rng)).collect();
                let g = gram_from_kets(&kets).unwrap();
                let back = gram_from_kets(&kets_from_gram(&g).unwrap()).unwrap();
                prop_assert!((back.matrix() - g.matrix()).norm() <= 1e-8);
            }

            #[test]
            fn canonical_gram_phase_invariant(seed in any::<u64>(), n in 1usize..=4, d in 2usize..=3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let kets: Vec<Ket> = (0..n).map(|_| rket(d, &mut rng)).collect();
                let rotated: Vec<Ket> = kets.iter().map(|k| k.with_phase(rng.random_range(-3.2..3.2))).collect();
                let g1 = canonical_gram(&StateSet::from_kets(kets).unwrap()).unwrap();
                let g2 = canonical_gram(&StateSet::from_kets(rotated).unwrap()).unwrap();
                prop_assert!((g1.matrix() - g2.matrix()).norm() <= 1e-10);
            }

            #[test]
            fn gram_equivalence_is_an_equivalence(seed in any::<u64>(), n in 1usize..=4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let kets: Vec<Ket> = (0..n).map(|_| rket(3, &mut rng)).collect();
                let mut rotate = |ks: &[Ket]| -> Vec<Ket> { ks.iter().map(|k| k.with_phase(rng.random_range(-3.2..3.2))).collect() };
                let k2 = rotate(&kets);
                let k3 = rotate(&k2);
                let g1 = gram_from_kets(&kets).unwrap();
                let g2 = gram_from_kets(&k2).unwrap();
                let g3 = gram_from_kets(&k3).unwrap();
                prop_assert!(gram_equivalent(&g1, &g1).is_some());
                prop_assert!(gram_equivalent(&g1, &g2).is_some());
                prop_assert!(gram_equivalent(&g2, &g1).is_some());
                prop_assert!(gram_equivalent(&g2, &g3).is_some());
                prop_assert!(gram_equivalent(&g1, &g3).is_some());
            }
        }
    }
}
