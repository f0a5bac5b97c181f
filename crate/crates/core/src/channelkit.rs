//! Explicit channels and instruments built from feasibility witnesses, and
//! their verification by direct application.
//!
//! Choi convention: `J = Σ_kl |k⟩⟨l| ⊗ T(|k⟩⟨l|)`, input factor first, so
//! `T(ρ)_ab = Σ_kl ρ_kl J[(k,a),(l,b)]` with row index `k·d_out + a`.
//! Isometries map the input into output ⊗ outcome ⊗ environment with row
//! index `(s·outcomes + j)·env + e`.

use crate::error::{Error, Result};
use crate::matcore::{
    self, c, eigh_unchecked, hermitian_part, orthogonal_complement, partial_trace_second, CMatrix, CVector, C64,
};
use crate::psdfeas::{hadamard_remainder, Mode, ProbabilityMatrix};
use crate::stateset::{factor_psd, gram_from_kets, DensityMatrix, GramMatrix, Ket, StateSet, ZERO_OVERLAP};

/// Completeness tolerance for constructed channels.
pub const COMPLETENESS_TOL: f64 = 1e-8;
/// Eigenvalues of a Choi matrix at or below this produce no Kraus operator.
pub const KRAUS_EIG_CUT: f64 = 1e-10;
const WITNESS_TOL: f64 = 1e-7;
const SPAN_TOL: f64 = 1e-10;
const SAME_STATE_TOL: f64 = 1e-9;

/// `‖Σ A†A − I‖_F`.
pub fn completeness_residual(dim_in: usize, operators: &[CMatrix]) -> f64 {
    let mut s = -matcore::identity(dim_in);
    for a in operators {
        s += a.adjoint() * a;
    }
    s.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    dim_in: usize,
    dim_out: usize,
    operators: Vec<CMatrix>,
}

impl KrausChannel {
    /// Fails with `NotTracePreserving` when `‖Σ A†A − I‖_F > 1e-8`.
    /// Operators negligible next to the largest one are dropped.
    pub fn new(dim_in: usize, dim_out: usize, mut operators: Vec<CMatrix>) -> Result<Self> {
        let largest = operators.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if operators.len() > 1 && largest > 0.0 {
            operators.retain(|a| a.norm() > 1e-12 * largest);
        }
        let ch = Self::new_unchecked(dim_in, dim_out, operators)?;
        let residual = ch.completeness_residual();
        if residual > COMPLETENESS_TOL {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(ch)
    }

    /// Shape checks only; completeness is not enforced.
    pub fn new_unchecked(dim_in: usize, dim_out: usize, operators: Vec<CMatrix>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::Empty("Kraus operators"));
        }
        for a in &operators {
            if a.shape() != (dim_out, dim_in) {
                return Err(Error::ShapeMismatch {
                    left: (dim_out, dim_in),
                    right: a.shape(),
                });
            }
        }
        Ok(KrausChannel {
            dim_in,
            dim_out,
            operators,
        })
    }

    pub fn identity(d: usize) -> Self {
        KrausChannel {
            dim_in: d,
            dim_out: d,
            operators: vec![matcore::identity(d)],
        }
    }

    /// Discards the input and prepares `sigma`.
    pub fn replacement(dim_in: usize, sigma: &DensityMatrix) -> Self {
        let e = eigh_unchecked(sigma.matrix());
        let d_out = sigma.dim();
        let mut operators = Vec::new();
        for (k, &lam) in e.values.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            for i in 0..dim_in {
                let v = e.vectors.column(k) * c(lam.sqrt(), 0.0);
                operators.push(CMatrix::from_fn(d_out, dim_in, |a, col| if col == i { v[a] } else { matcore::ZERO }));
            }
        }
        KrausChannel {
            dim_in,
            dim_out: d_out,
            operators,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn completeness_residual(&self) -> f64 {
        completeness_residual(self.dim_in, &self.operators)
    }

    /// `Σ A ρ A†` for any operator `ρ` (not necessarily a state).
    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim_out, self.dim_out);
        for a in &self.operators {
            out += a * rho * a.adjoint();
        }
        out
    }
}

pub fn apply_channel(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != ch.dim_in {
        return Err(Error::DimensionMismatch {
            expected: ch.dim_in,
            found: rho.dim(),
        });
    }
    Ok(DensityMatrix::from_raw(ch.apply_matrix(rho.matrix())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    dim_in: usize,
    dim_out: usize,
    matrix: CMatrix,
}

impl ChoiMatrix {
    /// Validates positivity and trace preservation within `1e-8`.
    pub fn new(dim_in: usize, dim_out: usize, matrix: CMatrix) -> Result<Self> {
        let n = dim_in * dim_out;
        if matrix.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                left: (n, n),
                right: matrix.shape(),
            });
        }
        let asym = matcore::hermitian_asymmetry(&matrix);
        if asym > 1e-8 {
            return Err(Error::NonHermitian { asymmetry: asym });
        }
        let matrix = hermitian_part(&matrix);
        let min = eigh_unchecked(&matrix).min();
        if min < -1e-8 {
            return Err(Error::NotPsd { min_eig: min });
        }
        let residual = (partial_trace_second(&matrix, dim_in, dim_out) - matcore::identity(dim_in)).norm();
        if residual > 1e-8 {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(ChoiMatrix {
            dim_in,
            dim_out,
            matrix,
        })
    }

    /// Cleans an approximate solver output: clips negative eigenvalues and
    /// restores exact trace preservation.
    pub fn from_approximate(dim_in: usize, dim_out: usize, matrix: &CMatrix) -> Result<Self> {
        let ops = kraus_operators_raw(dim_in, dim_out, &hermitian_part(matrix));
        let ops = renormalize(dim_in, ops)?;
        Ok(choi_of(&KrausChannel {
            dim_in,
            dim_out,
            operators: ops,
        }))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// The linear map encoded by `J`, applied to any operator.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        apply_choi_matrix(&self.matrix, self.dim_in, self.dim_out, rho)
    }
}

pub(crate) fn apply_choi_matrix(j: &CMatrix, d_in: usize, d_out: usize, rho: &CMatrix) -> CMatrix {
    CMatrix::from_fn(d_out, d_out, |a, b| {
        let mut s = matcore::ZERO;
        for k in 0..d_in {
            for l in 0..d_in {
                s += rho[(k, l)] * j[(k * d_out + a, l * d_out + b)];
            }
        }
        s
    })
}

pub fn choi_of(ch: &KrausChannel) -> ChoiMatrix {
    let n = ch.dim_in * ch.dim_out;
    let mut j = CMatrix::zeros(n, n);
    for a in &ch.operators {
        let w = CVector::from_fn(n, |r, _| a[(r % ch.dim_out, r / ch.dim_out)]);
        j += &w * w.adjoint();
    }
    ChoiMatrix {
        dim_in: ch.dim_in,
        dim_out: ch.dim_out,
        matrix: j,
    }
}

fn kraus_operators_raw(d_in: usize, d_out: usize, j: &CMatrix) -> Vec<CMatrix> {
    let e = eigh_unchecked(j);
    let mut ops = Vec::new();
    for k in (0..e.values.len()).rev() {
        let lam = e.values[k];
        if lam <= KRAUS_EIG_CUT {
            continue;
        }
        let s = lam.sqrt();
        ops.push(CMatrix::from_fn(d_out, d_in, |a, col| e.vectors[(col * d_out + a, k)] * s));
    }
    if ops.is_empty() {
        ops.push(CMatrix::zeros(d_out, d_in));
    }
    ops
}

/// `A_μ ↦ A_μ S^{-1/2}` with `S = Σ A†A`, making the set exactly complete.
fn renormalize(d_in: usize, ops: Vec<CMatrix>) -> Result<Vec<CMatrix>> {
    let residual = completeness_residual(d_in, &ops);
    if residual > 1e-6 {
        return Err(Error::NotTracePreserving { residual });
    }
    let mut s = CMatrix::zeros(d_in, d_in);
    for a in &ops {
        s += a.adjoint() * a;
    }
    let e = eigh_unchecked(&hermitian_part(&s));
    let inv_sqrt = e.map_values(|v| 1.0 / v.sqrt());
    Ok(ops.into_iter().map(|a| a * &inv_sqrt).collect())
}

/// One Kraus operator per eigenvalue of `J` above `1e-10`.
pub fn kraus_from_choi(j: &ChoiMatrix) -> Result<KrausChannel> {
    let ops = kraus_operators_raw(j.dim_in, j.dim_out, &j.matrix);
    let ops = renormalize(j.dim_in, ops)?;
    KrausChannel::new(j.dim_in, j.dim_out, ops)
}

/// Isometry into output ⊗ outcome ⊗ environment.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryWitness {
    pub matrix: CMatrix,
    pub dim_out: usize,
    pub outcomes: usize,
    pub env: usize,
    pub is_isometry: bool,
}

impl IsometryWitness {
    fn new(matrix: CMatrix, dim_out: usize, outcomes: usize, env: usize) -> Self {
        let d = matrix.ncols();
        let is_isometry = (matrix.adjoint() * &matrix - matcore::identity(d)).norm() <= COMPLETENESS_TOL;
        IsometryWitness {
            matrix,
            dim_out,
            outcomes,
            env,
            is_isometry,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    /// Kraus operators `(I ⊗ ⟨j| ⊗ ⟨e|) U` of outcome `j`.
    pub fn outcome_operators(&self, j: usize) -> Vec<CMatrix> {
        let (m, e_dim) = (self.outcomes, self.env);
        (0..e_dim)
            .map(|e| CMatrix::from_fn(self.dim_out, self.dim_in(), |s, k| self.matrix[((s * m + j) * e_dim + e, k)]))
            .collect()
    }

    /// Channel obtained by discarding outcome and environment.
    pub fn channel(&self) -> Result<KrausChannel> {
        let ops = (0..self.outcomes).flat_map(|j| self.outcome_operators(j)).collect();
        KrausChannel::new(self.dim_in(), self.dim_out, ops)
    }
}

fn ket_matrix(kets: &[Ket]) -> CMatrix {
    let d = kets[0].dim();
    CMatrix::from_fn(d, kets.len(), |r, col| kets[col].amplitudes()[r])
}

/// Pseudo-inverse via the Hermitian eigendecomposition of `A†A`.
fn pinv(a: &CMatrix) -> CMatrix {
    let g = hermitian_part(&(a.adjoint() * a));
    let e = eigh_unchecked(&g);
    let cut = SPAN_TOL * e.max().max(1e-300);
    let inv = e.map_values(|v| if v > cut { 1.0 / v } else { 0.0 });
    inv * a.adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gauge {
    Eigen,
    Rotated,
}

/// Fixed unitary used as the alternative gauge: discrete Fourier transform.
fn dft(n: usize) -> CMatrix {
    let s = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |i, j| {
        C64::from_polar(s, 2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64)
    })
}

fn factor_with(m: &CMatrix, gauge: Gauge) -> Result<CMatrix> {
    let f = factor_psd(m)?;
    Ok(match gauge {
        Gauge::Eigen => f,
        Gauge::Rotated => dft(f.nrows()) * f,
    })
}

/// Complete `L` (isometric on the source span) to a full isometry and polish
/// it to exact isometry by the polar factor.
fn extend_to_isometry(l: &CMatrix, a: &CMatrix, gauge: Gauge) -> Result<CMatrix> {
    let d_in = l.ncols();
    let span = matcore::column_span(a, SPAN_TOL);
    let q = orthogonal_complement(&span, SPAN_TOL);
    let mut u = l.clone();
    if q.ncols() > 0 {
        let range = matcore::column_span(&(l * &span), SPAN_TOL);
        let free = orthogonal_complement(&range, SPAN_TOL);
        if free.ncols() < q.ncols() {
            return Err(Error::WitnessInconsistent("no room to extend the isometry".into()));
        }
        let pick: Vec<usize> = match gauge {
            Gauge::Eigen => (0..q.ncols()).collect(),
            Gauge::Rotated => (0..q.ncols()).map(|k| free.ncols() - 1 - k).collect(),
        };
        let images = CMatrix::from_fn(free.nrows(), q.ncols(), |r, k| free[(r, pick[k])]);
        u = l * &span * span.adjoint() + images * q.adjoint();
    }
    debug_assert_eq!(u.ncols(), d_in);
    matcore::nearest_isometry(&u)
}

fn check_dims(kets: &[Ket], what: &'static str) -> Result<usize> {
    let first = kets.first().ok_or(Error::Empty(what))?;
    let d = first.dim();
    if let Some(k) = kets.iter().find(|k| k.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: k.dim(),
        });
    }
    Ok(d)
}

/// Isometry sending `|a_i⟩ ↦ |b_i⟩ ⊗ |ξ_i⟩` where `⟨ξ_i|ξ_j⟩ = M_ij`.
pub fn isometry_from_gram_witness(a: &[Ket], b: &[Ket], m: &CMatrix) -> Result<IsometryWitness> {
    isometry_with_gauge(a, b, m, Gauge::Eigen)
}

fn isometry_with_gauge(a: &[Ket], b: &[Ket], m: &CMatrix, gauge: Gauge) -> Result<IsometryWitness> {
    if a.len() != b.len() || m.nrows() != a.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    check_dims(a, "source kets")?;
    check_dims(b, "target kets")?;
    let ga = gram_from_kets(a)?;
    let gb = gram_from_kets(b)?;
    let violation = (ga.matrix() - m.component_mul(gb.matrix())).camax();
    if violation > WITNESS_TOL {
        return Err(Error::WitnessInconsistent(format!("G_A − M∘G_B has entry {violation:.3e}")));
    }
    build_instrument_isometry(a, &[b.to_vec()], &[m.clone()], Mode::Exact, gauge)
}

/// Assembles `U|a_i⟩ = Σ_j |b_i^j⟩ ⊗ |j⟩ ⊗ |c_i^j⟩ (+ failure term)` from the
/// factors of `Π^j` (and of the remainder in subnormalized mode).
fn build_instrument_isometry(
    a: &[Ket],
    families: &[Vec<Ket>],
    pis: &[CMatrix],
    mode: Mode,
    gauge: Gauge,
) -> Result<IsometryWitness> {
    let n = a.len();
    let d_in = check_dims(a, "source kets")?;
    let d_out = check_dims(&families.iter().flatten().cloned().collect::<Vec<_>>(), "target kets")?;
    let mut factors: Vec<CMatrix> = pis.iter().map(|pi| factor_with(pi, gauge)).collect::<Result<_>>()?;
    let mut states: Vec<Vec<CVector>> = families
        .iter()
        .map(|f| f.iter().map(|k| k.amplitudes().clone()).collect())
        .collect();
    if mode == Mode::Subnormalized {
        let ga = gram_from_kets(a)?;
        let gbs: Vec<GramMatrix> = families.iter().map(|f| gram_from_kets(f)).collect::<Result<_>>()?;
        let rem = hadamard_remainder(&ga, &gbs, pis);
        factors.insert(0, factor_with(&rem, gauge)?);
        states.insert(0, vec![matcore::basis(d_out, 0); n]);
    }
    let outcomes = factors.len();
    let rank = factors.iter().map(|f| f.nrows()).max().unwrap_or(1).max(1);
    let mut env = rank;
    while d_out * outcomes * env < d_in {
        env += 1;
    }
    let big = d_out * outcomes * env;
    let mut y = CMatrix::zeros(big, n);
    for (j, (f, st)) in factors.iter().zip(&states).enumerate() {
        for i in 0..n {
            for s in 0..d_out {
                let bs = st[i][s];
                if bs == matcore::ZERO {
                    continue;
                }
                for e in 0..f.nrows() {
                    y[((s * outcomes + j) * env + e, i)] += bs * f[(e, i)];
                }
            }
        }
    }
    let amat = ket_matrix(a);
    let l = &y * pinv(&amat);
    let u = extend_to_isometry(&l, &amat, gauge)?;
    Ok(IsometryWitness::new(u, d_out, outcomes, env))
}

/// Outcome-indexed family of CP maps whose sum is trace preserving.
/// `failure` is the optional outcome 0 preparing the first basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    dim_in: usize,
    dim_out: usize,
    pub outcomes: Vec<Vec<CMatrix>>,
    pub failure: Option<Vec<CMatrix>>,
}

impl Instrument {
    pub fn new(dim_in: usize, dim_out: usize, outcomes: Vec<Vec<CMatrix>>, failure: Option<Vec<CMatrix>>) -> Result<Self> {
        let inst = Instrument {
            dim_in,
            dim_out,
            outcomes,
            failure,
        };
        let residual = inst.completeness_residual();
        if residual > COMPLETENESS_TOL {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(inst)
    }

    fn from_isometry(w: &IsometryWitness, has_failure: bool) -> Result<Self> {
        let all: Vec<Vec<CMatrix>> = (0..w.outcomes).map(|j| w.outcome_operators(j)).collect();
        let (failure, outcomes) = if has_failure {
            let mut it = all.into_iter();
            (it.next(), it.collect())
        } else {
            (None, all)
        };
        Instrument::new(w.dim_in(), w.dim_out, outcomes, failure)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn all_operators(&self) -> Vec<CMatrix> {
        self.failure
            .iter()
            .flatten()
            .chain(self.outcomes.iter().flatten())
            .cloned()
            .collect()
    }

    pub fn completeness_residual(&self) -> f64 {
        completeness_residual(self.dim_in, &self.all_operators())
    }

    /// Unnormalized output of outcome `j` (index into `outcomes`).
    pub fn apply_outcome(&self, j: usize, rho: &CMatrix) -> CMatrix {
        apply_ops(&self.outcomes[j], rho, self.dim_out)
    }

    pub fn apply_failure(&self, rho: &CMatrix) -> CMatrix {
        match &self.failure {
            Some(ops) => apply_ops(ops, rho, self.dim_out),
            None => CMatrix::zeros(self.dim_out, self.dim_out),
        }
    }

    /// The channel that ignores the outcome.
    pub fn total_channel(&self) -> Result<KrausChannel> {
        KrausChannel::new(self.dim_in, self.dim_out, self.all_operators())
    }
}

fn apply_ops(ops: &[CMatrix], rho: &CMatrix, d_out: usize) -> CMatrix {
    let mut out = CMatrix::zeros(d_out, d_out);
    for a in ops {
        out += a * rho * a.adjoint();
    }
    out
}

/// Instrument realizing `α_i ↦ β_i^j` with probability `P_i^j` from PSD
/// witnesses `Π^j` of the Hadamard-sum condition.
pub fn instrument_from_witness(
    a: &[Ket],
    families: &[Vec<Ket>],
    probs: &ProbabilityMatrix,
    pis: &[CMatrix],
    mode: Mode,
) -> Result<Instrument> {
    let n = a.len();
    if families.len() != pis.len() || families.is_empty() {
        return Err(Error::SizeMismatch {
            left: families.len(),
            right: pis.len(),
        });
    }
    if let Some(f) = families.iter().find(|f| f.len() != n) {
        return Err(Error::SizeMismatch { left: n, right: f.len() });
    }
    for (j, pi) in pis.iter().enumerate() {
        for i in 0..n {
            if (pi[(i, i)].re - probs.get(i, j)).abs() > WITNESS_TOL {
                return Err(Error::WitnessInconsistent(format!("diag Π^{} differs from P at row {i}", j + 1)));
            }
        }
    }
    let ga = gram_from_kets(a)?;
    let gbs: Vec<GramMatrix> = families.iter().map(|f| gram_from_kets(f)).collect::<Result<_>>()?;
    let rem = hadamard_remainder(&ga, &gbs, pis);
    let bad = match mode {
        Mode::Exact => rem.camax(),
        Mode::Subnormalized => -eigh_unchecked(&rem).min(),
    };
    if bad > WITNESS_TOL {
        return Err(Error::WitnessInconsistent(format!("Hadamard-sum condition violated by {bad:.3e}")));
    }
    let w = build_instrument_isometry(a, families, pis, mode, Gauge::Eigen)?;
    Instrument::from_isometry(&w, mode == Mode::Subnormalized)
}

/// Per-source decomposition `σ_i = Σ_j P_i^j |b_i^j⟩⟨b_i^j|` read off an
/// instrument.
pub type Decomposition = Vec<(f64, Ket)>;

/// Stinespring dilation of `J` followed by a rank-one measurement of the
/// environment in the eigenbasis of `J`: one outcome per Kraus operator.
/// Post-states equal up to phase are merged in the returned decompositions.
pub fn instrument_from_choi(a: &StateSet, targets: &StateSet, j: &ChoiMatrix) -> Result<(Instrument, Vec<Decomposition>)> {
    let kets: Vec<Ket> = a
        .members()
        .iter()
        .enumerate()
        .map(|(index, m)| m.ket.clone().ok_or(Error::SourceNotPure { index }))
        .collect::<Result<_>>()?;
    if targets.len() != kets.len() {
        return Err(Error::SizeMismatch {
            left: kets.len(),
            right: targets.len(),
        });
    }
    let ch = kraus_from_choi(j)?;
    for (i, (k, t)) in kets.iter().zip(targets.members()).enumerate() {
        let img = ch.apply_matrix(&k.projector());
        let err = matcore::trace_norm(&hermitian_part(&(img - t.density.matrix())))?;
        if err > 1e-6 {
            return Err(Error::WitnessInconsistent(format!("channel misses target {i} by {err:.3e}")));
        }
    }
    let outcomes: Vec<Vec<CMatrix>> = ch.operators.iter().map(|op| vec![op.clone()]).collect();
    let inst = Instrument::new(ch.dim_in, ch.dim_out, outcomes, None)?;
    let decomps = kets
        .iter()
        .map(|k| {
            let mut parts: Decomposition = Vec::new();
            for op in &ch.operators {
                let v = op * k.amplitudes();
                let p = v.norm_squared();
                if p <= 1e-14 {
                    continue;
                }
                let b = Ket::new(v)?;
                match parts.iter_mut().find(|(_, b2)| b2.inner(&b).norm() >= 1.0 - SAME_STATE_TOL) {
                    Some(entry) => entry.0 += p,
                    None => parts.push((p, b)),
                }
            }
            Ok(parts)
        })
        .collect::<Result<_>>()?;
    Ok((inst, decomps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    /// `‖T(ρ_i) − σ_i‖₁` per source.
    pub errors: Vec<f64>,
    pub completeness_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

impl ChannelReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn verify_channel(ch: &KrausChannel, sources: &StateSet, targets: &StateSet, tol: f64) -> ChannelReport {
    let completeness = ch.completeness_residual();
    let mut errors = Vec::with_capacity(sources.len());
    let mut ok = sources.len() == targets.len() && sources.dim() == ch.dim_in && targets.dim() == ch.dim_out;
    if ok {
        for (s, t) in sources.members().iter().zip(targets.members()) {
            let diff = hermitian_part(&(ch.apply_matrix(s.density.matrix()) - t.density.matrix()));
            errors.push(matcore::trace_norm(&diff).unwrap_or(f64::INFINITY));
        }
    }
    ok = ok && completeness <= COMPLETENESS_TOL && errors.iter().all(|&e| e <= tol);
    ChannelReport {
        errors,
        completeness_residual: completeness,
        tol,
        passed: ok,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentReport {
    /// `|tr T_j(α_i) − P_i^j|`, indexed `[i][j]`.
    pub probability_errors: Vec<Vec<f64>>,
    /// `‖T_j(α_i)/P_i^j − β_i^j‖₁` where `P_i^j > tol`, else 0.
    pub state_errors: Vec<Vec<f64>>,
    pub completeness_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

impl InstrumentReport {
    pub fn max_error(&self) -> f64 {
        self.probability_errors
            .iter()
            .chain(&self.state_errors)
            .flatten()
            .cloned()
            .fold(0.0, f64::max)
    }
}

/// Checks outcome probabilities and post-states of an instrument built for
/// target families with branch probabilities `probs`.
pub fn verify_instrument(
    inst: &Instrument,
    sources: &StateSet,
    families: &[StateSet],
    probs: &ProbabilityMatrix,
    tol: f64,
) -> InstrumentReport {
    let completeness = inst.completeness_residual();
    let n = sources.len();
    let m = families.len();
    let shape_ok = inst.outcomes.len() == m
        && probs.n() == n
        && probs.m() == m
        && families.iter().all(|f| f.len() == n && f.dim() == inst.dim_out)
        && sources.dim() == inst.dim_in;
    let mut probability_errors = vec![vec![0.0; m]; n];
    let mut state_errors = vec![vec![0.0; m]; n];
    if shape_ok {
        for (i, src) in sources.members().iter().enumerate() {
            for j in 0..m {
                let out = hermitian_part(&inst.apply_outcome(j, src.density.matrix()));
                let p = out.trace().re;
                probability_errors[i][j] = (p - probs.get(i, j)).abs();
                if probs.get(i, j) > tol {
                    let target = families[j].members()[i].density.matrix();
                    state_errors[i][j] = matcore::trace_norm(&(out.unscale(p) - target)).unwrap_or(f64::INFINITY);
                }
            }
        }
    }
    let mut report = InstrumentReport {
        probability_errors,
        state_errors,
        completeness_residual: completeness,
        tol,
        passed: false,
    };
    report.passed = shape_ok && completeness <= COMPLETENESS_TOL && report.max_error() <= tol;
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// Largest `‖T₁(X) − T₂(X)‖_F` over `X = |u_k⟩⟨u_l|`, `u` an orthonormal
    /// basis of the source span.
    pub max_difference: f64,
    pub span_dim: usize,
}

/// Builds the pure-state channel twice from differently factored witnesses
/// and compares the two on the source span.
pub fn uniqueness_probe(a: &StateSet, b: &StateSet, m: &CMatrix) -> Result<UniquenessReport> {
    let ak = a.kets()?;
    let bk = b.kets()?;
    let gb = gram_from_kets(&bk)?;
    for i in 0..bk.len() {
        for j in (i + 1)..bk.len() {
            if gb.matrix()[(i, j)].norm() < ZERO_OVERLAP {
                return Err(Error::OrthogonalTargets { i, j });
            }
        }
    }
    let t1 = isometry_with_gauge(&ak, &bk, m, Gauge::Eigen)?.channel()?;
    let t2 = isometry_with_gauge(&ak, &bk, m, Gauge::Rotated)?.channel()?;
    let span = matcore::column_span(&ket_matrix(&ak), SPAN_TOL);
    let r = span.ncols();
    let mut max_difference: f64 = 0.0;
    for k in 0..r {
        for l in 0..r {
            let x = span.column(k) * span.column(l).adjoint();
            let d = (t1.apply_matrix(&x) - t2.apply_matrix(&x)).norm();
            max_difference = max_difference.max(d);
        }
    }
    Ok(UniquenessReport {
        max_difference,
        span_dim: r,
    })
}
