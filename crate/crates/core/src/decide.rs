//! Decision procedures: one per feasibility criterion, each returning a
//! verdict with a witness that can be checked independently.

use crate::channelkit::{
    self, instrument_from_choi, isometry_from_gram_witness, kraus_from_choi, ChoiMatrix, Decomposition, Instrument,
    KrausChannel,
};
use crate::error::{Error, Result};
use crate::matcore::{self, c, eigh_unchecked, hermitian_part, CMatrix, C64};
use crate::psdfeas::{
    affine_psd_feasibility, hadamard_sum_feasibility, psd_complete, AffinePsdProblem, FeasibilityOutcome, Obstruction,
    PartialHermitian, Status,
};
pub use crate::psdfeas::{Mode, ProbabilityMatrix};
use crate::stateset::{
    eigendecompose_to_pure, gram_equivalent, gram_from_kets, DensityMatrix, GramMatrix, Ket, PhaseVector, StateSet,
    DECOMPOSITION_TOL, ZERO_OVERLAP,
};

/// Verdicts within this distance of the feasibility boundary are flagged.
pub const BOUNDARY_BAND: f64 = 1e-6;
/// Tolerance on fidelity comparisons.
pub const FIDELITY_TOL: f64 = 1e-9;
/// Tolerance on the qubit determinant comparison.
pub const QUBIT_TOL: f64 = 1e-12;
/// Trace-norm tolerance when re-checking an oracle witness.
pub const WITNESS_CHECK_TOL: f64 = 1e-6;
const GRID_POINTS: usize = 1000;
const PRIOR_TOL: f64 = 1e-12;
/// Target eigenvalues below this are imposed as exact zeros.
const ZERO_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Infeasible,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Feasible => "feasible",
            Verdict::Infeasible => "infeasible",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

impl From<Status> for Verdict {
    fn from(s: Status) -> Self {
        match s {
            Status::Feasible => Verdict::Feasible,
            Status::Infeasible => Verdict::Infeasible,
            Status::Indeterminate => Verdict::Indeterminate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FidelityNecessary,
    PurePair,
    PureToPure,
    QubitPair,
    Multiprob,
    MixedToPure,
    PureToMixed,
    Choi,
    UnitaryEquivalence,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::FidelityNecessary => "fidelity-necessary",
            Method::PurePair => "pure-pair",
            Method::PureToPure => "pure",
            Method::QubitPair => "qubit-pair",
            Method::Multiprob => "multiprob",
            Method::MixedToPure => "mixed-to-pure",
            Method::PureToMixed => "pure-to-mixed",
            Method::Choi => "choi",
            Method::UnitaryEquivalence => "unitary-equivalence",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Method> {
        [
            Method::FidelityNecessary,
            Method::PurePair,
            Method::PureToPure,
            Method::QubitPair,
            Method::Multiprob,
            Method::MixedToPure,
            Method::PureToMixed,
            Method::Choi,
            Method::UnitaryEquivalence,
        ]
        .into_iter()
        .find(|m| m.tag() == tag)
    }
}

#[derive(Debug, Clone)]
pub enum Witness {
    /// `G_A = M ∘ G_B`.
    Completion(CMatrix),
    /// Pure sources expanded from mixed ones; `origin[k]` is the source the
    /// `k`-th ket came from, and `m` completes the expanded problem.
    Expansion { kets: Vec<Ket>, origin: Vec<usize>, m: CMatrix },
    /// Purifications of the two targets attaining their fidelity, and the
    /// 2×2 completion for the pure problem onto them.
    PurifiedPair { purifications: Vec<Ket>, m: CMatrix },
    /// `Π^1, …, Π^m` of the Hadamard-sum condition.
    HadamardFamily(Vec<CMatrix>),
    Choi(ChoiMatrix),
    PureToMixed {
        choi: ChoiMatrix,
        instrument: Instrument,
        decompositions: Vec<Decomposition>,
    },
    Phases(PhaseVector),
    ViolatingPair {
        i: usize,
        j: usize,
        source_fidelity: f64,
        target_fidelity: f64,
    },
    /// `‖σ₁ − tσ₂‖₁ > ‖ρ₁ − tρ₂‖₁` at this `t`.
    ViolatingParameter { t: f64, source_norm: f64, target_norm: f64 },
    /// `[G_B]_ij = 0` while `[G_A]_ij ≠ 0`.
    ForcedZero { i: usize, j: usize, source_overlap: f64 },
    Obstruction(Obstruction),
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub verdict: Verdict,
    pub method: Method,
    pub witness: Option<Witness>,
    /// Signed distance to the boundary in the method's own units: positive
    /// inside the feasible region. Infinite when the instance is trivially
    /// feasible.
    pub margin: f64,
    /// Constraint violation reported by iterative methods.
    pub residual: Option<f64>,
    pub notes: Vec<String>,
}

impl Decision {
    fn new(verdict: Verdict, method: Method, witness: Option<Witness>, margin: f64) -> Self {
        let mut d = Decision {
            verdict,
            method,
            witness,
            margin,
            residual: None,
            notes: Vec::new(),
        };
        if d.is_boundary() {
            d.notes.push(format!("boundary-case: margin {margin:.3e}"));
        }
        d
    }

    pub fn is_boundary(&self) -> bool {
        self.margin.abs() < BOUNDARY_BAND
    }

    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }

    fn from_outcome(out: FeasibilityOutcome, method: Method, witness: Option<Witness>) -> Self {
        let verdict = Verdict::from(out.status);
        let witness = match verdict {
            Verdict::Feasible => witness,
            Verdict::Infeasible => out.obstruction.clone().map(Witness::Obstruction),
            Verdict::Indeterminate => None,
        };
        let mut d = Decision::new(verdict, method, witness, out.margin);
        if out.residual.is_finite() {
            d.residual = Some(out.residual);
        }
        if let Some(ob) = &out.obstruction {
            d.notes.push(ob.to_string());
        }
        if verdict == Verdict::Indeterminate {
            d.notes.push(format!(
                "solver stopped after {} iterations (min eigenvalue {:.3e}, residual {:.3e})",
                out.iterations, out.margin, out.residual
            ));
        }
        d
    }
}

fn same_size(a: &StateSet, b: &StateSet) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.len())
}

fn pure_kets(set: &StateSet, err: fn(usize) -> Error) -> Result<Vec<Ket>> {
    set.members()
        .iter()
        .enumerate()
        .map(|(i, m)| m.ket.clone().ok_or_else(|| err(i)))
        .collect()
}

fn source_kets(set: &StateSet) -> Result<Vec<Ket>> {
    pure_kets(set, |index| Error::SourceNotPure { index })
}

fn target_kets(set: &StateSet) -> Result<Vec<Ket>> {
    pure_kets(set, |index| Error::TargetNotPure { index })
}

/// Pairwise fidelity test; necessary for feasibility in any dimension.
pub fn fidelity_necessary(a: &StateSet, b: &StateSet) -> Result<Decision> {
    let n = same_size(a, b)?;
    let mut worst: Option<(usize, usize, f64, f64)> = None;
    let mut margin = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let fs = a.members()[i].density.fidelity(&a.members()[j].density)?;
            let ft = b.members()[i].density.fidelity(&b.members()[j].density)?;
            let gap = ft - fs;
            if gap < margin {
                margin = gap;
                worst = Some((i, j, fs, ft));
            }
        }
    }
    match worst {
        Some((i, j, fs, ft)) if margin < -FIDELITY_TOL => Ok(Decision::new(
            Verdict::Infeasible,
            Method::FidelityNecessary,
            Some(Witness::ViolatingPair {
                i,
                j,
                source_fidelity: fs,
                target_fidelity: ft,
            }),
            margin,
        )),
        _ => {
            let mut d = Decision::new(Verdict::Indeterminate, Method::FidelityNecessary, None, margin);
            d.notes.push("pairwise fidelities do not decrease; condition is necessary only".into());
            Ok(d)
        }
    }
}

/// Two pure sources, arbitrary targets: feasible iff `F(σ₁,σ₂) ≥ F(ρ₁,ρ₂)`.
pub fn check_pure_pair(a: &StateSet, b: &StateSet) -> Result<Decision> {
    let n = same_size(a, b)?;
    if n != 2 {
        return Err(Error::SizeMismatch { left: 2, right: n });
    }
    let kets = source_kets(a)?;
    let fs = kets[0].inner(&kets[1]).norm().min(1.0);
    let t = b.members();
    let ft = t[0].density.fidelity(&t[1].density)?;
    let margin = ft - fs;
    if margin < -FIDELITY_TOL {
        return Ok(Decision::new(
            Verdict::Infeasible,
            Method::PurePair,
            Some(Witness::ViolatingPair {
                i: 0,
                j: 1,
                source_fidelity: fs,
                target_fidelity: ft,
            }),
            margin,
        ));
    }
    let (p1, p2) = matcore::max_overlap_purifications(t[0].density.matrix(), t[1].density.matrix())?;
    let psi = vec![Ket::new(p1)?, Ket::new(p2)?];
    let g_src = kets[0].inner(&kets[1]);
    let g_tgt = psi[0].inner(&psi[1]);
    let off = if g_src.norm() < ZERO_OVERLAP {
        matcore::ZERO
    } else {
        let r = g_src / g_tgt;
        if r.norm() > 1.0 {
            C64::from_polar(1.0, r.arg())
        } else {
            r
        }
    };
    let m = CMatrix::from_row_slice(2, 2, &[matcore::ONE, off, off.conj(), matcore::ONE]);
    Ok(Decision::new(
        Verdict::Feasible,
        Method::PurePair,
        Some(Witness::PurifiedPair { purifications: psi, m }),
        margin,
    ))
}

/// The partially fixed `M` with `G_A = M ∘ G_B`, or the first entry where
/// `G_B` vanishes but `G_A` does not.
fn completion_pattern(ga: &GramMatrix, gb: &GramMatrix) -> std::result::Result<PartialHermitian, Witness> {
    let n = ga.n();
    let mut p = PartialHermitian::new(n);
    for i in 0..n {
        p.fix(i, i, matcore::ONE);
        for j in (i + 1)..n {
            let a = ga.matrix()[(i, j)];
            let b = gb.matrix()[(i, j)];
            if b.norm() >= ZERO_OVERLAP {
                p.fix(i, j, a / b);
            } else if a.norm() >= ZERO_OVERLAP.max(1e-9) {
                return Err(Witness::ForcedZero {
                    i,
                    j,
                    source_overlap: a.norm(),
                });
            }
        }
    }
    Ok(p)
}

fn pure_to_pure_kets(a: &[Ket], b: &[Ket], method: Method) -> Result<Decision> {
    let ga = gram_from_kets(a)?;
    let gb = gram_from_kets(b)?;
    let p = match completion_pattern(&ga, &gb) {
        Ok(p) => p,
        Err(w) => {
            let margin = match &w {
                Witness::ForcedZero { source_overlap, .. } => -source_overlap,
                _ => f64::NAN,
            };
            return Ok(Decision::new(Verdict::Infeasible, method, Some(w), margin));
        }
    };
    let out = psd_complete(&p);
    let witness = out.witness.as_ref().map(|w| Witness::Completion(w[0].clone()));
    Ok(Decision::from_outcome(out, method, witness))
}

/// Pure sources and pure targets: feasible iff `G_A = M ∘ G_B` for some
/// PSD `M`.
pub fn check_pure_to_pure(a: &StateSet, b: &StateSet) -> Result<Decision> {
    same_size(a, b)?;
    pure_to_pure_kets(&a.kets()?, &b.kets()?, Method::PureToPure)
}

/// `‖X‖₁` of a 2×2 Hermitian matrix.
fn trace_norm_2x2(x: &CMatrix) -> f64 {
    let tr = x[(0, 0)].re + x[(1, 1)].re;
    let det = x[(0, 0)].re * x[(1, 1)].re - x[(0, 1)].norm_sqr();
    if det >= 0.0 {
        tr.abs()
    } else {
        (tr * tr - 4.0 * det).max(0.0).sqrt()
    }
}

/// Coefficients `[c0, c1, c2]` of `det(p(X+Y) − Y)` as a polynomial in `p`.
fn det_poly(x: &CMatrix, y: &CMatrix) -> [f64; 3] {
    let s = hermitian_part(&(x + y));
    let r = hermitian_part(y);
    let det = |m: &CMatrix| (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
    let tr = |m: &CMatrix| m.trace().re;
    [det(&r), (&s * &r).trace().re - tr(&s) * tr(&r), det(&s)]
}

fn eval(p: &[f64; 3], x: f64) -> f64 {
    p[0] + x * (p[1] + x * p[2])
}

fn roots_in_unit(p: &[f64; 3]) -> Vec<f64> {
    let [c0, c1, c2] = *p;
    let scale = c0.abs().max(c1.abs()).max(c2.abs());
    let mut out = Vec::new();
    if scale == 0.0 {
        return out;
    }
    if c2.abs() <= 1e-14 * scale {
        if c1.abs() > 1e-14 * scale {
            out.push(-c0 / c1);
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // numerically stable pair
            let q = -0.5 * (c1 + c1.signum() * sq);
            if q != 0.0 {
                out.push(q / c2);
                out.push(c0 / q);
            } else {
                out.push(0.0);
            }
        }
    }
    out.retain(|r| r.is_finite() && *r > 0.0 && *r < 1.0);
    out.sort_by(f64::total_cmp);
    out
}

/// Exact analysis of the qubit condition in the variable
/// `p = 1/(1+t) ∈ [0, 1]`. Returns `(margin, argmin p)` where the margin is
/// the minimum of `d_σ(p) − d_ρ(p)` over the closure of `{d_σ < 0}`, with
/// `d(p) = det(p X₁ − (1−p) X₂)`.
fn qubit_exact(r1: &CMatrix, r2: &CMatrix, s1: &CMatrix, s2: &CMatrix) -> (f64, f64) {
    let dr = det_poly(r1, r2);
    let ds = det_poly(s1, s2);
    let g = [ds[0] - dr[0], ds[1] - dr[1], ds[2] - dr[2]];
    let mut cuts = vec![0.0];
    cuts.extend(roots_in_unit(&ds));
    cuts.push(1.0);
    let mut best = (f64::INFINITY, f64::NAN);
    for w in cuts.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l || eval(&ds, 0.5 * (l + r)) >= 0.0 {
            continue;
        }
        let mut cands = vec![l, r];
        if g[2] != 0.0 {
            let v = -g[1] / (2.0 * g[2]);
            if v > l && v < r {
                cands.push(v);
            }
        }
        for x in cands {
            let val = eval(&g, x);
            if val < best.0 {
                best = (val, x);
            }
        }
    }
    best
}

/// Grid scan of `‖σ₁ − tσ₂‖₁ − ‖ρ₁ − tρ₂‖₁` on `t = u/(1−u)` for 1000 values
/// of `u ∈ [0, 1)`; returns the worst `(t, excess)` when some grid point
/// violates the condition by more than `1e-9 (1 + t)`.
pub fn qubit_grid_scan(r1: &DensityMatrix, r2: &DensityMatrix, s1: &DensityMatrix, s2: &DensityMatrix) -> Option<(f64, f64)> {
    let mut worst: Option<(f64, f64)> = None;
    for k in 0..GRID_POINTS {
        let u = k as f64 / GRID_POINTS as f64;
        let t = u / (1.0 - u);
        let ns = trace_norm_2x2(&(s1.matrix() - s2.matrix() * c(t, 0.0)));
        let nr = trace_norm_2x2(&(r1.matrix() - r2.matrix() * c(t, 0.0)));
        let excess = ns - nr;
        if excess > 1e-9 * (1.0 + t) && worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((t, excess));
        }
    }
    worst
}

/// Qubit pair `ρ₁, ρ₂ → σ₁, σ₂`: feasible iff `‖σ₁ − tσ₂‖₁ ≤ ‖ρ₁ − tρ₂‖₁`
/// for all `t ≥ 0`, decided by root-interval analysis of the 2×2
/// determinants. Feasible decisions carry a Choi witness when the oracle
/// finds one.
pub fn check_qubit_pair(
    rho1: &DensityMatrix,
    rho2: &DensityMatrix,
    sigma1: &DensityMatrix,
    sigma2: &DensityMatrix,
) -> Result<Decision> {
    for s in [rho1, rho2, sigma1, sigma2] {
        if s.dim() != 2 {
            return Err(Error::WrongDimension {
                expected: 2,
                found: s.dim(),
            });
        }
    }
    let (margin, p) = qubit_exact(rho1.matrix(), rho2.matrix(), sigma1.matrix(), sigma2.matrix());
    let grid = qubit_grid_scan(rho1, rho2, sigma1, sigma2);
    let mut d = if margin >= -QUBIT_TOL {
        let a = StateSet::from_densities(vec![rho1.clone(), rho2.clone()])?;
        let b = StateSet::from_densities(vec![sigma1.clone(), sigma2.clone()])?;
        let oracle = choi_oracle(&a, &b)?;
        let witness = match oracle.witness {
            Some(Witness::Choi(j)) => Some(Witness::Choi(j)),
            _ => None,
        };
        let mut d = Decision::new(Verdict::Feasible, Method::QubitPair, witness, margin);
        if d.witness.is_none() {
            d.notes.push(format!("no channel constructed: oracle {}", oracle.verdict.as_str()));
        }
        d
    } else {
        let p = p.max(1e-9);
        let t = (1.0 - p) / p;
        let w = Witness::ViolatingParameter {
            t,
            source_norm: trace_norm_2x2(&(rho1.matrix() - rho2.matrix() * c(t, 0.0))),
            target_norm: trace_norm_2x2(&(sigma1.matrix() - sigma2.matrix() * c(t, 0.0))),
        };
        Decision::new(Verdict::Infeasible, Method::QubitPair, Some(w), margin)
    };
    if let Some((t, excess)) = grid {
        if d.verdict == Verdict::Feasible {
            d.notes.push(format!("grid cross-check disagrees: violation {excess:.3e} at t = {t:.6e}"));
        }
    }
    Ok(d)
}

/// Whether the grid cross-check contradicts the exact qubit analysis.
pub fn qubit_grid_contradicts(d: &Decision) -> bool {
    d.notes.iter().any(|n| n.starts_with("grid cross-check disagrees"))
}

/// Minimum error probability `½(1 − ‖p₁τ₁ − p₂τ₂‖₁)` of telling two states
/// apart.
pub fn helstrom(p1: f64, tau1: &DensityMatrix, p2: f64, tau2: &DensityMatrix) -> Result<f64> {
    let bad = !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) || (p1 + p2 - 1.0).abs() > PRIOR_TOL;
    if bad || !p1.is_finite() || !p2.is_finite() {
        return Err(Error::BadPriors { p1, p2 });
    }
    if tau1.dim() != tau2.dim() {
        return Err(Error::DimensionMismatch {
            expected: tau1.dim(),
            found: tau2.dim(),
        });
    }
    let diff = tau1.matrix() * c(p1, 0.0) - tau2.matrix() * c(p2, 0.0);
    let n = matcore::trace_norm(&hermitian_part(&diff))?;
    Ok((0.5 * (1.0 - n)).clamp(0.0, 0.5))
}

/// Multi-probabilistic transformation of pure sources into target family
/// `j` with probabilities `P_i^j`.
pub fn check_multiprob(a: &StateSet, targets: &[StateSet], probs: &ProbabilityMatrix, mode: Mode) -> Result<Decision> {
    let ak = a.kets()?;
    let mut gbs = Vec::with_capacity(targets.len());
    for t in targets {
        same_size(a, t)?;
        gbs.push(gram_from_kets(&t.kets()?)?);
    }
    let ga = gram_from_kets(&ak)?;
    let out = hadamard_sum_feasibility(&ga, &gbs, probs, mode)?;
    let witness = out.witness.clone().map(Witness::HadamardFamily);
    Ok(Decision::from_outcome(out, Method::Multiprob, witness))
}

/// Mixed sources, pure targets, using the spectral decomposition of each
/// source.
pub fn check_mixed_to_pure(a: &StateSet, b: &StateSet) -> Result<Decision> {
    same_size(a, b)?;
    let decomps: Vec<Vec<Ket>> = a
        .members()
        .iter()
        .map(|m| match &m.ket {
            Some(k) => vec![k.clone()],
            None => eigendecompose_to_pure(&m.density, DECOMPOSITION_TOL)
                .into_iter()
                .map(|(_, k)| k)
                .collect(),
        })
        .collect();
    check_mixed_to_pure_with(&decomps, b)
}

/// Same as [`check_mixed_to_pure`] with caller-supplied pure-state
/// decompositions (`decomps[i]` spans the support of source `i`).
pub fn check_mixed_to_pure_with(decomps: &[Vec<Ket>], b: &StateSet) -> Result<Decision> {
    if decomps.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: decomps.len(),
            right: b.len(),
        });
    }
    let bk = target_kets(b)?;
    let mut kets = Vec::new();
    let mut origin = Vec::new();
    let mut targets = Vec::new();
    for (i, d) in decomps.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::Empty("source decomposition"));
        }
        for k in d {
            kets.push(k.clone());
            origin.push(i);
            targets.push(bk[i].clone());
        }
    }
    let mut d = pure_to_pure_kets(&kets, &targets, Method::MixedToPure)?;
    if let Some(Witness::Completion(m)) = d.witness.take() {
        d.witness = Some(Witness::Expansion { kets, origin, m });
    }
    Ok(d)
}

/// Pure sources, arbitrary targets, decided by the Choi oracle. Feasible
/// decisions carry an instrument whose outcomes give pure decompositions of
/// every target.
pub fn check_pure_to_mixed(a: &StateSet, b: &StateSet) -> Result<Decision> {
    same_size(a, b)?;
    source_kets(a)?;
    let mut d = choi_oracle(a, b)?;
    d.method = Method::PureToMixed;
    if let Some(Witness::Choi(j)) = d.witness.take() {
        match instrument_from_choi(a, b, &j) {
            Ok((instrument, decompositions)) => {
                d.witness = Some(Witness::PureToMixed {
                    choi: j,
                    instrument,
                    decompositions,
                })
            }
            Err(e) => {
                d.verdict = Verdict::Indeterminate;
                d.notes.push(format!("instrument extraction failed: {e}"));
            }
        }
    }
    Ok(d)
}

/// Semidefinite feasibility of a Choi matrix `J ⪰ 0` with `tr_out J = I` and
/// `T_J(ρ_i) = σ_i`, the latter imposed entrywise in the eigenbasis of each
/// `σ_i`.
pub fn choi_problem(a: &StateSet, b: &StateSet) -> Result<AffinePsdProblem> {
    same_size(a, b)?;
    let (d_in, d_out) = (a.dim(), b.dim());
    let mut prob = AffinePsdProblem::single(d_in * d_out);
    for k in 0..d_in {
        for l in k..d_in {
            // tr[(|l⟩⟨k| ⊗ I) J] = Σ_a J[(k,a),(l,a)]
            let f = matcore::kron(&matcore::outer(&matcore::basis(d_in, l), &matcore::basis(d_in, k)), &matcore::identity(d_out));
            if k == l {
                prob.add_eq(vec![(0, f)], 1.0);
            } else {
                prob.add_complex_eq(vec![(0, f)], matcore::ZERO);
            }
        }
    }
    for (src, tgt) in a.members().iter().zip(b.members()) {
        let rho_t = src.density.matrix().transpose();
        let e = eigh_unchecked(tgt.density.matrix());
        for p in 0..d_out {
            let vp = e.vectors.column(p).into_owned();
            for q in p..d_out {
                let vq = e.vectors.column(q).into_owned();
                // ⟨v_p|T(ρ)|v_q⟩ = tr[(ρᵀ ⊗ |v_q⟩⟨v_p|) J]
                let f = matcore::kron(&rho_t, &matcore::outer(&vq, &vp));
                if p == q {
                    let lam = e.values[p];
                    let rhs = if lam.abs() < ZERO_EIGENVALUE { 0.0 } else { lam };
                    prob.add_eq(vec![(0, hermitian_part(&f))], rhs);
                } else {
                    prob.add_complex_eq(vec![(0, f)], matcore::ZERO);
                }
            }
        }
    }
    Ok(prob)
}

/// General oracle: searches for a channel directly over its Choi matrix.
pub fn choi_oracle(a: &StateSet, b: &StateSet) -> Result<Decision> {
    let prob = choi_problem(a, b)?;
    let (d_in, d_out) = (a.dim(), b.dim());
    let out = affine_psd_feasibility(&prob);
    let mut witness = None;
    let mut failure = None;
    if let Some(w) = &out.witness {
        match ChoiMatrix::from_approximate(d_in, d_out, &w[0]) {
            Ok(j) => {
                let worst = a
                    .members()
                    .iter()
                    .zip(b.members())
                    .map(|(s, t)| {
                        let diff = hermitian_part(&(j.apply(s.density.matrix()) - t.density.matrix()));
                        matcore::trace_norm(&diff).unwrap_or(f64::INFINITY)
                    })
                    .fold(0.0, f64::max);
                if worst <= WITNESS_CHECK_TOL {
                    witness = Some(Witness::Choi(j));
                } else {
                    failure = Some(format!("cleaned Choi witness misses targets by {worst:.3e}"));
                }
            }
            Err(e) => failure = Some(format!("Choi witness rejected: {e}")),
        }
    }
    let mut d = Decision::from_outcome(out, Method::Choi, witness);
    if let Some(msg) = failure {
        d.verdict = Verdict::Indeterminate;
        d.witness = None;
        d.notes.push(msg);
    }
    Ok(d)
}

/// Transformations in both directions (the reverse one onto a permutation
/// of the sources) imply unitary equivalence.
pub fn mutual_check(a: &StateSet, b: &StateSet, perm: &[usize]) -> Result<Decision> {
    let n = same_size(a, b)?;
    let mut sorted = perm.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidState("not a permutation of the indices".into()));
    }
    let ak = a.kets()?;
    let bk = b.kets()?;
    let forward = check_pure_to_pure(a, b)?;
    let backward = check_pure_to_pure(b, &a.permuted(perm))?;
    let margin = forward.margin.min(backward.margin);
    let mut d = match (forward.verdict, backward.verdict) {
        (Verdict::Infeasible, _) | (_, Verdict::Infeasible) => {
            let (dir, w) = if forward.verdict == Verdict::Infeasible {
                ("forward", forward.witness)
            } else {
                ("reverse", backward.witness)
            };
            let mut d = Decision::new(Verdict::Infeasible, Method::UnitaryEquivalence, w, margin);
            d.notes.push(format!("{dir} transformation infeasible"));
            d
        }
        (Verdict::Feasible, Verdict::Feasible) => {
            let ga = gram_from_kets(&ak)?;
            let gb = gram_from_kets(&bk)?;
            match gram_equivalent(&ga, &gb) {
                Some(ph) => Decision::new(Verdict::Feasible, Method::UnitaryEquivalence, Some(Witness::Phases(ph)), margin),
                None => {
                    let mut d = Decision::new(Verdict::Indeterminate, Method::UnitaryEquivalence, None, margin);
                    d.notes.push("both directions feasible but Gram matrices not phase related".into());
                    d
                }
            }
        }
        _ => Decision::new(Verdict::Indeterminate, Method::UnitaryEquivalence, None, margin),
    };
    d.notes.extend(forward.notes.into_iter().map(|s| format!("forward: {s}")));
    d.notes.extend(backward.notes.into_iter().map(|s| format!("reverse: {s}")));
    Ok(d)
}

/// Method chosen for an instance when none is requested.
pub fn auto_method(a: &StateSet, b: &StateSet) -> Method {
    let n = a.len();
    if a.all_pure() && b.all_pure() {
        if n == 2 {
            Method::PurePair
        } else {
            Method::PureToPure
        }
    } else if a.all_pure() && n == 2 {
        Method::PurePair
    } else if n == 2 && a.dim() == 2 && b.dim() == 2 {
        Method::QubitPair
    } else if b.all_pure() {
        Method::MixedToPure
    } else if a.all_pure() {
        Method::PureToMixed
    } else {
        Method::Choi
    }
}

/// Runs `method` on a source/target pair. Multiprob needs its own entry
/// point and is rejected here.
pub fn check_with(method: Method, a: &StateSet, b: &StateSet) -> Result<Decision> {
    match method {
        Method::FidelityNecessary => fidelity_necessary(a, b),
        Method::PurePair => check_pure_pair(a, b),
        Method::PureToPure => check_pure_to_pure(a, b),
        Method::QubitPair => {
            same_size(a, b)?;
            if a.len() != 2 {
                return Err(Error::SizeMismatch { left: 2, right: a.len() });
            }
            let (r, s) = (a.members(), b.members());
            check_qubit_pair(&r[0].density, &r[1].density, &s[0].density, &s[1].density)
        }
        Method::MixedToPure => check_mixed_to_pure(a, b),
        Method::PureToMixed => check_pure_to_mixed(a, b),
        Method::Choi => choi_oracle(a, b),
        Method::UnitaryEquivalence => mutual_check(a, b, &(0..a.len()).collect::<Vec<_>>()),
        Method::Multiprob => Err(Error::InvalidState("multiprob needs target families and probabilities".into())),
    }
}

/// An explicit channel realizing a Feasible decision, when its witness
/// determines one.
pub fn realize_channel(d: &Decision, a: &StateSet, b: &StateSet) -> Result<Option<KrausChannel>> {
    if d.verdict != Verdict::Feasible {
        return Ok(None);
    }
    let Some(w) = &d.witness else { return Ok(None) };
    let ch = match w {
        Witness::Completion(m) => isometry_from_gram_witness(&a.kets()?, &b.kets()?, m)?.channel()?,
        Witness::Expansion { kets, origin, m } => {
            let bk = b.kets()?;
            let targets: Vec<Ket> = origin.iter().map(|&i| bk[i].clone()).collect();
            isometry_from_gram_witness(kets, &targets, m)?.channel()?
        }
        Witness::PurifiedPair { purifications, m } => {
            let d_out = b.dim();
            let wide = isometry_from_gram_witness(&a.kets()?, purifications, m)?.channel()?;
            // trace out the purifying factor (second of the two d_out factors)
            let mut ops = Vec::new();
            for op in wide.operators() {
                for anc in 0..d_out {
                    ops.push(CMatrix::from_fn(d_out, op.ncols(), |s, k| op[(s * d_out + anc, k)]));
                }
            }
            KrausChannel::new(a.dim(), d_out, ops)?
        }
        Witness::Choi(j) | Witness::PureToMixed { choi: j, .. } => kraus_from_choi(j)?,
        Witness::Phases(ph) => {
            // G_A = conj(K) ∘ G_B with K the phase matrix of G_B = G_A ∘ K
            let m = ph.phase_matrix().map(|z| z.conj());
            isometry_from_gram_witness(&a.kets()?, &b.kets()?, &m)?.channel()?
        }
        _ => return Ok(None),
    };
    Ok(Some(ch))
}

/// Instrument realizing a Feasible multiprob decision.
pub fn realize_instrument(
    d: &Decision,
    a: &StateSet,
    targets: &[StateSet],
    probs: &ProbabilityMatrix,
    mode: Mode,
) -> Result<Option<Instrument>> {
    match (&d.verdict, &d.witness) {
        (Verdict::Feasible, Some(Witness::HadamardFamily(pis))) => {
            let fams: Vec<Vec<Ket>> = targets.iter().map(|t| t.kets()).collect::<Result<_>>()?;
            Ok(Some(channelkit::instrument_from_witness(&a.kets()?, &fams, probs, pis, mode)?))
        }
        (Verdict::Feasible, Some(Witness::PureToMixed { instrument, .. })) => Ok(Some(instrument.clone())),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelkit::{apply_channel, verify_channel, verify_instrument};
    use crate::random::{feasible_sources, random_decomposition, random_density, random_density_rank, random_ket, random_unitary, apply_unitary};
    use crate::stateset::ket;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kets_set(k: &[Ket]) -> StateSet {
        StateSet::from_kets(k.to_vec()).unwrap()
    }

    fn dens_set(d: &[DensityMatrix]) -> StateSet {
        StateSet::from_densities(d.to_vec()).unwrap()
    }

    fn diag2(a: f64, b: f64) -> DensityMatrix {
        DensityMatrix::new(CMatrix::from_row_slice(2, 2, &[c(a, 0.0), matcore::ZERO, matcore::ZERO, c(b, 0.0)])).unwrap()
    }

    fn overlap_ket(o: f64) -> Ket {
        ket(&[(o, 0.0), ((1.0 - o * o).sqrt(), 0.0)]).unwrap()
    }

    #[test]
    fn fidelity_necessary_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = kets_set(&[random_ket(3, &mut rng), random_ket(3, &mut rng)]);
        assert_eq!(fidelity_necessary(&a, &a).unwrap().verdict, Verdict::Indeterminate);
        let orth = kets_set(&[Ket::basis(2, 0), Ket::basis(2, 1)]);
        let same = kets_set(&[Ket::basis(2, 0), Ket::basis(2, 0)]);
        assert_eq!(fidelity_necessary(&orth, &same).unwrap().verdict, Verdict::Indeterminate);
        let close = kets_set(&[Ket::basis(2, 0), overlap_ket(0.9)]);
        let d = fidelity_necessary(&close, &orth).unwrap();
        assert_eq!(d.verdict, Verdict::Infeasible);
        assert!(matches!(d.witness, Some(Witness::ViolatingPair { i: 0, j: 1, .. })));
    }

    #[test]
    fn pure_pair_examples() {
        let a = kets_set(&[Ket::basis(2, 0), overlap_ket(0.8)]);
        let b = kets_set(&[Ket::basis(2, 0), overlap_ket(0.9)]);
        assert_eq!(check_pure_pair(&a, &b).unwrap().verdict, Verdict::Feasible);
        assert_eq!(check_pure_pair(&b, &a).unwrap().verdict, Verdict::Infeasible);
        let d = check_pure_pair(&a, &a).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        assert!(d.is_boundary());
        let mixed = dens_set(&[diag2(0.7, 0.3), diag2(0.3, 0.7)]);
        assert!(check_pure_pair(&mixed, &a).is_err());
    }

    #[test]
    fn pure_pair_channels_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut built = 0;
        for _ in 0..60 {
            let a = kets_set(&[random_ket(2, &mut rng), random_ket(2, &mut rng)]);
            let b = dens_set(&[random_density_rank(2, 1 + rng.random_range(0..2), &mut rng), random_density(2, &mut rng)]);
            let d = check_pure_pair(&a, &b).unwrap();
            if d.verdict == Verdict::Feasible {
                let ch = realize_channel(&d, &a, &b).unwrap().unwrap();
                let rep = verify_channel(&ch, &a, &b, 1e-6);
                assert!(rep.passed, "{rep:?}");
                built += 1;
            }
        }
        assert!(built > 5);
    }

    #[test]
    fn pure_to_pure_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = kets_set(&(0..3).map(|_| random_ket(3, &mut rng)).collect::<Vec<_>>());
        let d = check_pure_to_pure(&a, &a).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        let Some(Witness::Completion(m)) = &d.witness else { panic!() };
        assert!((m - CMatrix::from_element(3, 3, matcore::ONE)).norm() < 1e-12);

        let orth = kets_set(&(0..3).map(|k| Ket::basis(3, k)).collect::<Vec<_>>());
        let b = kets_set(&(0..3).map(|_| random_ket(2, &mut rng)).collect::<Vec<_>>());
        let d = check_pure_to_pure(&orth, &b).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        let Some(Witness::Completion(m)) = &d.witness else { panic!() };
        assert!((m - matcore::identity(3)).norm() < 1e-12);
    }

    #[test]
    fn forced_zero_is_infeasible() {
        let a = kets_set(&[Ket::basis(2, 0), overlap_ket(0.5)]);
        let b = kets_set(&[Ket::basis(2, 0), Ket::basis(2, 1)]);
        let d = check_pure_to_pure(&a, &b).unwrap();
        assert_eq!(d.verdict, Verdict::Infeasible);
        assert!(matches!(d.witness, Some(Witness::ForcedZero { i: 0, j: 1, .. })));
    }

    #[test]
    fn pure_to_pure_agrees_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counted = 0;
        for trial in 0..60 {
            let n = 2 + trial % 3;
            let d = 2 + (trial / 3) % 3;
            let b: Vec<Ket> = (0..n).map(|_| random_ket(d, &mut rng)).collect();
            let a: Vec<Ket> = if trial % 2 == 0 && n <= d {
                feasible_sources(&b, d, n, &mut rng)
            } else {
                (0..n).map(|_| random_ket(d, &mut rng)).collect()
            };
            let (sa, sb) = (kets_set(&a), kets_set(&b));
            let p = check_pure_to_pure(&sa, &sb).unwrap();
            let o = choi_oracle(&sa, &sb).unwrap();
            if p.is_boundary() || p.verdict == Verdict::Indeterminate || o.verdict == Verdict::Indeterminate {
                continue;
            }
            assert_eq!(p.verdict, o.verdict, "trial {trial}: {p:?} vs {o:?}");
            counted += 1;
            if p.is_feasible() {
                let ch = realize_channel(&p, &sa, &sb).unwrap().unwrap();
                assert!(verify_channel(&ch, &sa, &sb, 1e-6).passed);
                let cj = realize_channel(&o, &sa, &sb).unwrap().unwrap();
                assert!(verify_channel(&cj, &sa, &sb, 1e-6).passed);
            }
        }
        assert!(counted > 30);
    }

    #[test]
    fn qubit_pair_examples() {
        let r1 = diag2(0.8, 0.2);
        let r2 = diag2(0.3, 0.7);
        assert_eq!(check_qubit_pair(&r1, &r2, &r1, &r2).unwrap().verdict, Verdict::Feasible);
        let half = DensityMatrix::maximally_mixed(2);
        let d = check_qubit_pair(&half, &half, &diag2(1.0, 0.0), &diag2(0.0, 1.0)).unwrap();
        assert_eq!(d.verdict, Verdict::Infeasible);
        let Some(Witness::ViolatingParameter { source_norm, target_norm, .. }) = d.witness else { panic!() };
        assert!(target_norm > source_norm);
        let d = check_qubit_pair(&diag2(1.0, 0.0), &diag2(0.0, 1.0), &half, &half).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        assert!(check_qubit_pair(&r1, &r2, &r1, &DensityMatrix::maximally_mixed(3)).is_err());
    }

    #[test]
    fn qubit_pair_agrees_with_oracle_and_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counted = 0;
        let mut feasible = 0;
        for _ in 0..80 {
            let r1 = random_density(2, &mut rng);
            let r2 = random_density(2, &mut rng);
            let (s1, s2) = if rng.random_bool(0.5) {
                // images under a random channel are always reachable
                let u = random_unitary(2, &mut rng);
                let mix = rng.random_range(0.0..1.0);
                let f = |r: &DensityMatrix| {
                    let m = &u * r.matrix() * u.adjoint() * c(1.0 - mix, 0.0) + matcore::identity(2) * c(0.5 * mix, 0.0);
                    DensityMatrix::new(m).unwrap()
                };
                (f(&r1), f(&r2))
            } else {
                (random_density(2, &mut rng), random_density(2, &mut rng))
            };
            let d = check_qubit_pair(&r1, &r2, &s1, &s2).unwrap();
            assert!(!qubit_grid_contradicts(&d));
            let o = choi_oracle(&dens_set(&[r1, r2]), &dens_set(&[s1, s2])).unwrap();
            if d.is_boundary() || o.verdict == Verdict::Indeterminate {
                continue;
            }
            assert_eq!(d.verdict, o.verdict, "{d:?} {o:?}");
            counted += 1;
            feasible += usize::from(d.is_feasible());
        }
        assert!(counted > 50 && feasible > 10);
    }

    #[test]
    fn helstrom_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_density(3, &mut rng);
        assert_abs_diff_eq!(helstrom(0.3, &t, 0.7, &t).unwrap(), 0.3, epsilon = 1e-12);
        let z = Ket::basis(2, 0).density();
        let o = Ket::basis(2, 1).density();
        assert_abs_diff_eq!(helstrom(0.5, &z, 0.5, &o).unwrap(), 0.0, epsilon = 1e-12);
        let plus = ket(&[(1.0, 0.0), (1.0, 0.0)]).unwrap().density();
        assert_abs_diff_eq!(helstrom(0.5, &z, 0.5, &plus).unwrap(), (1.0 - 0.5f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert!(helstrom(0.5, &z, 0.6, &o).is_err());
        assert!(helstrom(-0.1, &z, 1.1, &o).is_err());
    }

    #[test]
    fn multiprob_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = kets_set(&(0..3).map(|_| random_ket(3, &mut rng)).collect::<Vec<_>>());
            let b = kets_set(&(0..3).map(|_| random_ket(3, &mut rng)).collect::<Vec<_>>());
            let ones = ProbabilityMatrix::uniform(3, 1, 1.0).unwrap();
            let mp = check_multiprob(&a, &[b.clone()], &ones, Mode::Exact).unwrap();
            let pp = check_pure_to_pure(&a, &b).unwrap();
            if !pp.is_boundary() && mp.verdict != Verdict::Indeterminate {
                assert_eq!(mp.verdict, pp.verdict);
            }
            let q = rng.random_range(0.0..0.5);
            let p = ProbabilityMatrix::uniform(3, 1, q).unwrap();
            let split = ProbabilityMatrix::new(vec![vec![0.4 * q, 0.6 * q]; 3]).unwrap();
            let one = check_multiprob(&a, &[b.clone()], &p, Mode::Subnormalized).unwrap();
            let two = check_multiprob(&a, &[b.clone(), b.clone()], &split, Mode::Subnormalized).unwrap();
            if one.verdict != Verdict::Indeterminate && two.verdict != Verdict::Indeterminate && !one.is_boundary() {
                assert_eq!(one.verdict, two.verdict);
            }
            if one.is_feasible() {
                let inst = realize_instrument(&one, &a, &[b.clone()], &p, Mode::Subnormalized).unwrap().unwrap();
                assert!(verify_instrument(&inst, &a, &[b.clone()], &p, 1e-6).passed);
            }
        }
    }

    #[test]
    fn unambiguous_threshold() {
        let a = kets_set(&[Ket::basis(2, 0), overlap_ket(0.9)]);
        let b = kets_set(&[Ket::basis(2, 0), Ket::basis(2, 1)]);
        let at = |p: f64| {
            check_multiprob(&a, &[b.clone()], &ProbabilityMatrix::uniform(2, 1, p).unwrap(), Mode::Subnormalized)
                .unwrap()
                .verdict
        };
        assert_eq!(at(0.1), Verdict::Feasible);
        assert_eq!(at(0.11), Verdict::Infeasible);
    }

    #[test]
    fn mixed_to_pure_examples() {
        let half = DensityMatrix::maximally_mixed(2);
        let d = check_mixed_to_pure(&dens_set(&[half.clone()]), &kets_set(&[Ket::basis(3, 1)])).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        // both supports contain |0⟩ but the targets differ
        let r1 = diag2(0.5, 0.5);
        let r2 = diag2(1.0, 0.0);
        let a = dens_set(&[r1, r2]);
        let b = kets_set(&[Ket::basis(2, 0), overlap_ket(0.5)]);
        let d = check_mixed_to_pure(&a, &b).unwrap();
        assert_eq!(d.verdict, Verdict::Infeasible);
        assert_eq!(choi_oracle(&a, &b).unwrap().verdict, Verdict::Infeasible);
        assert!(check_mixed_to_pure(&a, &a).is_err());
    }

    #[test]
    fn mixed_to_pure_is_decomposition_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut decided = 0;
        for _ in 0..15 {
            let sources: Vec<DensityMatrix> = (0..2).map(|_| random_density_rank(4, 2, &mut rng)).collect();
            let b = kets_set(&[random_ket(3, &mut rng), random_ket(3, &mut rng)]);
            let a = dens_set(&sources);
            let base = check_mixed_to_pure(&a, &b).unwrap();
            for _ in 0..5 {
                let decomps: Vec<Vec<Ket>> = sources
                    .iter()
                    .map(|r| random_decomposition(r, 3, &mut rng).into_iter().map(|(_, k)| k).collect())
                    .collect();
                let d = check_mixed_to_pure_with(&decomps, &b).unwrap();
                if base.verdict != Verdict::Indeterminate && d.verdict != Verdict::Indeterminate {
                    assert_eq!(d.verdict, base.verdict);
                }
            }
            if base.is_feasible() {
                let ch = realize_channel(&base, &a, &b).unwrap().unwrap();
                assert!(verify_channel(&ch, &a, &b, 1e-6).passed);
            }
            decided += usize::from(base.verdict != Verdict::Indeterminate);
        }
        assert!(decided > 10);
    }

    #[test]
    fn pure_to_mixed_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = kets_set(&(0..3).map(|_| random_ket(3, &mut rng)).collect::<Vec<_>>());
        let mm = DensityMatrix::maximally_mixed(3);
        let b = dens_set(&[mm.clone(), mm.clone(), mm]);
        let d = check_pure_to_mixed(&a, &b).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible, "{d:?}");
        let Some(Witness::PureToMixed { decompositions, .. }) = &d.witness else { panic!() };
        assert_eq!(decompositions.len(), 3);
        let ch = realize_channel(&d, &a, &b).unwrap().unwrap();
        assert!(verify_channel(&ch, &a, &b, 1e-6).passed);
    }

    #[test]
    fn pure_to_mixed_matches_pure_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut counted = 0;
        for _ in 0..40 {
            let a = kets_set(&[random_ket(2, &mut rng), random_ket(2, &mut rng)]);
            let b = dens_set(&[random_density(2, &mut rng), random_density(2, &mut rng)]);
            let pp = check_pure_pair(&a, &b).unwrap();
            let pm = check_pure_to_mixed(&a, &b).unwrap();
            if pp.is_boundary() || pm.verdict == Verdict::Indeterminate {
                continue;
            }
            assert_eq!(pp.verdict, pm.verdict);
            counted += 1;
        }
        assert!(counted > 25);
    }

    #[test]
    fn choi_oracle_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = dens_set(&[random_density(3, &mut rng)]);
        let b = dens_set(&[random_density(2, &mut rng)]);
        assert_eq!(choi_oracle(&a, &b).unwrap().verdict, Verdict::Feasible);
        let basis = kets_set(&(0..3).map(|k| Ket::basis(3, k)).collect::<Vec<_>>());
        let d = choi_oracle(&basis, &basis).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        let Some(Witness::Choi(j)) = &d.witness else { panic!() };
        for k in 0..3 {
            let p = Ket::basis(3, k).projector();
            assert!((j.apply(&p) - &p).norm() < 1e-6);
        }
        // the identity channel is one of the admissible points
        let id = channelkit::choi_of(&KrausChannel::identity(3));
        let prob = choi_problem(&basis, &basis).unwrap();
        assert!(prob.residual(&[id.matrix().clone()]) < 1e-12);
    }

    #[test]
    fn mutual_check_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ak: Vec<Ket> = (0..3).map(|_| random_ket(3, &mut rng)).collect();
        let a = kets_set(&ak);
        let d = mutual_check(&a, &a, &[0, 1, 2]).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        let Some(Witness::Phases(ph)) = &d.witness else { panic!() };
        assert!(ph.thetas.iter().all(|t| t.abs() < 1e-9));

        let u = random_unitary(3, &mut rng);
        let thetas = [0.3, -1.1, 2.0];
        let bk: Vec<Ket> = ak.iter().zip(thetas).map(|(k, t)| apply_unitary(&u, &k.with_phase(t))).collect();
        let b = kets_set(&bk);
        let d = mutual_check(&a, &b, &[0, 1, 2]).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        let Some(Witness::Phases(ph)) = &d.witness else { panic!() };
        let ga = gram_from_kets(&ak).unwrap();
        let gb = gram_from_kets(&bk).unwrap();
        assert!(ph.relates(&ga, &gb, 1e-8));
        let ch = realize_channel(&d, &a, &b).unwrap().unwrap();
        assert!(verify_channel(&ch, &a, &b, 1e-6).passed);

        let c2 = kets_set(&[Ket::basis(2, 0), overlap_ket(0.5), overlap_ket(0.2)]);
        let c3 = kets_set(&[Ket::basis(2, 0), overlap_ket(0.6), overlap_ket(0.2)]);
        assert_eq!(mutual_check(&c2, &c3, &[0, 1, 2]).unwrap().verdict, Verdict::Infeasible);
        assert!(mutual_check(&a, &a, &[0, 0, 1]).is_err());
    }

    #[test]
    fn reflexive_and_permutation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let a = kets_set(&(0..3).map(|_| random_ket(3, &mut rng)).collect::<Vec<_>>());
            let b = kets_set(&(0..3).map(|_| random_ket(3, &mut rng)).collect::<Vec<_>>());
            for m in [Method::PureToPure, Method::MixedToPure, Method::PureToMixed, Method::Choi] {
                assert_eq!(check_with(m, &a, &a).unwrap().verdict, Verdict::Feasible, "{m:?}");
            }
            let perm = [2, 0, 1];
            let d1 = check_pure_to_pure(&a, &b).unwrap();
            let d2 = check_pure_to_pure(&a.permuted(&perm), &b.permuted(&perm)).unwrap();
            assert_eq!(d1.verdict, d2.verdict);
            assert_abs_diff_eq!(d1.margin, d2.margin, epsilon = 1e-9);
        }
        let r = dens_set(&[random_density(2, &mut rng), random_density(2, &mut rng)]);
        assert_eq!(check_with(Method::QubitPair, &r, &r).unwrap().verdict, Verdict::Feasible);
    }

    #[test]
    fn feasible_channels_never_decrease_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..5 {
            let b: Vec<Ket> = (0..3).map(|_| random_ket(2, &mut rng)).collect();
            let a = feasible_sources(&b, 3, 3, &mut rng);
            let (sa, sb) = (kets_set(&a), kets_set(&b));
            let d = check_pure_to_pure(&sa, &sb).unwrap();
            assert_eq!(d.verdict, Verdict::Feasible);
            let ch = realize_channel(&d, &sa, &sb).unwrap().unwrap();
            for _ in 0..100 {
                let r = random_density(3, &mut rng);
                let w = random_density(3, &mut rng);
                let f0 = r.fidelity(&w).unwrap();
                let f1 = apply_channel(&ch, &r).unwrap().fidelity(&apply_channel(&ch, &w).unwrap()).unwrap();
                assert!(f1 >= f0 - 1e-7);
            }
        }
    }

    #[test]
    fn auto_method_selection() {
        let p2 = kets_set(&[Ket::basis(2, 0), Ket::basis(2, 1)]);
        let p3 = kets_set(&[Ket::basis(3, 0), Ket::basis(3, 1), Ket::basis(3, 2)]);
        let m2 = dens_set(&[diag2(0.6, 0.4), diag2(0.2, 0.8)]);
        let m3 = dens_set(&vec![DensityMatrix::maximally_mixed(3); 3]);
        assert_eq!(auto_method(&p2, &p2), Method::PurePair);
        assert_eq!(auto_method(&p3, &p3), Method::PureToPure);
        assert_eq!(auto_method(&m2, &m2), Method::QubitPair);
        assert_eq!(auto_method(&m3, &p3), Method::MixedToPure);
        assert_eq!(auto_method(&p3, &m3), Method::PureToMixed);
        assert_eq!(auto_method(&m3, &m3), Method::Choi);
        assert_eq!(Method::from_tag("qubit-pair"), Some(Method::QubitPair));
    }

    fn qubit(p: f64, re: f64, im: f64) -> DensityMatrix {
        DensityMatrix::new(CMatrix::from_row_slice(2, 2, &[c(p, 0.0), c(re, im), c(re, -im), c(1.0 - p, 0.0)])).unwrap()
    }

    #[test]
    fn oracle_finds_thin_interior() {
        // strictly feasible, but the largest λ_min over feasible Choi
        // matrices is only about 1.0e-4 (checked with an external SDP solver)
        let r1 = qubit(0.667774975943524196, -0.179937023808762114, -0.435286371151216711);
        let r2 = qubit(0.139175574147366865, -0.298839804247783558, -0.174643938071906896);
        let s1 = qubit(0.830030609731997826, -0.340721805643623255, 0.157758655981922985);
        let s2 = qubit(0.878284392638948641, -0.0425967325468357763, -0.0852422479871130789);
        let a = dens_set(&[r1.clone(), r2.clone()]);
        let b = dens_set(&[s1.clone(), s2.clone()]);
        assert_eq!(check_qubit_pair(&r1, &r2, &s1, &s2).unwrap().verdict, Verdict::Feasible);
        let d = choi_oracle(&a, &b).unwrap();
        assert_eq!(d.verdict, Verdict::Feasible);
        let ch = realize_channel(&d, &a, &b).unwrap().unwrap();
        assert!(verify_channel(&ch, &a, &b, 1e-6).passed);
    }
}
