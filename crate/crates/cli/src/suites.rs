//! Seeded instance generators and the cross-checks shared by the self-test
//! and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statemorph_core::channelkit::{apply_channel, choi_of, kraus_from_choi, verify_channel, ChannelReport, KrausChannel};
use statemorph_core::decide::{
    check_pure_pair, check_pure_to_pure, check_qubit_pair, choi_oracle, qubit_grid_contradicts, realize_channel,
    Decision, Mode, ProbabilityMatrix, Verdict,
};
use statemorph_core::matcore::{self, CMatrix, CVector};
use statemorph_core::random::{
    apply_unitary, feasible_sources, gaussian_matrix, random_density, random_density_rank, random_ket, random_unitary,
};
use statemorph_core::stateset::{DensityMatrix, Ket, StateSet};

/// Generator for instance `index` of suite `stream`: one ChaCha stream per
/// (suite, instance), so instances are independent of evaluation order.
pub fn instance_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | index);
    rng
}

/// Random channel from a Haar isometry `C^{d_in} → C^{d_out} ⊗ C^{kraus}`.
pub fn random_channel(d_in: usize, d_out: usize, kraus: usize, rng: &mut impl Rng) -> KrausChannel {
    let k = kraus.max(d_in.div_ceil(d_out)).max(1);
    let u = random_unitary(d_out * k, rng);
    let ops = (0..k)
        .map(|e| CMatrix::from_fn(d_out, d_in, |s, col| u[(s * k + e, col)]))
        .collect();
    KrausChannel::new(d_in, d_out, ops).expect("isometry blocks are complete")
}

pub fn image(ch: &KrausChannel, set: &StateSet) -> StateSet {
    let rhos = set
        .members()
        .iter()
        .map(|m| apply_channel(ch, &m.density).expect("dimensions agree"))
        .collect();
    StateSet::from_densities(rhos).expect("images share a dimension")
}

pub fn kets_set(kets: Vec<Ket>) -> StateSet {
    StateSet::from_kets(kets).expect("nonempty family of one dimension")
}

pub fn random_kets(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Ket> {
    (0..n).map(|_| random_ket(d, rng)).collect()
}

pub fn perturbed(k: &Ket, eps: f64, rng: &mut impl Rng) -> Ket {
    let g = gaussian_matrix(k.dim(), 1, rng);
    let v: CVector = k.amplitudes() + g.column(0) * matcore::c(eps, 0.0);
    Ket::new(v).expect("small perturbation keeps the norm positive")
}

/// Pure sources and pure targets, `d ∈ {2,3,4}`, `n ∈ {2,3,4}`: a mix of
/// random, constructively feasible, unitary-image and perturbed instances.
pub fn pure_instance(rng: &mut impl Rng) -> (StateSet, StateSet) {
    let d_a = rng.random_range(2..=4);
    let d_b = rng.random_range(2..=4);
    let n = rng.random_range(2..=4);
    match rng.random_range(0..4) {
        0 => (kets_set(random_kets(n, d_a, rng)), kets_set(random_kets(n, d_b, rng))),
        1 => {
            let n = n.min(d_a);
            let b = random_kets(n, d_b, rng);
            let anc = rng.random_range(n..=4);
            (kets_set(feasible_sources(&b, d_a, anc, rng)), kets_set(b))
        }
        2 => {
            let a = random_kets(n, d_a, rng);
            let u = random_unitary(d_a, rng);
            let b = a
                .iter()
                .map(|k| apply_unitary(&u, k).with_phase(rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            (kets_set(a), kets_set(b))
        }
        _ => {
            let n = n.min(d_a);
            let b = random_kets(n, d_b, rng);
            let a = feasible_sources(&b, d_a, 1, rng);
            let eps = rng.random_range(0.01..0.2);
            let b = b.iter().map(|k| perturbed(k, eps, rng)).collect();
            (kets_set(a), kets_set(b))
        }
    }
}

/// Two pure sources and a target pair that is pure, mixed, a channel image
/// of the sources, or a noisy channel image.
pub fn pure_pair_instance(rng: &mut impl Rng) -> (StateSet, StateSet) {
    let d_a = rng.random_range(2..=4);
    let d_b = rng.random_range(2..=4);
    let a = kets_set(random_kets(2, d_a, rng));
    let b = match rng.random_range(0..4) {
        0 => kets_set(random_kets(2, d_b, rng)),
        1 => {
            let r = rng.random_range(1..=d_b);
            StateSet::from_densities((0..2).map(|_| random_density_rank(d_b, r, rng)).collect()).expect("same dim")
        }
        2 => {
            let k = rng.random_range(1..=3);
            image(&random_channel(d_a, d_b, k, rng), &a)
        }
        _ => {
            let k = rng.random_range(1..=3);
            let img = image(&random_channel(d_a, d_b, k, rng), &a);
            mixed_with_noise(&img, rng.random_range(0.0..0.1), rng)
        }
    };
    (a, b)
}

fn mixed_with_noise(set: &StateSet, eps: f64, rng: &mut impl Rng) -> StateSet {
    let rhos = set
        .members()
        .iter()
        .map(|m| {
            let noise = random_density(set.dim(), rng);
            let mix = m.density.matrix() * matcore::c(1.0 - eps, 0.0) + noise.matrix() * matcore::c(eps, 0.0);
            DensityMatrix::new(matcore::hermitian_part(&mix)).expect("convex mixture is a state")
        })
        .collect();
    StateSet::from_densities(rhos).expect("same dim")
}

/// Qubit pair to qubit pair: random, channel-image and noisy-image targets.
/// Images use Kraus rank at least two; unitary images sit exactly on the
/// boundary.
pub fn qubit_instance(rng: &mut impl Rng) -> (StateSet, StateSet) {
    let a = StateSet::from_densities((0..2).map(|_| random_density_rank(2, rng.random_range(1..=2), rng)).collect())
        .expect("same dim");
    let b = match rng.random_range(0..3) {
        0 => StateSet::from_densities((0..2).map(|_| random_density(2, rng)).collect()).expect("same dim"),
        1 => image(&random_channel(2, 2, rng.random_range(2..=3), rng), &a),
        _ => {
            let img = image(&random_channel(2, 2, rng.random_range(2..=3), rng), &a);
            mixed_with_noise(&img, rng.random_range(0.0..0.15), rng)
        }
    };
    (a, b)
}

/// A multiprob instance: pure sources, pure target families and branch
/// probabilities, mostly subnormalized.
pub struct MultiprobInstance {
    pub sources: StateSet,
    pub families: Vec<StateSet>,
    pub probs: ProbabilityMatrix,
    pub mode: Mode,
}

pub fn multiprob_instance(rng: &mut impl Rng) -> MultiprobInstance {
    let n = rng.random_range(2..=3);
    let d_a = rng.random_range(n..=4);
    let d_b = rng.random_range(2..=3);
    let m = rng.random_range(1..=2);
    let sources = kets_set(random_kets(n, d_a, rng));
    let families = (0..m).map(|_| kets_set(random_kets(n, d_b, rng))).collect();
    let mode = if rng.random_bool(0.25) { Mode::Exact } else { Mode::Subnormalized };
    let scale = match mode {
        Mode::Exact => 1.0,
        Mode::Subnormalized => rng.random_range(0.02..0.6),
    };
    let rows = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s * scale).collect()
        })
        .collect();
    let probs = ProbabilityMatrix::new(rows).expect("rows are subnormalized");
    MultiprobInstance { sources, families, probs, mode }
}

/// Pure sources with mixed targets, usually the image of a random channel.
pub fn pure_to_mixed_instance(rng: &mut impl Rng) -> (StateSet, StateSet) {
    let n = rng.random_range(2..=3);
    let d_a = rng.random_range(2..=3);
    let d_b = rng.random_range(2..=3);
    let a = kets_set(random_kets(n, d_a, rng));
    let b = if rng.random_bool(0.75) {
        image(&random_channel(d_a, d_b, rng.random_range(2..=3), rng), &a)
    } else {
        StateSet::from_densities((0..n).map(|_| random_density(d_b, rng)).collect()).expect("same dim")
    };
    (a, b)
}

/// Outcome of comparing a decision with a reference verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agreement {
    Agree,
    Disagree,
    /// Either side is Indeterminate, the primary margin lies in the boundary
    /// band, or the oracle's infeasibility certificate is that weak.
    Skipped,
}

/// A Feasible oracle verdict carries a validated Choi witness, so only its
/// Infeasible verdicts are discounted near the boundary.
pub fn compare(primary: &Decision, oracle: &Decision) -> Agreement {
    if primary.verdict == Verdict::Indeterminate
        || oracle.verdict == Verdict::Indeterminate
        || primary.is_boundary()
        || (oracle.verdict == Verdict::Infeasible && oracle.is_boundary())
    {
        Agreement::Skipped
    } else if primary.verdict == oracle.verdict {
        Agreement::Agree
    } else {
        Agreement::Disagree
    }
}

/// Largest drop of a pairwise fidelity under `ch` over the source pairs
/// and the extra `probes`; non-positive for a genuine channel, since
/// channels never make states less similar.
pub fn max_fidelity_drop(ch: &KrausChannel, sources: &StateSet, probes: &[(CMatrix, CMatrix)]) -> f64 {
    let ms = sources.members();
    let mut pairs: Vec<(&CMatrix, &CMatrix)> = Vec::new();
    for i in 0..ms.len() {
        for j in (i + 1)..ms.len() {
            pairs.push((ms[i].density.matrix(), ms[j].density.matrix()));
        }
    }
    pairs.extend(probes.iter().map(|(x, y)| (x, y)));
    let fid = |x: &CMatrix, y: &CMatrix| matcore::fidelity(&matcore::hermitian_part(x), &matcore::hermitian_part(y));
    pairs
        .into_iter()
        .map(|(x, y)| match (fid(x, y), fid(&ch.apply_matrix(x), &ch.apply_matrix(y))) {
            (Ok(before), Ok(after)) => before - after,
            _ => f64::INFINITY,
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `count` random state pairs on `C^d` for monotonicity probes.
pub fn probe_pairs(d: usize, count: usize, rng: &mut impl Rng) -> Vec<(CMatrix, CMatrix)> {
    (0..count)
        .map(|_| {
            let r = rng.random_range(1..=d);
            (
                random_density_rank(d, r, rng).into_matrix(),
                random_density_rank(d, r, rng).into_matrix(),
            )
        })
        .collect()
}

/// Verification of a channel built from a Feasible decision.
#[derive(Debug, Clone)]
pub struct Construction {
    pub report: ChannelReport,
    pub fidelity_drop: f64,
}

impl Construction {
    pub fn passed(&self, monotonicity_tol: f64) -> bool {
        self.report.passed && self.fidelity_drop <= monotonicity_tol
    }
}

/// Channel realizing a Feasible decision, falling back to the oracle's Choi
/// matrix when the decision carries no usable witness.
pub fn build_channel(d: &Decision, a: &StateSet, b: &StateSet) -> Result<KrausChannel, String> {
    if let Some(ch) = realize_channel(d, a, b).map_err(|e| e.to_string())? {
        return Ok(ch);
    }
    let o = choi_oracle(a, b).map_err(|e| e.to_string())?;
    realize_channel(&o, a, b)
        .map_err(|e| e.to_string())?
        .ok_or_else(|| format!("no channel could be built ({} from the oracle)", o.verdict.as_str()))
}

/// Builds and verifies the channel behind a Feasible decision, probing
/// fidelity monotonicity on the sources and on `probes`.
pub fn construct(
    d: &Decision,
    a: &StateSet,
    b: &StateSet,
    tol: f64,
    probes: &[(CMatrix, CMatrix)],
) -> Result<Construction, String> {
    let ch = build_channel(d, a, b)?;
    Ok(Construction {
        report: verify_channel(&ch, a, b, tol),
        fidelity_drop: max_fidelity_drop(&ch, a, probes),
    })
}

/// Counts for one self-test suite.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuiteCount {
    pub name: &'static str,
    pub checked: usize,
    pub agreed: usize,
    pub skipped: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub suite: &'static str,
    pub index: usize,
    pub detail: String,
    pub sources: StateSet,
    pub targets: StateSet,
}

/// Tally for one suite, remembering the first failing instance.
#[derive(Debug, Clone)]
pub struct Tally {
    pub count: SuiteCount,
    pub first_failure: Option<Failure>,
}

impl Tally {
    pub fn new(name: &'static str) -> Self {
        Tally {
            count: SuiteCount {
                name,
                ..Default::default()
            },
            first_failure: None,
        }
    }

    pub fn record(&mut self, outcome: Result<Agreement, String>, index: usize, a: &StateSet, b: &StateSet) {
        self.count.checked += 1;
        let detail = match outcome {
            Ok(Agreement::Agree) => {
                self.count.agreed += 1;
                return;
            }
            Ok(Agreement::Skipped) => {
                self.count.skipped += 1;
                return;
            }
            Ok(Agreement::Disagree) => "verdicts disagree".to_string(),
            Err(e) => e,
        };
        self.count.failed += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(Failure {
                suite: self.count.name,
                index,
                detail,
                sources: a.clone(),
                targets: b.clone(),
            });
        }
    }
}

fn describe(tag: &str, d: &Decision) -> String {
    format!("{tag}: {} (margin {:.3e})", d.verdict.as_str(), d.margin)
}

/// Pure-to-pure completion test against the Choi oracle.
pub fn pure_oracle_case(a: &StateSet, b: &StateSet) -> Result<(Agreement, Decision), String> {
    let p = check_pure_to_pure(a, b).map_err(|e| e.to_string())?;
    let o = choi_oracle(a, b).map_err(|e| e.to_string())?;
    match compare(&p, &o) {
        Agreement::Disagree => Err(format!("{}; {}", describe("pure", &p), describe("choi", &o))),
        ag => Ok((ag, p)),
    }
}

/// Root fidelity of two states via singular values of `√ρ √σ`, computed
/// without the library's fidelity routine.
pub fn fidelity_by_svd(rho: &CMatrix, sigma: &CMatrix) -> f64 {
    let sqrt = |m: &CMatrix| {
        let e = m.clone().symmetric_eigen();
        let d = CMatrix::from_diagonal(&e.eigenvalues.map(|v| matcore::c(v.max(0.0).sqrt(), 0.0)));
        &e.eigenvectors * d * e.eigenvectors.adjoint()
    };
    matcore::checked_svd(&(sqrt(rho) * sqrt(sigma)))
        .map(|s| s.singular_values.sum())
        .unwrap_or(f64::NAN)
}

/// Pure-pair closed form against the fidelity sign (band `sign_band`) and
/// against the Choi oracle.
pub fn pure_pair_case(a: &StateSet, b: &StateSet, sign_band: f64) -> Result<(Agreement, Decision), String> {
    let p = check_pure_pair(a, b).map_err(|e| e.to_string())?;
    let (ra, rb) = (a.members(), b.members());
    let gap = fidelity_by_svd(rb[0].density.matrix(), rb[1].density.matrix())
        - fidelity_by_svd(ra[0].density.matrix(), ra[1].density.matrix());
    if gap.abs() > sign_band {
        let expect = if gap > 0.0 { Verdict::Feasible } else { Verdict::Infeasible };
        if p.verdict != expect {
            return Err(format!("{} but fidelity gap {gap:.3e}", describe("pure-pair", &p)));
        }
    }
    let o = choi_oracle(a, b).map_err(|e| e.to_string())?;
    match compare(&p, &o) {
        Agreement::Disagree => Err(format!("{}; {}", describe("pure-pair", &p), describe("choi", &o))),
        ag => Ok((ag, p)),
    }
}

/// Qubit-pair exact analysis against the oracle and its own grid scan.
pub fn qubit_case(a: &StateSet, b: &StateSet) -> Result<(Agreement, Decision), String> {
    let (r, s) = (a.members(), b.members());
    let p = check_qubit_pair(&r[0].density, &r[1].density, &s[0].density, &s[1].density).map_err(|e| e.to_string())?;
    if qubit_grid_contradicts(&p) {
        return Err(format!("grid scan contradicts {}", describe("qubit-pair", &p)));
    }
    let o = choi_oracle(a, b).map_err(|e| e.to_string())?;
    match compare(&p, &o) {
        Agreement::Disagree => Err(format!("{}; {}", describe("qubit-pair", &p), describe("choi", &o))),
        ag => Ok((ag, p)),
    }
}

/// Choi → Kraus → Choi round trip of a random channel; returns the Choi
/// discrepancy.
pub fn round_trip_error(ch: &KrausChannel) -> Result<f64, String> {
    let j = choi_of(ch);
    let back = kraus_from_choi(&j).map_err(|e| e.to_string())?;
    Ok((choi_of(&back).matrix() - j.matrix()).norm())
}
