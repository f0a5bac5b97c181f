//! Seeded random states, unitaries and instance generators.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matcore::{self, c, CMatrix, CVector};
use crate::stateset::{gram_from_kets, kets_from_gram, DensityMatrix, Ket};

fn gaussian(rng: &mut impl Rng) -> crate::matcore::C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random pure state.
pub fn random_ket(d: usize, rng: &mut impl Rng) -> Ket {
    loop {
        let v = CVector::from_fn(d, |_, _| gaussian(rng));
        if let Ok(k) = Ket::new(v) {
            return k;
        }
    }
}

/// `G G† / tr` with `G` a `d × rank` complex Gaussian matrix.
pub fn random_density_rank(d: usize, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
    let g = gaussian_matrix(d, rank.max(1), rng);
    let m = &g * g.adjoint();
    let t = m.trace().re;
    DensityMatrix::new(matcore::hermitian_part(&m.unscale(t))).expect("Wishart matrix is a state")
}

pub fn random_density(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    random_density_rank(d, d, rng)
}

/// Haar-random unitary (polar factor of a Gaussian matrix).
pub fn random_unitary(d: usize, rng: &mut impl Rng) -> CMatrix {
    loop {
        if let Ok(u) = matcore::nearest_isometry(&gaussian_matrix(d, d, rng)) {
            return u;
        }
    }
}

pub fn apply_unitary(u: &CMatrix, k: &Ket) -> Ket {
    Ket::new(u * k.amplitudes()).expect("unitary image is nonzero")
}

/// Embeds a ket into a larger space by zero padding.
pub fn pad(k: &Ket, d: usize) -> Ket {
    let mut v = CVector::zeros(d);
    v.rows_mut(0, k.dim()).copy_from(k.amplitudes());
    Ket::new(v).expect("padding keeps the norm")
}

/// A random pure source family that can be mapped onto `targets`: kets in
/// dimension `d` with Gram matrix `G_B ∘ G_ξ` for random ancillas `ξ` of
/// dimension `anc`. Requires `targets.len() ≤ d`.
pub fn feasible_sources(targets: &[Ket], d: usize, anc: usize, rng: &mut impl Rng) -> Vec<Ket> {
    assert!(targets.len() <= d, "need n ≤ d");
    let joint: Vec<Ket> = targets
        .iter()
        .map(|b| b.tensor(&random_ket(anc.max(1), rng)))
        .collect();
    let g = gram_from_kets(&joint).expect("nonempty");
    let raw = kets_from_gram(&g).expect("Gram matrix factors");
    let u = random_unitary(d, rng);
    raw.iter().map(|k| apply_unitary(&u, &pad(k, d))).collect()
}

/// Random pure decomposition `ρ = Σ_j p_j |w_j⟩⟨w_j|` with `terms` members
/// (at least the rank), obtained by mixing the spectral vectors with a
/// random unitary.
pub fn random_decomposition(rho: &DensityMatrix, terms: usize, rng: &mut impl Rng) -> Vec<(f64, Ket)> {
    let e = matcore::eigh(rho.matrix()).expect("state is Hermitian");
    let d = rho.dim();
    let keep: Vec<usize> = (0..d).filter(|&k| e.values[k] > 1e-12).collect();
    let r = keep.len().max(1);
    let t = terms.max(r);
    let u = random_unitary(t, rng);
    let mut out = Vec::with_capacity(t);
    for j in 0..t {
        let mut w = CVector::zeros(d);
        for (col, &k) in keep.iter().enumerate() {
            w += e.vectors.column(k) * (u[(j, col)] * e.values[k].sqrt());
        }
        let p = w.norm_squared();
        if p > 1e-14 {
            out.push((p, Ket::new(w).expect("nonzero")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..5 {
            let u = random_unitary(d, &mut rng);
            assert!((u.adjoint() * &u - matcore::identity(d)).norm() < 1e-12);
        }
    }

    #[test]
    fn densities_are_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_density_rank(4, 2, &mut rng);
        assert!((r.matrix().trace().re - 1.0).abs() < 1e-12);
        let e = matcore::eigh(r.matrix()).unwrap();
        assert!(e.values[1].abs() < 1e-12 && e.values[2] > 1e-6);
    }

    #[test]
    fn feasible_sources_have_product_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<Ket> = (0..3).map(|_| random_ket(2, &mut rng)).collect();
        let a = feasible_sources(&b, 4, 3, &mut rng);
        assert!(a.iter().all(|k| k.dim() == 4));
        let ga = gram_from_kets(&a).unwrap();
        let gb = gram_from_kets(&b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(ga.matrix()[(i, j)].norm() <= gb.matrix()[(i, j)].norm() + 1e-12);
            }
        }
    }

    #[test]
    fn decompositions_reproduce_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_density_rank(3, 2, &mut rng);
        let dec = random_decomposition(&rho, 4, &mut rng);
        let mut m = CMatrix::zeros(3, 3);
        for (p, k) in &dec {
            m += k.projector() * c(*p, 0.0);
        }
        assert!((m - rho.matrix()).norm() < 1e-12);
        assert_eq!(dec.len(), 4);
    }
}
