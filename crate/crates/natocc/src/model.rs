//! Hamiltonian specification and many-body matrix construction.
//!
//! One- and two-body integrals are stored dense over flat spin-orbital
//! indices. The two-body tensor uses the physicist convention
//! `v[p,q,r,s] = <pq|v|rs>`, and the second-quantized Hamiltonian is
//!
//! ```text
//! H = sum_{p,q} h[p,q] a†_p a_q
//!   + 1/2 sum_{p,q,r,s} v[p,q,r,s] a†_p a†_q a_s a_r
//! ```
//!
//! Worked L = 2 example of the convention: the on-site Hubbard interaction
//! `U n_{0u} n_{0d}` corresponds to exactly two tensor entries,
//! `v[0,1,0,1] = v[1,0,1,0] = U` (flat 0 = site 0 up, flat 1 = site 0 down);
//! the 1/2 in front of the sum cancels against the exchange-symmetric pair.

use num_complex::Complex64;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::fock::{annihilate, apply_excitation, create, Determinant};
use crate::linalg::{hermiticity_error, unitarity_error, CMatrix};

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("one-body matrix is not Hermitian (deviation {dev:.3e})")]
    NonHermitianOneBody { dev: f64 },
    #[error("orbital transformation is not unitary (deviation {dev:.3e})")]
    NonUnitaryTransform { dev: f64 },
    #[error("momentum basis requires periodic boundary conditions; build open chains in the site basis")]
    OpenChainMomentumBasis,
    #[error("Hubbard chains need at least 2 sites, got {sites}")]
    ChainTooShort { sites: usize },
    #[error("quench schedule must start at t = 0 and be strictly increasing")]
    BadSchedule,
    #[error("integral sets have mismatched orbital counts ({a} vs {b})")]
    DimensionMismatch { a: usize, b: usize },
}

/// Orbital basis a Hubbard Hamiltonian is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Momentum,
    Site,
}

/// One- and two-body integrals in a fixed orthonormal orbital basis.
#[derive(Debug, Clone)]
pub struct IntegralSet {
    pub h: CMatrix,
    v: Vec<Complex64>,
    pub norb: usize,
    pub basis_tag: String,
}

impl IntegralSet {
    pub fn zeros(norb: usize, basis_tag: &str) -> IntegralSet {
        IntegralSet {
            h: CMatrix::zeros(norb, norb),
            v: vec![C0; norb * norb * norb * norb],
            norb,
            basis_tag: basis_tag.to_string(),
        }
    }

    #[inline]
    fn idx(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * self.norb + q) * self.norb + r) * self.norb + s
    }

    #[inline]
    pub fn v(&self, p: usize, q: usize, r: usize, s: usize) -> Complex64 {
        self.v[self.idx(p, q, r, s)]
    }

    pub fn set_v(&mut self, p: usize, q: usize, r: usize, s: usize, value: Complex64) {
        let i = self.idx(p, q, r, s);
        self.v[i] = value;
    }

    /// Set `<pq|v|rs>` together with its exchange partner `<qp|v|sr>`.
    pub fn set_v_sym(&mut self, p: usize, q: usize, r: usize, s: usize, value: Complex64) {
        self.set_v(p, q, r, s, value);
        self.set_v(q, p, s, r, value);
    }

    pub fn v_raw(&self) -> &[Complex64] {
        &self.v
    }

    /// Largest deviation from Hermitian pair symmetry `v[pqrs] = v[rspq]*`
    /// and exchange symmetry `v[pqrs] = v[qpsr]`, plus one-body Hermiticity.
    pub fn symmetry_error(&self) -> f64 {
        let mut err = hermiticity_error(&self.h);
        let n = self.norb;
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.v(p, q, r, s);
                        err = err.max((v - self.v(r, s, p, q).conj()).norm());
                        err = err.max((v - self.v(q, p, s, r)).norm());
                    }
                }
            }
        }
        err
    }

    /// `self + factor * other`, entrywise on both h and v.
    pub fn add_scaled(&self, other: &IntegralSet, factor: f64) -> Result<IntegralSet, ModelError> {
        if self.norb != other.norb {
            return Err(ModelError::DimensionMismatch {
                a: self.norb,
                b: other.norb,
            });
        }
        let mut out = self.clone();
        out.h += other.h.scale(factor);
        for (a, b) in out.v.iter_mut().zip(other.v.iter()) {
            *a += b * factor;
        }
        Ok(out)
    }
}

/// Piecewise-constant Hamiltonian schedule. Each segment holds from its start
/// time until the next segment begins. An optional perturbation `lambda * V`
/// is folded into every segment at construction.
#[derive(Debug, Clone)]
pub struct QuenchProtocol {
    segments: Vec<(f64, IntegralSet)>,
    pub perturbation_strength: Option<f64>,
}

impl QuenchProtocol {
    pub fn new(segments: Vec<(f64, IntegralSet)>) -> Result<QuenchProtocol, ModelError> {
        if segments.is_empty() || segments[0].0 != 0.0 {
            return Err(ModelError::BadSchedule);
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ModelError::BadSchedule);
        }
        Ok(QuenchProtocol {
            segments,
            perturbation_strength: None,
        })
    }

    /// Schedule with `lambda * v` added to every segment.
    pub fn with_perturbation(
        segments: Vec<(f64, IntegralSet)>,
        lambda: f64,
        v: &IntegralSet,
    ) -> Result<QuenchProtocol, ModelError> {
        let perturbed = segments
            .into_iter()
            .map(|(t, ints)| Ok((t, ints.add_scaled(v, lambda)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let mut protocol = QuenchProtocol::new(perturbed)?;
        protocol.perturbation_strength = Some(lambda);
        Ok(protocol)
    }

    pub fn constant(ints: IntegralSet) -> QuenchProtocol {
        QuenchProtocol {
            segments: vec![(0.0, ints)],
            perturbation_strength: None,
        }
    }

    pub fn integrals_at(&self, t: f64) -> &IntegralSet {
        let mut current = &self.segments[0].1;
        for (start, ints) in &self.segments {
            if *start <= t + 1e-12 {
                current = ints;
            } else {
                break;
            }
        }
        current
    }

    pub fn segment_starts(&self) -> Vec<f64> {
        self.segments.iter().map(|(t, _)| *t).collect()
    }
}

/// Hubbard chain integrals.
///
/// In the momentum basis (periodic only) the one-body part is diagonal with
/// `eps_k = -2 t cos(2 pi k / L)` and the interaction scatters opposite-spin
/// pairs with amplitude `U / L` under momentum conservation mod L. In the
/// site basis the interaction is on-site.
pub fn build_hubbard(
    sites: usize,
    t_hop: f64,
    u: f64,
    periodic: bool,
    basis: BasisKind,
) -> Result<IntegralSet, ModelError> {
    if sites < 2 {
        return Err(ModelError::ChainTooShort { sites });
    }
    let norb = 2 * sites;
    match basis {
        BasisKind::Momentum => {
            if !periodic {
                return Err(ModelError::OpenChainMomentumBasis);
            }
            let mut ints = IntegralSet::zeros(norb, "momentum");
            for k in 0..sites {
                let eps = -2.0 * t_hop * (2.0 * std::f64::consts::PI * k as f64 / sites as f64).cos();
                ints.h[(2 * k, 2 * k)] = Complex64::new(eps, 0.0);
                ints.h[(2 * k + 1, 2 * k + 1)] = Complex64::new(eps, 0.0);
            }
            let amp = Complex64::new(u / sites as f64, 0.0);
            if u != 0.0 {
                for kp in 0..sites {
                    for kq in 0..sites {
                        for kr in 0..sites {
                            let ks = (kp + kq + sites - kr) % sites;
                            ints.set_v_sym(2 * kp, 2 * kq + 1, 2 * kr, 2 * ks + 1, amp);
                        }
                    }
                }
            }
            Ok(ints)
        }
        BasisKind::Site => {
            let mut ints = IntegralSet::zeros(norb, "site");
            let bonds = if periodic { sites } else { sites - 1 };
            for i in 0..bonds {
                let j = (i + 1) % sites;
                for spin in 0..2 {
                    ints.h[(2 * i + spin, 2 * j + spin)] += Complex64::new(-t_hop, 0.0);
                    ints.h[(2 * j + spin, 2 * i + spin)] += Complex64::new(-t_hop, 0.0);
                }
            }
            if u != 0.0 {
                for i in 0..sites {
                    ints.set_v_sym(2 * i, 2 * i + 1, 2 * i, 2 * i + 1, Complex64::new(u, 0.0));
                }
            }
            Ok(ints)
        }
    }
}

/// Unitary mapping site orbitals to momentum orbitals, spin-block diagonal.
/// Column `2k + spin` is the Bloch orbital `phi_k(i) = exp(2 pi i k i / L) / sqrt(L)`.
pub fn fourier_frame(sites: usize) -> CMatrix {
    let norb = 2 * sites;
    let mut f = CMatrix::zeros(norb, norb);
    let norm = 1.0 / (sites as f64).sqrt();
    for k in 0..sites {
        for i in 0..sites {
            let phase = 2.0 * std::f64::consts::PI * (k * i) as f64 / sites as f64;
            let amp = Complex64::from_polar(norm, phase);
            f[(2 * i, 2 * k)] = amp;
            f[(2 * i + 1, 2 * k + 1)] = amp;
        }
    }
    f
}

/// Hamiltonian matrix element `<a|H|b>` by the Slater-Condon rules, including
/// fermionic signs. Zero when the determinants differ by more than two
/// orbitals.
pub fn slater_condon_element(a: Determinant, b: Determinant, ints: &IntegralSet) -> Complex64 {
    match a.excitation_rank(b) {
        0 => {
            let occ = b.occupied_list();
            let mut e = C0;
            for &p in &occ {
                e += ints.h[(p, p)];
            }
            for (i, &p) in occ.iter().enumerate() {
                for &q in &occ[i + 1..] {
                    e += ints.v(p, q, p, q) - ints.v(p, q, q, p);
                }
            }
            e
        }
        1 => {
            let removed = b.bits() & !a.bits();
            let added = a.bits() & !b.bits();
            let p = removed.trailing_zeros() as usize;
            let q = added.trailing_zeros() as usize;
            let (_, sign) = apply_excitation(b, q, p).expect("rank-1 excitation applies");
            let mut e = ints.h[(q, p)];
            for r in b.occupied_list() {
                if r != p {
                    e += ints.v(q, r, p, r) - ints.v(q, r, r, p);
                }
            }
            e * sign as f64
        }
        2 => {
            let removed = Determinant::from_bits(b.bits() & !a.bits()).occupied_list();
            let added = Determinant::from_bits(a.bits() & !b.bits()).occupied_list();
            let (p1, p2) = (removed[0], removed[1]);
            let (q1, q2) = (added[0], added[1]);
            // Phase of <a| a†_{q1} a†_{q2} a_{p2} a_{p1} |b>.
            let (d1, s1) = annihilate(b, p1).expect("p1 occupied");
            let (d2, s2) = annihilate(d1, p2).expect("p2 occupied");
            let (d3, s3) = create(d2, q2).expect("q2 free");
            let (d4, s4) = create(d3, q1).expect("q1 free");
            debug_assert_eq!(d4, a);
            let sign = (s1 * s2 * s3 * s4) as f64;
            (ints.v(q1, q2, p1, p2) - ints.v(q1, q2, p2, p1)) * sign
        }
        _ => C0,
    }
}

/// Many-body Hamiltonian matrix over a determinant basis.
///
/// Entries are pure functions of `(bra, ket, ints)`, so columns are filled
/// in parallel (into disjoint slices of the flat storage) when the
/// `parallel` feature is enabled.
pub fn build_many_body_matrix(basis: &[Determinant], ints: &IntegralSet) -> CMatrix {
    build_matrix_inner(basis, ints, cfg!(feature = "parallel"))
}

/// Sequential reference path for the matrix build. Kept callable regardless
/// of features so benches can compare both.
pub fn build_many_body_matrix_seq(basis: &[Determinant], ints: &IntegralSet) -> CMatrix {
    build_matrix_inner(basis, ints, false)
}

fn build_matrix_inner(basis: &[Determinant], ints: &IntegralSet, parallel: bool) -> CMatrix {
    assert!(!basis.is_empty(), "empty determinant basis");
    let dim = basis.len();
    let mut data = vec![C0; dim * dim];
    let fill_column = |j: usize, column: &mut [Complex64]| {
        let ket = basis[j];
        for (i, slot) in column.iter_mut().enumerate() {
            *slot = slater_condon_element(basis[i], ket, ints);
        }
    };
    #[cfg(feature = "parallel")]
    if parallel {
        data.par_chunks_mut(dim)
            .enumerate()
            .for_each(|(j, column)| fill_column(j, column));
    } else {
        for (j, column) in data.chunks_mut(dim).enumerate() {
            fill_column(j, column);
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = parallel;
        for (j, column) in data.chunks_mut(dim).enumerate() {
            fill_column(j, column);
        }
    }
    CMatrix::from_vec(dim, dim, data)
}

/// Rotate integrals into the orbital frame given by the unitary `c`
/// (columns = new orbitals expanded over the old basis):
/// `h' = C† h C` and the four-index contraction of `v` with `C`.
pub fn transform_integrals(ints: &IntegralSet, c: &CMatrix) -> Result<IntegralSet, ModelError> {
    let dev = unitarity_error(c);
    if dev > 1e-10 {
        return Err(ModelError::NonUnitaryTransform { dev });
    }
    let n = ints.norb;
    let mut out = IntegralSet::zeros(n, &format!("{}:rotated", ints.basis_tag));
    out.h = c.adjoint() * &ints.h * c;
    out.v = transform_rank4(&ints.v, c, n);
    Ok(out)
}

/// Four-index basis change with the `conj, conj, plain, plain` pattern shared
/// by the two-body integrals and the two-particle reduced density matrix.
pub(crate) fn transform_rank4(v: &[Complex64], c: &CMatrix, n: usize) -> Vec<Complex64> {
    let idx = |p: usize, q: usize, r: usize, s: usize| ((p * n + q) * n + r) * n + s;
    let mut t1 = vec![C0; n * n * n * n];
    // t1[j,q,r,s] = sum_p conj(C[p,j]) v[p,q,r,s]
    for j in 0..n {
        for p in 0..n {
            let w = c[(p, j)].conj();
            if w == C0 {
                continue;
            }
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        t1[idx(j, q, r, s)] += w * v[idx(p, q, r, s)];
                    }
                }
            }
        }
    }
    let mut t2 = vec![C0; n * n * n * n];
    // t2[j,k,r,s] = sum_q conj(C[q,k]) t1[j,q,r,s]
    for k in 0..n {
        for q in 0..n {
            let w = c[(q, k)].conj();
            if w == C0 {
                continue;
            }
            for j in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        t2[idx(j, k, r, s)] += w * t1[idx(j, q, r, s)];
                    }
                }
            }
        }
    }
    let mut t3 = vec![C0; n * n * n * n];
    // t3[j,k,l,s] = sum_r C[r,l] t2[j,k,r,s]
    for l in 0..n {
        for r in 0..n {
            let w = c[(r, l)];
            if w == C0 {
                continue;
            }
            for j in 0..n {
                for k in 0..n {
                    for s in 0..n {
                        t3[idx(j, k, l, s)] += w * t2[idx(j, k, r, s)];
                    }
                }
            }
        }
    }
    let mut out = vec![C0; n * n * n * n];
    // v'[j,k,l,m] = sum_s C[s,m] t3[j,k,l,s]
    for m in 0..n {
        for s in 0..n {
            let w = c[(s, m)];
            if w == C0 {
                continue;
            }
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        out[idx(j, k, l, m)] += w * t3[idx(j, k, l, s)];
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_determinants, sector_filter, sector_partition, SectorLabel};
    use crate::linalg::eigh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Brute-force oracle: apply H term by term with bare ladder operators and
    /// read off the coefficient on the bra determinant.
    fn element_oracle(a: Determinant, b: Determinant, ints: &IntegralSet) -> Complex64 {
        let n = ints.norb;
        let mut acc = C0;
        for r in 0..n {
            for s in 0..n {
                if ints.h[(r, s)] == C0 {
                    continue;
                }
                if let Some((d1, s1)) = annihilate(b, s) {
                    if let Some((d2, s2)) = create(d1, r) {
                        if d2 == a {
                            acc += ints.h[(r, s)] * (s1 * s2) as f64;
                        }
                    }
                }
            }
        }
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let vampl = ints.v(p, q, r, s);
                        if vampl == C0 {
                            continue;
                        }
                        // 1/2 v[pqrs] a†_p a†_q a_s a_r
                        if let Some((d1, s1)) = annihilate(b, r) {
                            if let Some((d2, s2)) = annihilate(d1, s) {
                                if let Some((d3, s3)) = create(d2, q) {
                                    if let Some((d4, s4)) = create(d3, p) {
                                        if d4 == a {
                                            acc += vampl * 0.5 * (s1 * s2 * s3 * s4) as f64;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        acc
    }

    fn random_integrals(norb: usize, seed: u64) -> IntegralSet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut ints = IntegralSet::zeros(norb, "random");
        let mut h = CMatrix::zeros(norb, norb);
        for i in 0..norb {
            for j in 0..norb {
                h[(i, j)] = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
        }
        ints.h = (&h + h.adjoint()).scale(0.5);
        let raw: Vec<Complex64> = (0..norb.pow(4))
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let idx = |p: usize, q: usize, r: usize, s: usize| ((p * norb + q) * norb + r) * norb + s;
        for p in 0..norb {
            for q in 0..norb {
                for r in 0..norb {
                    for s in 0..norb {
                        // Symmetrize: exchange then Hermitian pair.
                        let sym = 0.25
                            * (raw[idx(p, q, r, s)]
                                + raw[idx(q, p, s, r)]
                                + raw[idx(r, s, p, q)].conj()
                                + raw[idx(s, r, q, p)].conj());
                        ints.set_v(p, q, r, s, sym);
                    }
                }
            }
        }
        assert!(ints.symmetry_error() < 1e-12);
        ints
    }

    fn random_unitary(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(n, n, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let h = (&m + m.adjoint()).scale(0.5);
        let (_, q) = eigh(&h);
        q
    }

    #[test]
    fn hubbard_momentum_dispersion() {
        let ints = build_hubbard(4, 1.0, 0.0, true, BasisKind::Momentum).unwrap();
        let expect = [-2.0, 0.0, 2.0, 0.0];
        for k in 0..4 {
            assert!((ints.h[(2 * k, 2 * k)].re - expect[k]).abs() < 1e-14);
            assert!((ints.h[(2 * k + 1, 2 * k + 1)].re - expect[k]).abs() < 1e-14);
        }
        assert!(ints.v_raw().iter().all(|z| *z == C0));
        // Oracle: eigenvalues of the site-basis hopping matrix.
        let site = build_hubbard(4, 1.0, 0.0, true, BasisKind::Site).unwrap();
        let (mut evals, _) = eigh(&site.h);
        evals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut diag: Vec<f64> = (0..8).map(|p| ints.h[(p, p)].re).collect();
        diag.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in evals.iter().zip(diag.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hubbard_atomic_limit() {
        let ints = build_hubbard(2, 0.0, 1.0, true, BasisKind::Momentum).unwrap();
        assert!(ints.h.iter().all(|z| z.norm() < 1e-15));
        assert!(ints.v_raw().iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn hubbard_rejects_open_momentum() {
        assert!(matches!(
            build_hubbard(4, 1.0, 1.0, false, BasisKind::Momentum),
            Err(ModelError::OpenChainMomentumBasis)
        ));
    }

    #[test]
    fn hubbard_site_fourier_matches_momentum_build() {
        // Independent route to the momentum-basis integrals: build in the
        // site basis and rotate with the Bloch frame.
        for (sites, u) in [(2usize, 1.3), (4, 0.7)] {
            let site = build_hubbard(sites, 1.0, u, true, BasisKind::Site).unwrap();
            let momentum = build_hubbard(sites, 1.0, u, true, BasisKind::Momentum).unwrap();
            let rotated = transform_integrals(&site, &fourier_frame(sites)).unwrap();
            let h_err = (&rotated.h - &momentum.h)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(h_err < 1e-12, "h deviation {h_err}");
            let v_err = rotated
                .v_raw()
                .iter()
                .zip(momentum.v_raw().iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(v_err < 1e-12, "v deviation {v_err}");
        }
    }

    #[test]
    fn slater_condon_diagonal_rule() {
        let ints = random_integrals(6, 7);
        let det = Determinant::from_occupied(&[0, 2, 5]);
        let direct = slater_condon_element(det, det, &ints);
        let mut expect = ints.h[(0, 0)] + ints.h[(2, 2)] + ints.h[(5, 5)];
        for (p, q) in [(0, 2), (0, 5), (2, 5)] {
            expect += ints.v(p, q, p, q) - ints.v(p, q, q, p);
        }
        assert!((direct - expect).norm() < 1e-13);
    }

    #[test]
    fn slater_condon_rank_three_vanishes() {
        let ints = random_integrals(6, 8);
        let a = Determinant::from_occupied(&[0, 1, 2]);
        let b = Determinant::from_occupied(&[3, 4, 5]);
        assert_eq!(slater_condon_element(a, b, &ints), C0);
    }

    #[test]
    fn slater_condon_matches_operator_oracle() {
        let ints = random_integrals(6, 9);
        let basis = enumerate_determinants(3, 3).unwrap();
        for &a in &basis {
            for &b in &basis {
                let fast = slater_condon_element(a, b, &ints);
                let slow = element_oracle(a, b, &ints);
                assert!(
                    (fast - slow).norm() < 1e-12,
                    "mismatch {a} {b}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn sector_matrix_matches_full_space_projection() {
        // Degeneracy-robust oracle: the multiset union of all sector-block
        // spectra must reproduce the full-space spectrum, and in particular
        // the (m=1/2, T=1) block holds six of those eigenvalues.
        let ints = build_hubbard(4, 1.0, 1.0, true, BasisKind::Momentum).unwrap();
        let full = enumerate_determinants(3, 4).unwrap();
        let h_full = build_many_body_matrix(&full, &ints);
        let (full_evals, _) = eigh(&h_full);

        let sector = sector_filter(&full, SectorLabel::new(1, 1), 4);
        assert_eq!(sector.len(), 6);
        let h_sector = build_many_body_matrix(&sector, &ints);
        assert!(hermiticity_error(&h_sector) < 1e-12);
        let (sector_evals, _) = eigh(&h_sector);

        let mut union: Vec<f64> = Vec::new();
        for (_, dets) in sector_partition(&full, 4) {
            let h = build_many_body_matrix(&dets, &ints);
            union.extend(eigh(&h).0);
        }
        union.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(union.len(), full_evals.len());
        for (a, b) in union.iter().zip(full_evals.iter()) {
            assert!((a - b).abs() < 1e-11, "block union vs full: {a} vs {b}");
        }
        // Every sector eigenvalue appears in the full spectrum.
        for e in &sector_evals {
            let nearest = full_evals
                .iter()
                .map(|f| (f - e).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-11, "sector eigenvalue {e} missing from full spectrum");
        }
    }

    #[test]
    fn free_sector_matrix_is_diagonal() {
        let ints = build_hubbard(4, 1.0, 0.0, true, BasisKind::Momentum).unwrap();
        let full = enumerate_determinants(3, 4).unwrap();
        let sector = sector_filter(&full, SectorLabel::new(1, 1), 4);
        let h = build_many_body_matrix(&sector, &ints);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(h[(i, j)].norm() < 1e-15);
                }
            }
        }
        // Diagonal entries are summed single-particle energies.
        for (i, det) in sector.iter().enumerate() {
            let expect: f64 = det.occupied_list().iter().map(|&p| ints.h[(p, p)].re).sum();
            assert!((h[(i, i)].re - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn single_determinant_matrix() {
        let ints = random_integrals(4, 11);
        let det = Determinant::from_occupied(&[0, 3]);
        let h = build_many_body_matrix(&[det], &ints);
        assert_eq!(h.nrows(), 1);
        assert!((h[(0, 0)] - slater_condon_element(det, det, &ints)).norm() < 1e-15);
    }

    #[test]
    fn parallel_and_sequential_builds_agree() {
        let ints = build_hubbard(4, 1.0, 2.0, true, BasisKind::Momentum).unwrap();
        let basis = enumerate_determinants(3, 4).unwrap();
        let a = build_many_body_matrix(&basis, &ints);
        let b = build_many_body_matrix_seq(&basis, &ints);
        assert_eq!(a, b);
    }

    #[test]
    fn hamiltonian_is_block_diagonal_over_sectors() {
        let ints = build_hubbard(4, 1.0, 2.0, true, BasisKind::Momentum).unwrap();
        let basis = enumerate_determinants(3, 4).unwrap();
        let h = build_many_body_matrix(&basis, &ints);
        let groups = sector_partition(&basis, 4);
        let label_of = |d: &Determinant| {
            groups
                .iter()
                .position(|(_, v)| v.contains(d))
                .expect("determinant in some sector")
        };
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                if label_of(a) != label_of(b) {
                    assert!(h[(i, j)].norm() < 1e-14, "sector mixing at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn transform_identity_and_permutation() {
        let ints = random_integrals(4, 13);
        let eye = CMatrix::identity(4, 4);
        let same = transform_integrals(&ints, &eye).unwrap();
        assert!((&same.h - &ints.h).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);

        // Permutation 0 <-> 1: h rows/cols swap accordingly.
        let mut perm = CMatrix::zeros(4, 4);
        perm[(1, 0)] = c(1.0, 0.0);
        perm[(0, 1)] = c(1.0, 0.0);
        perm[(2, 2)] = c(1.0, 0.0);
        perm[(3, 3)] = c(1.0, 0.0);
        let swapped = transform_integrals(&ints, &perm).unwrap();
        assert!((swapped.h[(0, 0)] - ints.h[(1, 1)]).norm() < 1e-14);
        assert!((swapped.h[(0, 1)] - ints.h[(1, 0)]).norm() < 1e-14);
        assert!((swapped.v(0, 1, 0, 1) - ints.v(1, 0, 1, 0)).norm() < 1e-14);
    }

    #[test]
    fn transform_rejects_non_unitary() {
        let ints = random_integrals(4, 17);
        let mut bad = CMatrix::identity(4, 4);
        bad[(0, 0)] = c(1.5, 0.0);
        assert!(matches!(
            transform_integrals(&ints, &bad),
            Err(ModelError::NonUnitaryTransform { .. })
        ));
    }

    #[test]
    fn spectrum_invariant_under_basis_change() {
        let ints = random_integrals(6, 19);
        let basis = enumerate_determinants(3, 3).unwrap();
        let h0 = build_many_body_matrix(&basis, &ints);
        let (e0, _) = eigh(&h0);

        let q = random_unitary(6, 23);
        let rotated = transform_integrals(&ints, &q).unwrap();
        assert!(rotated.symmetry_error() < 1e-10);
        let h1 = build_many_body_matrix(&basis, &rotated);
        let (e1, _) = eigh(&h1);
        for (a, b) in e0.iter().zip(e1.iter()) {
            assert!((a - b).abs() < 1e-10, "spectrum moved: {a} vs {b}");
        }
    }

    #[test]
    fn protocol_lookup() {
        let a = build_hubbard(2, 1.0, 0.0, true, BasisKind::Momentum).unwrap();
        let b = build_hubbard(2, 1.0, 2.0, true, BasisKind::Momentum).unwrap();
        let proto = QuenchProtocol::new(vec![(0.0, a), (1.0, b)]).unwrap();
        assert_eq!(proto.integrals_at(0.0).basis_tag, "momentum");
        assert!(proto.integrals_at(0.5).v_raw().iter().all(|z| *z == C0));
        assert!(proto.integrals_at(1.0).v_raw().iter().any(|z| z.norm() > 0.0));
        assert!(QuenchProtocol::new(vec![(0.5, build_hubbard(2, 1.0, 0.0, true, BasisKind::Site).unwrap())]).is_err());
    }

    #[test]
    fn protocol_folds_perturbation_into_segments() {
        let base = build_hubbard(2, 1.0, 0.0, true, BasisKind::Momentum).unwrap();
        let v = build_hubbard(2, 0.0, 1.0, true, BasisKind::Momentum).unwrap();
        let lambda = 1e-2;
        let proto = QuenchProtocol::with_perturbation(vec![(0.0, base)], lambda, &v).unwrap();
        assert_eq!(proto.perturbation_strength, Some(lambda));
        let ints = proto.integrals_at(0.0);
        assert!((ints.v(0, 1, 0, 1).re - lambda * 0.5).abs() < 1e-15); // lambda * U/L
    }
}
