//! Reduced density matrices, natural spectra, and orbital gauge tracking.
//!
//! The one-body matrix follows `gamma[p,q] = <Psi| a†_q a_p |Psi>` and the
//! two-body tensor `Gamma[p,q,r,s] = <Psi| a†_r a†_s a_q a_p |Psi>`, so that
//! `Tr gamma = N`, `Tr Gamma = N (N - 1)` and the partial trace satisfies
//! `sum_q Gamma[p,q,r,q] = (N - 1) gamma[p,r]`. With this normalization the
//! contraction in [`compute_w`] reproduces the occupation flow
//! `dn_k/dt = 2 Im W_kk` with no further constant; the calibration test
//! against a finite-difference oracle lives in `tests/w_calibration.rs`.
//!
//! Natural frames are kept in a deterministic "raw" gauge (largest-magnitude
//! component of each column real positive). Parallel transport is layered on
//! top: a frame carries the accumulated geometric phase per orbital, and the
//! transported orbitals are the raw columns times `exp(-i geo_k)`. Keeping
//! the raw gauge in storage makes geometric phases measurable and runs
//! reproducible across platforms.

use std::collections::HashMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{annihilate, apply_excitation, create, Determinant};
use crate::linalg::{eigh, CMatrix};
use crate::model::{transform_rank4, IntegralSet};

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error)]
pub enum RdmError {
    #[error("state is not normalized (|psi| = {norm}, tolerance 1e-10)")]
    UnnormalizedState { norm: f64 },
    #[error("degenerate natural occupations (gap {gap:.3e} between tracked slots {i} and {j})")]
    DegenerateSpectrum { i: usize, j: usize, gap: f64 },
    #[error("state has {len} amplitudes but the basis has {basis} determinants")]
    LengthMismatch { len: usize, basis: usize },
}

/// One-body reduced density matrix in a fixed reference basis.
#[derive(Debug, Clone)]
pub struct OneRdm {
    pub gamma: CMatrix,
}

impl OneRdm {
    pub fn norb(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.norb()).map(|p| self.gamma[(p, p)].re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.norb()).map(|p| self.gamma[(p, p)].re).collect()
    }
}

/// Two-body reduced density matrix, dense rank-4 storage.
#[derive(Debug, Clone)]
pub struct TwoRdm {
    data: Vec<Complex64>,
    pub norb: usize,
}

impl TwoRdm {
    #[inline]
    fn idx(&self, p: usize, q: usize, r: usize, s: usize) -> usize {
        ((p * self.norb + q) * self.norb + r) * self.norb + s
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> Complex64 {
        self.data[self.idx(p, q, r, s)]
    }

    /// `sum_q Gamma[p,q,r,q]`, which equals `(N-1) gamma[p,r]`.
    pub fn partial_trace(&self) -> CMatrix {
        let n = self.norb;
        CMatrix::from_fn(n, n, |p, r| (0..n).map(|q| self.get(p, q, r, q)).sum())
    }

    /// Rotate into the orbital frame `c` (same index pattern as the two-body
    /// integrals).
    pub fn rotated(&self, c: &CMatrix) -> TwoRdm {
        TwoRdm {
            data: transform_rank4(&self.data, c, self.norb),
            norb: self.norb,
        }
    }
}

/// Contraction of the interaction with the two-body matrix; its diagonal
/// drives the occupation flow.
#[derive(Debug, Clone)]
pub struct WMatrix {
    pub w: CMatrix,
}

impl WMatrix {
    /// `dn_k/dt` implied by the diagonal, `2 Im W_kk`.
    pub fn occupation_rates(&self) -> Vec<f64> {
        (0..self.w.nrows()).map(|k| 2.0 * self.w[(k, k)].im).collect()
    }
}

fn check_normalized(psi: &[Complex64], basis: &[Determinant]) -> Result<(), RdmError> {
    if psi.len() != basis.len() {
        return Err(RdmError::LengthMismatch {
            len: psi.len(),
            basis: basis.len(),
        });
    }
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(RdmError::UnnormalizedState { norm });
    }
    Ok(())
}

fn index_map(basis: &[Determinant]) -> HashMap<u64, usize> {
    basis
        .iter()
        .enumerate()
        .map(|(i, d)| (d.bits(), i))
        .collect()
}

fn orbital_count(basis: &[Determinant]) -> usize {
    let mut max = 0u64;
    for d in basis {
        max |= d.bits();
    }
    (64 - max.leading_zeros()) as usize
}

/// One-body reduced density matrix of a CI state.
///
/// `norb` fixes the matrix dimension; pass the spin-orbital count of the
/// underlying model (it may exceed the highest occupied index in the basis).
pub fn one_rdm(
    psi: &[Complex64],
    basis: &[Determinant],
    norb: usize,
) -> Result<OneRdm, RdmError> {
    check_normalized(psi, basis)?;
    debug_assert!(orbital_count(basis) <= norb);
    let map = index_map(basis);
    let mut gamma = CMatrix::zeros(norb, norb);
    for (alpha, &c_alpha) in basis.iter().zip(psi.iter()) {
        if c_alpha == C0 {
            continue;
        }
        for p in alpha.occupied_list() {
            for q in 0..norb {
                if let Some((res, sign)) = apply_excitation(*alpha, q, p) {
                    if let Some(&beta) = map.get(&res.bits()) {
                        gamma[(p, q)] += psi[beta].conj() * c_alpha * sign as f64;
                    }
                }
            }
        }
    }
    Ok(OneRdm { gamma })
}

/// Two-body reduced density matrix of a CI state.
pub fn two_rdm(
    psi: &[Complex64],
    basis: &[Determinant],
    norb: usize,
) -> Result<TwoRdm, RdmError> {
    check_normalized(psi, basis)?;
    let map = index_map(basis);
    let mut out = TwoRdm {
        data: vec![C0; norb * norb * norb * norb],
        norb,
    };
    for (alpha, &c_alpha) in basis.iter().zip(psi.iter()) {
        if c_alpha == C0 {
            continue;
        }
        for p in alpha.occupied_list() {
            let (d1, s1) = annihilate(*alpha, p).expect("p occupied");
            for q in d1.occupied_list() {
                let (d2, s2) = annihilate(d1, q).expect("q occupied");
                for s in 0..norb {
                    let Some((d3, s3)) = create(d2, s) else { continue };
                    for r in 0..norb {
                        let Some((d4, s4)) = create(d3, r) else { continue };
                        if let Some(&beta) = map.get(&d4.bits()) {
                            let sign = (s1 * s2 * s3 * s4) as f64;
                            let i = out.idx(p, q, r, s);
                            out.data[i] += psi[beta].conj() * c_alpha * sign;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Natural-orbital frame: tracked occupations, raw-gauge orbital columns, and
/// the accumulated geometric phase per orbital.
#[derive(Debug, Clone)]
pub struct NaturalFrame {
    pub occupations: Vec<f64>,
    pub orbitals: CMatrix,
    pub geo_phase_accum: Vec<f64>,
}

impl NaturalFrame {
    pub fn dim(&self) -> usize {
        self.orbitals.nrows()
    }

    /// Identity frame over `norb` orbitals with the given occupations.
    /// Natural frame of any state whose gamma is diagonal in the reference
    /// basis, in reference-slot order.
    pub fn reference(occupations: Vec<f64>) -> NaturalFrame {
        let n = occupations.len();
        NaturalFrame {
            occupations,
            orbitals: CMatrix::identity(n, n),
            geo_phase_accum: vec![0.0; n],
        }
    }

    /// Parallel-transported orbitals: raw columns times `exp(-i geo_k)`.
    pub fn transported(&self) -> CMatrix {
        let mut c = self.orbitals.clone();
        for (k, &phase) in self.geo_phase_accum.iter().enumerate() {
            let factor = Complex64::from_polar(1.0, -phase);
            for r in 0..c.nrows() {
                c[(r, k)] *= factor;
            }
        }
        c
    }

    /// Geometric phase attached to a Slater string over frame columns:
    /// the sum of the per-orbital accumulations.
    pub fn geo_phase_for(&self, alpha: Determinant) -> f64 {
        alpha
            .occupied_list()
            .iter()
            .map(|&k| self.geo_phase_accum[k])
            .sum()
    }

    pub fn unitarity_error(&self) -> f64 {
        crate::linalg::unitarity_error(&self.orbitals)
    }
}

/// Options for [`natural_spectrum`].
#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    /// Pairs of occupations closer than this count as degenerate.
    pub degeneracy_tol: f64,
    /// Error out on degeneracies instead of keeping an arbitrary mix.
    pub strict: bool,
    /// Opt-in: add a deterministic `1e-10 * slot` diagonal jitter before
    /// diagonalizing, to split exact degeneracies.
    pub perturb: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            degeneracy_tol: 1e-8,
            strict: false,
            perturb: false,
        }
    }
}

impl SpectrumOptions {
    pub fn strict() -> Self {
        SpectrumOptions {
            strict: true,
            ..Default::default()
        }
    }
}

fn fix_column_gauge(c: &mut CMatrix, col: usize) {
    let n = c.nrows();
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for r in 0..n {
        let mag = c[(r, col)].norm();
        // Strictly-greater keeps the lowest flat index on ties.
        if mag > best_mag + 1e-12 {
            best_mag = mag;
            best = r;
        }
    }
    if best_mag <= 0.0 {
        return;
    }
    let phase = c[(best, col)] / Complex64::new(best_mag, 0.0);
    let factor = phase.conj();
    for r in 0..n {
        c[(r, col)] *= factor;
    }
}

/// Natural spectrum of a one-body matrix.
///
/// Without `prev`: eigenpairs sorted by descending occupation, each column in
/// the deterministic gauge (largest-magnitude component real positive, ties
/// broken by the lowest flat index). With `prev`: columns are matched to the
/// previous frame by greedy maximal overlap so that orbital identity is
/// tracked through occupation crossings, then phase-aligned so that
/// `<prev_k|new_k>` is real positive. The alignment keeps the chain free of
/// the O(1) phase jumps a per-step deterministic rule produces when the
/// largest-magnitude component switches identity.
pub fn natural_spectrum(
    rdm: &OneRdm,
    prev: Option<&NaturalFrame>,
    opts: &SpectrumOptions,
) -> Result<NaturalFrame, RdmError> {
    let n = rdm.norb();
    let mut gamma = rdm.gamma.clone();
    if opts.perturb {
        for k in 0..n {
            gamma[(k, k)] += Complex64::new(1e-10 * k as f64, 0.0);
        }
    }
    let (vals, vecs) = eigh(&gamma);

    // Descending occupation order.
    let mut order: Vec<usize> = (0..n).collect();
    order.reverse();
    let mut occ: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut c = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        c.set_column(col, &vecs.column(i));
    }

    if opts.strict {
        for i in 0..n.saturating_sub(1) {
            let gap = (occ[i] - occ[i + 1]).abs();
            if gap < opts.degeneracy_tol {
                return Err(RdmError::DegenerateSpectrum { i, j: i + 1, gap });
            }
        }
    }

    if let Some(prev_frame) = prev {
        // Greedy assignment on descending |<prev_j|new_k>|.
        let overlaps = prev_frame.orbitals.adjoint() * &c;
        let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                pairs.push((j, k, overlaps[(j, k)].norm()));
            }
        }
        pairs.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
        let mut slot_of_new: Vec<Option<usize>> = vec![None; n];
        let mut slot_taken = vec![false; n];
        let mut assigned = 0;
        for (j, k, _) in pairs {
            if slot_taken[j] || slot_of_new[k].is_some() {
                continue;
            }
            slot_of_new[k] = Some(j);
            slot_taken[j] = true;
            assigned += 1;
            if assigned == n {
                break;
            }
        }
        let mut c_matched = CMatrix::zeros(n, n);
        let mut occ_matched = vec![0.0; n];
        for k in 0..n {
            let j = slot_of_new[k].expect("complete assignment");
            c_matched.set_column(j, &c.column(k));
            occ_matched[j] = occ[k];
        }
        c = c_matched;
        occ = occ_matched;
        // Phase continuity: <prev_k|new_k> real positive.
        for k in 0..n {
            let overlap: Complex64 = prev_frame
                .orbitals
                .column(k)
                .iter()
                .zip(c.column(k).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            if overlap.norm() > 0.0 {
                let factor = (overlap / overlap.norm()).conj();
                for r in 0..n {
                    c[(r, k)] *= factor;
                }
            }
        }
    } else {
        for col in 0..n {
            fix_column_gauge(&mut c, col);
        }
    }

    let geo = match prev {
        Some(p) => p.geo_phase_accum.clone(),
        None => vec![0.0; n],
    };
    Ok(NaturalFrame {
        occupations: occ,
        orbitals: c,
        geo_phase_accum: geo,
    })
}

/// Discrete parallel transport of one frame step.
///
/// The per-column increment is `arg <prev_k|new_k>`; it is added to the
/// accumulated geometric phase, and the transported orbitals (see
/// [`NaturalFrame::transported`]) then satisfy the discrete transport
/// condition: the overlap of consecutive transported columns is real and
/// positive, so `Im <phi_k | delta phi_k>` vanishes. Accumulation is exact as
/// long as the raw gauge moves by less than pi per step, and modulo 2 pi
/// beyond that.
pub fn parallel_transport_step(
    prev: &NaturalFrame,
    new: &NaturalFrame,
    _dt: f64,
) -> NaturalFrame {
    let n = prev.dim();
    let mut geo = vec![0.0; n];
    for k in 0..n {
        let z: Complex64 = prev
            .orbitals
            .column(k)
            .iter()
            .zip(new.orbitals.column(k).iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        geo[k] = prev.geo_phase_accum[k] + z.arg();
    }
    NaturalFrame {
        occupations: new.occupations.clone(),
        orbitals: new.orbitals.clone(),
        geo_phase_accum: geo,
    }
}

/// Interaction/two-body contraction in the natural-orbital frame:
/// `W_jk = sum_{a,b,d} v'[j,d,a,b] Gamma'[a,b,k,d]`, with both tensors
/// rotated into the frame first. The diagonal drives the occupations,
/// `dn_k/dt = 2 Im W_kk`.
pub fn compute_w(gamma2: &TwoRdm, ints: &IntegralSet, frame: &NaturalFrame) -> WMatrix {
    let c = frame.transported();
    let v_frame = transform_rank4(ints.v_raw(), &c, ints.norb);
    let g_frame = gamma2.rotated(&c);
    compute_w_in_frame_raw(&v_frame, &g_frame)
}

/// Same contraction when the interaction and the two-body matrix are already
/// expressed in the frame. Hot path for the reduced equations of motion.
pub fn compute_w_in_frame(ints_frame: &IntegralSet, gamma2_frame: &TwoRdm) -> WMatrix {
    compute_w_in_frame_raw(ints_frame.v_raw(), gamma2_frame)
}

fn compute_w_in_frame_raw(v: &[Complex64], gamma2: &TwoRdm) -> WMatrix {
    let n = gamma2.norb;
    let vidx = |p: usize, q: usize, r: usize, s: usize| ((p * n + q) * n + r) * n + s;
    let mut w = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let mut acc = C0;
            for a in 0..n {
                for b in 0..n {
                    for d in 0..n {
                        let vv = v[vidx(j, d, a, b)];
                        if vv == C0 {
                            continue;
                        }
                        acc += vv * gamma2.get(a, b, k, d);
                    }
                }
            }
            w[(j, k)] = acc;
        }
    }
    WMatrix { w }
}
