//! Fock-space basis construction for a finite set of spin-orbitals.
//!
//! Spin-orbitals on `L` lattice sites (or momentum labels) are flattened as
//! `flat = 2 * k + spin` with spin up = 0, spin down = 1. All fermionic sign
//! conventions, matrix layouts and golden data in this crate depend on that
//! ordering, so it is fixed here once. Determinants are occupation
//! bit-patterns over the flat indices, with `|det> = a†_{p1} a†_{p2} ...
//! a†_{pN} |0>` for ascending `p1 < p2 < ... < pN`.

use std::fmt;

use thiserror::Error;

use crate::linalg::CMatrix;
use num_complex::Complex64;

/// Spin projection of a single orbital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn from_bit(bit: usize) -> Spin {
        if bit == 0 { Spin::Up } else { Spin::Down }
    }

    pub fn bit(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spin::Up => write!(f, "u"),
            Spin::Down => write!(f, "d"),
        }
    }
}

/// One spin-orbital, identified by a site (or momentum) label and a spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinOrbital {
    pub index: usize,
    pub spin: Spin,
}

impl SpinOrbital {
    pub fn new(index: usize, spin: Spin) -> SpinOrbital {
        SpinOrbital { index, spin }
    }

    /// Flat index with the fixed convention `flat = 2 * index + spin`.
    pub fn flat(self) -> usize {
        2 * self.index + self.spin.bit()
    }

    pub fn from_flat(flat: usize) -> SpinOrbital {
        SpinOrbital {
            index: flat / 2,
            spin: Spin::from_bit(flat % 2),
        }
    }
}

impl fmt::Display for SpinOrbital {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.index, self.spin)
    }
}

/// A Slater determinant as an occupation bit-pattern over flat spin-orbital
/// indices. Bit `p` set means orbital `p` occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Determinant {
    bits: u64,
}

impl Determinant {
    pub fn from_bits(bits: u64) -> Determinant {
        Determinant { bits }
    }

    pub fn from_occupied(orbitals: &[usize]) -> Determinant {
        let mut bits = 0u64;
        for &p in orbitals {
            assert!(p < 64, "flat orbital index out of range");
            assert!(bits & (1 << p) == 0, "duplicate orbital in determinant");
            bits |= 1 << p;
        }
        Determinant { bits }
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn particle_count(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn occupied(self, flat: usize) -> bool {
        self.bits & (1u64 << flat) != 0
    }

    /// Occupied flat indices in ascending order.
    pub fn occupied_list(self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.particle_count());
        let mut b = self.bits;
        while b != 0 {
            let p = b.trailing_zeros() as usize;
            out.push(p);
            b &= b - 1;
        }
        out
    }

    /// Number of occupied orbitals with flat index strictly below `flat`.
    pub fn count_below(self, flat: usize) -> usize {
        (self.bits & ((1u64 << flat) - 1)).count_ones() as usize
    }

    /// Number of occupied orbitals strictly between two flat indices.
    pub fn count_between(self, a: usize, b: usize) -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi - lo <= 1 {
            return 0;
        }
        let mask = ((1u64 << hi) - 1) & !((1u64 << (lo + 1)) - 1);
        (self.bits & mask).count_ones() as usize
    }

    /// Number of orbitals by which two determinants differ (excitation rank):
    /// 0 for equal, 1 for a single replacement, and so on.
    pub fn excitation_rank(self, other: Determinant) -> usize {
        ((self.bits ^ other.bits).count_ones() / 2) as usize
    }

    /// Spin-resolved particle counts `(n_up, n_down)`.
    pub fn spin_counts(self) -> (usize, usize) {
        let mut up = 0;
        let mut down = 0;
        for p in self.occupied_list() {
            if p % 2 == 0 {
                up += 1;
            } else {
                down += 1;
            }
        }
        (up, down)
    }

    /// Sum of momentum labels of the occupied orbitals, reduced mod `sites`.
    pub fn total_bloch(self, sites: usize) -> usize {
        let mut t = 0;
        for p in self.occupied_list() {
            t += p / 2;
        }
        t % sites
    }

    /// Human-readable orbital string like `|0u 0d 1u>`.
    pub fn label(self) -> String {
        let orbs: Vec<String> = self
            .occupied_list()
            .into_iter()
            .map(|p| SpinOrbital::from_flat(p).to_string())
            .collect();
        format!("|{}>", orbs.join(" "))
    }
}

impl fmt::Display for Determinant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Symmetry sector of fixed magnetization and total Bloch number.
///
/// The magnetization is stored doubled (`two_m = N_up - N_down`) so that
/// half-integer values stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SectorLabel {
    pub two_m: i64,
    pub bloch: usize,
}

impl SectorLabel {
    pub fn new(two_m: i64, bloch: usize) -> SectorLabel {
        SectorLabel { two_m, bloch }
    }

    pub fn magnetization(&self) -> f64 {
        self.two_m as f64 / 2.0
    }

    pub fn matches(&self, det: Determinant, sites: usize) -> bool {
        let (up, down) = det.spin_counts();
        up as i64 - down as i64 == self.two_m && det.total_bloch(sites) == self.bloch
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(m={}/2, T={})", self.two_m, self.bloch)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FockError {
    #[error("particle count {n} exceeds the {orbitals} available spin-orbitals")]
    TooManyParticles { n: usize, orbitals: usize },
    #[error("site count must be at least 1")]
    NoSites,
}

/// All `C(2L, N)` determinants of `N` particles on `2L` spin-orbitals, in
/// ascending bit-pattern order (deterministic).
pub fn enumerate_determinants(n: usize, sites: usize) -> Result<Vec<Determinant>, FockError> {
    if sites == 0 {
        return Err(FockError::NoSites);
    }
    let orbitals = 2 * sites;
    assert!(orbitals <= 63, "spin-orbital count exceeds bit-pattern width");
    if n > orbitals {
        return Err(FockError::TooManyParticles { n, orbitals });
    }
    if n == 0 {
        return Ok(vec![Determinant::from_bits(0)]);
    }
    let mut out = Vec::new();
    // Gosper's hack walks same-popcount patterns in ascending numeric order,
    // which is the fixed basis ordering.
    let limit = 1u64 << orbitals;
    let mut v: u64 = (1u64 << n) - 1;
    while v < limit {
        out.push(Determinant::from_bits(v));
        let t = v | (v - 1);
        v = (t + 1) | (((!t & t.wrapping_add(1)) - 1) >> (v.trailing_zeros() + 1));
    }
    Ok(out)
}

/// Keep the determinants matching a sector label, preserving input order.
pub fn sector_filter(dets: &[Determinant], label: SectorLabel, sites: usize) -> Vec<Determinant> {
    dets.iter()
        .copied()
        .filter(|d| label.matches(*d, sites))
        .collect()
}

/// Group a basis by sector label. Used for block-structure checks.
pub fn sector_partition(
    dets: &[Determinant],
    sites: usize,
) -> Vec<(SectorLabel, Vec<Determinant>)> {
    let mut groups: Vec<(SectorLabel, Vec<Determinant>)> = Vec::new();
    for &d in dets {
        let (up, down) = d.spin_counts();
        let label = SectorLabel::new(up as i64 - down as i64, d.total_bloch(sites));
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(d),
            None => groups.push((label, vec![d])),
        }
    }
    groups.sort_by_key(|(l, _)| (l.two_m, l.bloch));
    groups
}

/// Apply `a†_create a_annihilate` to a determinant.
///
/// Returns `None` when the annihilation orbital is empty or the creation
/// orbital is already occupied (for `create != annihilate`). Otherwise the
/// resulting determinant together with the fermionic sign
/// `(-1)^(occupied orbitals strictly between the two positions)`.
pub fn apply_excitation(
    det: Determinant,
    create: usize,
    annihilate: usize,
) -> Option<(Determinant, i32)> {
    if !det.occupied(annihilate) {
        return None;
    }
    if create == annihilate {
        return Some((det, 1));
    }
    if det.occupied(create) {
        return None;
    }
    let sign = if det.count_between(create, annihilate) % 2 == 0 {
        1
    } else {
        -1
    };
    let bits = (det.bits() & !(1u64 << annihilate)) | (1u64 << create);
    Some((Determinant::from_bits(bits), sign))
}

/// Apply a bare annihilation operator, with the ordered-product sign.
pub fn annihilate(det: Determinant, flat: usize) -> Option<(Determinant, i32)> {
    if !det.occupied(flat) {
        return None;
    }
    let sign = if det.count_below(flat) % 2 == 0 { 1 } else { -1 };
    Some((Determinant::from_bits(det.bits() & !(1u64 << flat)), sign))
}

/// Apply a bare creation operator, with the ordered-product sign.
pub fn create(det: Determinant, flat: usize) -> Option<(Determinant, i32)> {
    if det.occupied(flat) {
        return None;
    }
    let sign = if det.count_below(flat) % 2 == 0 { 1 } else { -1 };
    Some((Determinant::from_bits(det.bits() | (1u64 << flat)), sign))
}

/// Overlap `<det_a[C]|det_b>` between a determinant built from the columns of
/// an orbital matrix `C` (in the reference basis) and a reference-basis
/// determinant: the minor determinant of `C†` over the two occupation lists.
pub fn frame_determinant_overlap(c: &CMatrix, det_a: Determinant, det_b: Determinant) -> Complex64 {
    let rows = det_a.occupied_list();
    let cols = det_b.occupied_list();
    debug_assert_eq!(rows.len(), cols.len());
    let n = rows.len();
    let mut minor = CMatrix::zeros(n, n);
    for (i, &a) in rows.iter().enumerate() {
        for (j, &b) in cols.iter().enumerate() {
            minor[(i, j)] = c[(b, a)].conj();
        }
    }
    crate::linalg::det_small(&minor)
}

/// Re-expand a CI state over determinants of the orbital frame `C`.
///
/// `basis` must be closed under the frame change (a full space, or a symmetry
/// sector with a sector-preserving `C`). The transformation between the two
/// determinant bases is unitary, so the norm is preserved.
pub fn rotate_ci_state(psi: &[Complex64], basis: &[Determinant], c: &CMatrix) -> Vec<Complex64> {
    basis
        .iter()
        .map(|&a| {
            basis
                .iter()
                .zip(psi.iter())
                .map(|(&b, &cb)| frame_determinant_overlap(c, a, b) * cb)
                .sum()
        })
        .collect()
}
