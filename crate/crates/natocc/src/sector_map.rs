//! The symmetry-adapted amplitude/occupation linear map and its exact inverse.
//!
//! Within a symmetry sector whose determinants pairwise differ by at least
//! two spin-orbitals, the one-body matrix of every member state is diagonal,
//! so the occupations are linear in the squared CI amplitudes: `M f = n`.
//! When the number of determinants matches the number of independent
//! occupations (possibly after appending the normalization row `sum f = 1`),
//! `M` is invertible and its inverse assigns to each determinant an affine
//! occupation functional `d_j(n)` with `d_j(n(f)) = f_j` identically. All of
//! this is done in exact rational arithmetic; floating point enters only when
//! a functional is evaluated on a numeric spectrum.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::fock::Determinant;

#[derive(Debug, Error)]
pub enum SectorMapError {
    #[error("determinants {a} and {b} differ by a single orbital; not a symmetry-adapted sector")]
    SectorOverlapViolation { a: String, b: String },
    #[error("sum rule over orbitals {orbitals:?} does not hold on determinant {det}")]
    InvalidSumRule { orbitals: Vec<usize>, det: String },
    #[error(
        "map cannot be square: {dets} determinants vs {slots} independent occupations \
         (normalization row included); consider truncating the basis by pinning"
    )]
    NotSquare { dets: usize, slots: usize },
    #[error("amplitude map is singular for every admissible elimination choice")]
    Singular,
    #[error("occupation vector violates a sector sum rule by {dev:.3e}")]
    SumRuleViolation { dev: f64 },
    #[error("occupations lie outside the sector polytope: f_{index} = {value:.3e} < 0")]
    OutOfSectorPolytope { index: usize, value: f64 },
    #[error("empty sector basis")]
    EmptyBasis,
}

/// Linear relation `sum_{p in orbitals} n_p = total` that holds on every
/// determinant of the sector. One occupation per rule is dependent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumRule {
    pub orbitals: Vec<usize>,
    pub total: i64,
}

impl SumRule {
    pub fn new(orbitals: Vec<usize>, total: i64) -> SumRule {
        SumRule { orbitals, total }
    }

    fn holds_on(&self, det: Determinant) -> bool {
        let sum: i64 = self
            .orbitals
            .iter()
            .map(|&p| if det.occupied(p) { 1 } else { 0 })
            .sum();
        sum == self.total
    }
}

/// Row meaning in the amplitude map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLabel {
    /// Occupation of a flat spin-orbital index.
    Occupation(usize),
    /// The normalization row `sum_j f_j = 1`.
    Normalization,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::Occupation(p) => write!(f, "n({})", crate::fock::SpinOrbital::from_flat(*p)),
            RowLabel::Normalization => write!(f, "norm"),
        }
    }
}

/// Square integer map from squared amplitudes to independent occupations.
#[derive(Debug, Clone)]
pub struct AmplitudeMap {
    /// Entries in {0,1}; the optional normalization row is all ones.
    pub matrix: Vec<Vec<i64>>,
    pub row_labels: Vec<RowLabel>,
    pub col_labels: Vec<Determinant>,
    pub sum_rules: Vec<SumRule>,
    pub includes_normalization_row: bool,
    /// Flat indices eliminated, one per sum rule (map metadata: the
    /// elimination choice is a convention, not fixed by the construction).
    pub eliminated: Vec<usize>,
    /// Occupations that are constant across the sector, with their values.
    pub fixed_slots: Vec<(usize, i64)>,
    pub norb: usize,
}

impl AmplitudeMap {
    pub fn dim(&self) -> usize {
        self.col_labels.len()
    }

    /// Full occupation vector (all `norb` slots) for squared amplitudes `f`.
    pub fn occupations_from_amplitudes(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.dim());
        let mut n = vec![0.0; self.norb];
        for (det, &fa) in self.col_labels.iter().zip(f.iter()) {
            for p in det.occupied_list() {
                n[p] += fa;
            }
        }
        n
    }

    /// `M f` over the map's own rows (including the normalization row).
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(f.iter()).map(|(&m, &x)| m as f64 * x).sum())
            .collect()
    }
}

/// Affine occupation functionals `d_j(n)`, the exact inverse of an
/// [`AmplitudeMap`]. Coefficients are rationals; `numerators` and
/// `denominator` expose the same data as an integer matrix over a common
/// denominator.
#[derive(Debug, Clone)]
pub struct SymmetryConstraintSet {
    pub col_labels: Vec<Determinant>,
    /// Inverse-matrix columns: one per map row (occupation slot or norm row).
    pub slots: Vec<RowLabel>,
    pub inverse: Vec<Vec<BigRational>>,
    pub numerators: Vec<Vec<BigInt>>,
    pub denominator: BigInt,
    pub sum_rules: Vec<SumRule>,
    pub fixed_slots: Vec<(usize, i64)>,
    pub norb: usize,
}

impl SymmetryConstraintSet {
    pub fn dim(&self) -> usize {
        self.col_labels.len()
    }

    /// Coefficient of `d_j` on each occupation slot, plus the affine constant
    /// (contribution of the normalization row).
    pub fn functional(&self, j: usize) -> (Vec<BigRational>, BigRational) {
        let mut coeff = vec![BigRational::zero(); self.norb];
        let mut constant = BigRational::zero();
        for (slot, value) in self.slots.iter().zip(self.inverse[j].iter()) {
            match slot {
                RowLabel::Occupation(p) => coeff[*p] += value.clone(),
                RowLabel::Normalization => constant += value.clone(),
            }
        }
        (coeff, constant)
    }

    /// Evaluate `d_j` on a full occupation vector.
    pub fn evaluate(&self, j: usize, n: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (slot, value) in self.slots.iter().zip(self.inverse[j].iter()) {
            let x = match slot {
                RowLabel::Occupation(p) => n[*p],
                RowLabel::Normalization => 1.0,
            };
            acc += rational_to_f64(value) * x;
        }
        acc
    }

    /// Check the sector sum rules and fixed slots on `n`, then evaluate every
    /// functional: `f_j = d_j(n)`.
    pub fn amplitudes_from_occupations(&self, n: &[f64]) -> Result<Vec<f64>, SectorMapError> {
        for rule in &self.sum_rules {
            let sum: f64 = rule.orbitals.iter().map(|&p| n[p]).sum();
            let dev = (sum - rule.total as f64).abs();
            if dev > 1e-10 {
                return Err(SectorMapError::SumRuleViolation { dev });
            }
        }
        for &(p, value) in &self.fixed_slots {
            let dev = (n[p] - value as f64).abs();
            if dev > 1e-10 {
                return Err(SectorMapError::SumRuleViolation { dev });
            }
        }
        let f: Vec<f64> = (0..self.dim()).map(|j| self.evaluate(j, n)).collect();
        for (index, &value) in f.iter().enumerate() {
            if value < -1e-10 {
                return Err(SectorMapError::OutOfSectorPolytope { index, value });
            }
        }
        debug_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Ok(f)
    }
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    // Entries here are small (denominators of a 0/1 matrix inverse).
    let numer = r.numer().to_string().parse::<f64>().unwrap();
    let denom = r.denom().to_string().parse::<f64>().unwrap();
    numer / denom
}

fn bigint_gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let mut a = a.abs();
    let mut b = b.abs();
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

fn bigint_lcm(a: &BigInt, b: &BigInt) -> BigInt {
    if a.is_zero() || b.is_zero() {
        return BigInt::zero();
    }
    (a / bigint_gcd(a, b)) * b
}

/// Exact inverse of a square rational matrix by Gauss-Jordan elimination.
/// Returns `None` when singular.
pub fn invert_rational(matrix: &[Vec<BigRational>]) -> Option<Vec<Vec<BigRational>>> {
    let n = matrix.len();
    let mut work: Vec<Vec<BigRational>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n, "matrix must be square");
            let mut extended = row.clone();
            extended.extend((0..n).map(|j| {
                if i == j {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }));
            extended
        })
        .collect();

    for col in 0..n {
        let pivot = (col..n).find(|&r| !work[r][col].is_zero())?;
        work.swap(col, pivot);
        let p = work[col][col].clone();
        for x in work[col].iter_mut() {
            *x /= p.clone();
        }
        for r in 0..n {
            if r == col || work[r][col].is_zero() {
                continue;
            }
            let factor = work[r][col].clone();
            for k in 0..2 * n {
                let delta = &factor * &work[col][k];
                work[r][k] -= delta;
            }
        }
    }
    Some(work.into_iter().map(|row| row[n..].to_vec()).collect())
}

fn check_pairwise_separation(basis: &[Determinant]) -> Result<(), SectorMapError> {
    for (i, a) in basis.iter().enumerate() {
        for b in &basis[i + 1..] {
            if a.excitation_rank(*b) < 2 {
                return Err(SectorMapError::SectorOverlapViolation {
                    a: a.to_string(),
                    b: b.to_string(),
                });
            }
        }
    }
    Ok(())
}

fn try_build(
    basis: &[Determinant],
    sum_rules: &[SumRule],
    eliminated: &[usize],
    norb: usize,
) -> Result<AmplitudeMap, SectorMapError> {
    let dets = basis.len();
    let mut rows: Vec<(usize, Vec<i64>)> = Vec::new();
    let mut fixed: Vec<(usize, i64)> = Vec::new();
    for p in 0..norb {
        if eliminated.contains(&p) {
            continue;
        }
        let row: Vec<i64> = basis
            .iter()
            .map(|d| if d.occupied(p) { 1 } else { 0 })
            .collect();
        if row.iter().all(|&x| x == row[0]) {
            // Constant across the sector: not an independent occupation.
            fixed.push((p, row[0]));
        } else {
            rows.push((p, row));
        }
    }

    let need_norm = match (rows.len(), dets) {
        (r, d) if r == d => false,
        (r, d) if r + 1 == d => true,
        (r, _) => {
            return Err(SectorMapError::NotSquare {
                dets,
                slots: r + 1,
            })
        }
    };

    let mut matrix: Vec<Vec<i64>> = rows.iter().map(|(_, row)| row.clone()).collect();
    let mut row_labels: Vec<RowLabel> = rows
        .iter()
        .map(|(p, _)| RowLabel::Occupation(*p))
        .collect();
    if need_norm {
        matrix.push(vec![1; dets]);
        row_labels.push(RowLabel::Normalization);
    }

    let rational: Vec<Vec<BigRational>> = matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|&x| BigRational::from_integer(BigInt::from(x)))
                .collect()
        })
        .collect();
    if invert_rational(&rational).is_none() {
        return Err(SectorMapError::Singular);
    }

    Ok(AmplitudeMap {
        matrix,
        row_labels,
        col_labels: basis.to_vec(),
        sum_rules: sum_rules.to_vec(),
        includes_normalization_row: need_norm,
        eliminated: eliminated.to_vec(),
        fixed_slots: fixed,
        norb,
    })
}

/// Build the amplitude map for an explicit set of sum rules.
///
/// The default elimination drops the highest flat index of each rule; when
/// that choice yields a singular map, all single-index elimination choices
/// are retried in deterministic order before failing.
pub fn build_amplitude_map_with_rules(
    basis: &[Determinant],
    sum_rules: &[SumRule],
    norb: usize,
) -> Result<AmplitudeMap, SectorMapError> {
    if basis.is_empty() {
        return Err(SectorMapError::EmptyBasis);
    }
    check_pairwise_separation(basis)?;
    for rule in sum_rules {
        for det in basis {
            if !rule.holds_on(*det) {
                return Err(SectorMapError::InvalidSumRule {
                    orbitals: rule.orbitals.clone(),
                    det: det.to_string(),
                });
            }
        }
    }

    // Candidate eliminations per rule, highest flat index first.
    let choices: Vec<Vec<usize>> = sum_rules
        .iter()
        .map(|rule| {
            let mut orbs = rule.orbitals.clone();
            orbs.sort_unstable_by(|a, b| b.cmp(a));
            orbs
        })
        .collect();

    let mut selection: Vec<usize> = vec![0; choices.len()];
    let mut first_failure: Option<SectorMapError> = None;
    loop {
        let eliminated: Vec<usize> = choices
            .iter()
            .zip(selection.iter())
            .map(|(c, &i)| c[i])
            .collect();
        // Two rules eliminating the same orbital is not a valid choice.
        let distinct = eliminated
            .iter()
            .enumerate()
            .all(|(i, p)| !eliminated[..i].contains(p));
        if distinct {
            match try_build(basis, sum_rules, &eliminated, norb) {
                Ok(map) => return Ok(map),
                Err(e) => {
                    if first_failure.is_none() {
                        first_failure = Some(e);
                    }
                }
            }
        }
        // Advance the mixed-radix selection; stop after the last combination.
        let mut i = 0;
        loop {
            if i == selection.len() {
                return Err(first_failure.unwrap_or(SectorMapError::Singular));
            }
            selection[i] += 1;
            if selection[i] < choices[i].len() {
                break;
            }
            selection[i] = 0;
            i += 1;
        }
    }
}

/// Amplitude map for a lattice sector: the two sum rules are the spin-channel
/// fillings `sum_i n_{i,up} = N_up` and `sum_i n_{i,down} = N_down`, read off
/// the first determinant.
pub fn build_amplitude_map(
    basis: &[Determinant],
    sites: usize,
) -> Result<AmplitudeMap, SectorMapError> {
    if basis.is_empty() {
        return Err(SectorMapError::EmptyBasis);
    }
    let (n_up, n_down) = basis[0].spin_counts();
    let up_rule = SumRule::new((0..sites).map(|i| 2 * i).collect(), n_up as i64);
    let down_rule = SumRule::new((0..sites).map(|i| 2 * i + 1).collect(), n_down as i64);
    build_amplitude_map_with_rules(basis, &[up_rule, down_rule], 2 * sites)
}

/// Exact inverse of the amplitude map as a set of occupation functionals.
pub fn invert_map(map: &AmplitudeMap) -> Result<SymmetryConstraintSet, SectorMapError> {
    let rational: Vec<Vec<BigRational>> = map
        .matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|&x| BigRational::from_integer(BigInt::from(x)))
                .collect()
        })
        .collect();
    let inverse = invert_rational(&rational).ok_or(SectorMapError::Singular)?;

    // Round trip must be the exact identity.
    let n = inverse.len();
    for i in 0..n {
        for j in 0..n {
            let mut acc = BigRational::zero();
            for k in 0..n {
                acc += &inverse[i][k] * &rational[k][j];
            }
            let expect = if i == j {
                BigRational::one()
            } else {
                BigRational::zero()
            };
            assert_eq!(acc, expect, "rational inversion round trip failed");
        }
    }

    let mut denominator = BigInt::one();
    for row in &inverse {
        for x in row {
            denominator = bigint_lcm(&denominator, x.denom());
        }
    }
    let numerators: Vec<Vec<BigInt>> = inverse
        .iter()
        .map(|row| row.iter().map(|x| (x * &denominator).to_integer()).collect())
        .collect();

    Ok(SymmetryConstraintSet {
        col_labels: map.col_labels.clone(),
        slots: map.row_labels.clone(),
        inverse,
        numerators,
        denominator,
        sum_rules: map.sum_rules.clone(),
        fixed_slots: map.fixed_slots.clone(),
        norb: map.norb,
    })
}

/// The translation-invariant three-particle rank-six space: determinant
/// strings 123, 145, 246, 356 over abstract orbitals 1..6 (flats 0..5), with
/// the three pairing rules `n_k + n_{7-k} = 1`.
pub fn borland_dennis_space() -> (Vec<Determinant>, Vec<SumRule>) {
    let dets = vec![
        Determinant::from_occupied(&[0, 1, 2]), // |123>
        Determinant::from_occupied(&[0, 3, 4]), // |145>
        Determinant::from_occupied(&[1, 3, 5]), // |246>
        Determinant::from_occupied(&[2, 4, 5]), // |356>
    ];
    let rules = vec![
        SumRule::new(vec![0, 5], 1),
        SumRule::new(vec![1, 4], 1),
        SumRule::new(vec![2, 3], 1),
    ];
    (dets, rules)
}

/// Column permutation aligning the lexicographic determinant order of the
/// (N=3, L=4, m=1/2, T=1) sector with the listing order of the
/// golden tables in the test suite: golden column `j` is our column `PERM[j]`.
pub const HUBBARD34_GOLDEN_PERM: [usize; 6] = [0, 2, 1, 4, 5, 3];
