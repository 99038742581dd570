//! Generalized Pauli constraints: polytope distances, pinning detection,
//! constraint-operator moments, and the perturbation-response bound.
//!
//! A constraint is the affine functional `D(n) = kappa0 + sum_i kappa_i n_i`
//! with integer coefficients over occupation slots. Replacing each occupation
//! by its number operator yields `D_hat`, for which every determinant over
//! the same orbitals is an eigenvector with an integer eigenvalue; pinning
//! (`D(n) = 0`) is equivalent to `D_hat |Psi> = 0`.

use num_complex::Complex64;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::fock::Determinant;
use crate::linalg::{eigh, hermiticity_error, CMatrix, CVector};
use crate::sector_map::{rational_to_f64, SymmetryConstraintSet};

#[derive(Debug, Error)]
pub enum GpcError {
    #[error("constraint has {slots} slots but the orbital map provides {map}")]
    DimensionMismatch { slots: usize, map: usize },
    #[error("energy gap {gap:.3e} below tolerance {tol:.1e}; ground state degenerate or nearly so")]
    GapTooSmall { gap: f64, tol: f64 },
    #[error("perturbation is not Hermitian (deviation {dev:.3e})")]
    NonHermitianPerturbation { dev: f64 },
    #[error("matrix dimension {h} does not match perturbation dimension {v}")]
    MatrixSizeMismatch { h: usize, v: usize },
}

/// Affine occupation functional with integer coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub kappa0: i64,
    pub kappa: Vec<i64>,
    pub label: String,
    /// Divisor turning the raw integer combination into the distance
    /// normalized to 1 over the relevant polytope.
    pub normalization: i64,
}

impl Constraint {
    pub fn new(label: &str, kappa0: i64, kappa: Vec<i64>, normalization: i64) -> Constraint {
        assert!(normalization > 0);
        Constraint {
            kappa0,
            kappa,
            label: label.to_string(),
            normalization,
        }
    }

    /// Raw distance `kappa0 + sum_i kappa_i n_i`.
    pub fn evaluate(&self, n: &[f64]) -> f64 {
        assert_eq!(n.len(), self.kappa.len(), "slot count mismatch");
        self.kappa0 as f64
            + self
                .kappa
                .iter()
                .zip(n.iter())
                .map(|(&k, &x)| k as f64 * x)
                .sum::<f64>()
    }

    /// Distance divided by the stored normalization.
    pub fn evaluate_normalized(&self, n: &[f64]) -> f64 {
        self.evaluate(n) / self.normalization as f64
    }

    /// Integer eigenvalue of `D_hat` on a determinant whose slot `i` lives at
    /// flat position `orbital_map[i]`.
    pub fn determinant_eigenvalue(&self, det: Determinant, orbital_map: &[usize]) -> i64 {
        debug_assert_eq!(orbital_map.len(), self.kappa.len());
        self.kappa0
            + self
                .kappa
                .iter()
                .zip(orbital_map.iter())
                .map(|(&k, &p)| if det.occupied(p) { k } else { 0 })
                .sum::<i64>()
    }
}

/// A labelled family of constraints.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn by_label(&self, label: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.label == label)
    }
}

/// The rank-six three-fermion constraint family over slots ordered by
/// descending occupation: the facet `2 - n1 - n2 - n4 >= 0`, the three pair
/// saturations `n_k + n_{7-k} = 1` as inequality pairs, the Pauli box, and
/// the ordering chain.
pub fn borland_dennis_constraints() -> ConstraintSet {
    let mut constraints = Vec::new();
    constraints.push(Constraint::new("bd_facet", 2, vec![-1, -1, 0, -1, 0, 0], 2));
    for k in 0..3usize {
        let mut up = vec![0i64; 6];
        up[k] = -1;
        up[5 - k] = -1;
        constraints.push(Constraint::new(&format!("pair{}_le", k + 1), 1, up.clone(), 1));
        let down: Vec<i64> = up.iter().map(|&x| -x).collect();
        constraints.push(Constraint::new(&format!("pair{}_ge", k + 1), -1, down, 1));
    }
    for i in 0..6usize {
        let mut k = vec![0i64; 6];
        k[i] = -1;
        constraints.push(Constraint::new(&format!("pauli_upper{}", i + 1), 1, k.clone(), 1));
        let mut k = vec![0i64; 6];
        k[i] = 1;
        constraints.push(Constraint::new(&format!("pauli_lower{}", i + 1), 0, k, 1));
    }
    for i in 0..5usize {
        let mut k = vec![0i64; 6];
        k[i] = 1;
        k[i + 1] = -1;
        constraints.push(Constraint::new(&format!("order{}{}", i + 1, i + 2), 0, k, 1));
    }
    ConstraintSet { constraints }
}

/// Sector functionals as integer constraints over the full flat-orbital
/// occupation vector. The raw value is `denominator * d_j(n)`; the stored
/// normalization recovers the unit-normalized distance.
pub fn constraints_from_sector_map(set: &SymmetryConstraintSet) -> ConstraintSet {
    let denom = set
        .denominator
        .to_string()
        .parse::<i64>()
        .expect("small denominator");
    let constraints = (0..set.dim())
        .map(|j| {
            let (coeff, constant) = set.functional(j);
            let kappa: Vec<i64> = coeff
                .iter()
                .map(|c| {
                    (c * num_bigint::BigInt::from(denom))
                        .to_integer()
                        .to_string()
                        .parse::<i64>()
                        .unwrap()
                })
                .collect();
            let kappa0 = (constant * num_bigint::BigInt::from(denom))
                .to_integer()
                .to_string()
                .parse::<i64>()
                .unwrap();
            Constraint::new(&format!("d{}", j + 1), kappa0, kappa, denom)
        })
        .collect();
    ConstraintSet { constraints }
}

/// Moments of the constraint operator on a CI state:
/// `<D_hat> = sum_a |c_a|^2 kappa_a` and `<D_hat^2> = sum_a |c_a|^2 kappa_a^2`.
/// The basis determinants must be expressed over the orbitals the constraint
/// slots refer to (via `orbital_map`).
pub fn constraint_operator_expectations(
    constraint: &Constraint,
    psi: &[Complex64],
    basis: &[Determinant],
    orbital_map: &[usize],
) -> Result<(f64, f64), GpcError> {
    if orbital_map.len() != constraint.kappa.len() {
        return Err(GpcError::DimensionMismatch {
            slots: constraint.kappa.len(),
            map: orbital_map.len(),
        });
    }
    if psi.len() != basis.len() {
        return Err(GpcError::DimensionMismatch {
            slots: basis.len(),
            map: psi.len(),
        });
    }
    let mut first = 0.0;
    let mut second = 0.0;
    for (det, amp) in basis.iter().zip(psi.iter()) {
        let w = amp.norm_sqr();
        if w == 0.0 {
            continue;
        }
        let k = constraint.determinant_eigenvalue(*det, orbital_map) as f64;
        first += w * k;
        second += w * k * k;
    }
    Ok((first, second))
}

/// Tolerances for pinning classification.
#[derive(Debug, Clone, Copy)]
pub struct PinningTolerances {
    pub pin_tol: f64,
    pub quasi_tol: f64,
}

impl Default for PinningTolerances {
    fn default() -> Self {
        PinningTolerances {
            pin_tol: 1e-10,
            quasi_tol: 1e-4,
        }
    }
}

/// State context for operator moments inside a pinning report.
pub struct StateContext<'a> {
    pub psi: &'a [Complex64],
    pub basis: &'a [Determinant],
    pub orbital_map: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct PinningEntry {
    pub label: String,
    pub distance: f64,
    pub normalized: f64,
    pub pinned: bool,
    pub quasipinned: bool,
    pub d2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PinningReport {
    pub entries: Vec<PinningEntry>,
    pub pin_tol: f64,
    pub quasi_tol: f64,
}

/// Distances of an occupation spectrum to every constraint of a set, with
/// pinning flags and, when a state is supplied, the second moment of each
/// constraint operator. Entries are ordered by label.
pub fn pinning_report(
    n: &[f64],
    set: &ConstraintSet,
    state: Option<&StateContext<'_>>,
    tols: PinningTolerances,
) -> Result<PinningReport, GpcError> {
    assert!(tols.pin_tol <= tols.quasi_tol);
    let mut entries = Vec::with_capacity(set.len());
    for c in &set.constraints {
        let distance = c.evaluate(n);
        let d2 = match state {
            Some(ctx) => {
                Some(constraint_operator_expectations(c, ctx.psi, ctx.basis, ctx.orbital_map)?.1)
            }
            None => None,
        };
        entries.push(PinningEntry {
            label: c.label.clone(),
            distance,
            normalized: distance / c.normalization as f64,
            pinned: distance.abs() < tols.pin_tol,
            quasipinned: distance.abs() < tols.quasi_tol,
            d2,
        });
    }
    entries.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(PinningReport {
        entries,
        pin_tol: tols.pin_tol,
        quasi_tol: tols.quasi_tol,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ResponseOptions {
    pub gap_tol: f64,
    /// Absolute slack allowed on the Richardson first-order coefficient.
    pub first_order_tol: f64,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        ResponseOptions {
            gap_tol: 1e-8,
            first_order_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResponsePoint {
    pub lambda: f64,
    pub d_exact: f64,
    /// `d0 + 2 lambda gamma_V sqrt(<D^2>)`.
    pub bound_linear: f64,
    /// First-order coefficient from two-point Richardson extrapolation over
    /// `(lambda, lambda/2)`.
    pub first_order: f64,
    /// Quadratic coefficient fitted from the same stencil.
    pub quad_coeff: f64,
    /// The measured first-order response respects the analytic bound and the
    /// exact distance stays under the linear bound within quadratic slack.
    pub bound_holds: bool,
}

#[derive(Debug, Clone)]
pub struct ResponseTable {
    pub constraint_label: String,
    pub d0: f64,
    pub d2_expect: f64,
    pub gap: f64,
    pub cov_v: f64,
    pub gamma_v: f64,
    pub points: Vec<ResponsePoint>,
}

fn ground_state(h: &CMatrix) -> (f64, f64, CVector) {
    let (vals, vecs) = eigh(h);
    (vals[0], vals[1], CVector::from(vecs.column(0)))
}

fn occupations_of_state(psi: &CVector, basis: &[Determinant], norb: usize) -> Vec<f64> {
    let mut n = vec![0.0; norb];
    for (det, amp) in basis.iter().zip(psi.iter()) {
        let w = amp.norm_sqr();
        for p in det.occupied_list() {
            n[p] += w;
        }
    }
    n
}

/// Response of a constraint distance to the perturbation `H + lambda V`.
///
/// Valid for bases whose one-body matrix stays diagonal under superposition
/// (symmetry sectors with pairwise separation two), where the occupation
/// spectrum is the amplitude-weighted determinant occupation. For each
/// lambda the exact distance from diagonalizing the perturbed matrix is
/// compared against `d(0) + 2 lambda gamma_V sqrt(<D^2>)` with
/// `gamma_V = sqrt(Cov(V)) / gap`.
pub fn perturbation_response(
    h: &CMatrix,
    v: &CMatrix,
    constraint: &Constraint,
    basis: &[Determinant],
    orbital_map: &[usize],
    lambdas: &[f64],
    opts: &ResponseOptions,
) -> Result<ResponseTable, GpcError> {
    if h.nrows() != v.nrows() {
        return Err(GpcError::MatrixSizeMismatch {
            h: h.nrows(),
            v: v.nrows(),
        });
    }
    let dev = hermiticity_error(v);
    if dev > 1e-10 {
        return Err(GpcError::NonHermitianPerturbation { dev });
    }
    if orbital_map.len() != constraint.kappa.len() {
        return Err(GpcError::DimensionMismatch {
            slots: constraint.kappa.len(),
            map: orbital_map.len(),
        });
    }

    let (e0, e1, psi0) = ground_state(h);
    let gap = e1 - e0;
    if gap < opts.gap_tol {
        return Err(GpcError::GapTooSmall {
            gap,
            tol: opts.gap_tol,
        });
    }

    let v_psi = v * &psi0;
    let v_mean = psi0.dotc(&v_psi).re;
    let v2_mean = v_psi.dotc(&v_psi).re;
    let cov_v = (v2_mean - v_mean * v_mean).max(0.0);
    let gamma_v = cov_v.sqrt() / gap;

    let norb = orbital_map
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max(basis.iter().map(|d| d.occupied_list().last().copied().unwrap_or(0)).max().unwrap_or(0))
        + 1;
    let d_at = |lambda: f64| -> f64 {
        let perturbed = h + v.scale(lambda);
        let (_, _, psi) = ground_state(&perturbed);
        let n_full = occupations_of_state(&psi, basis, norb);
        let n_slots: Vec<f64> = orbital_map.iter().map(|&p| n_full[p]).collect();
        constraint.evaluate(&n_slots)
    };

    let d0 = d_at(0.0);
    let psi0_slice: Vec<Complex64> = psi0.iter().copied().collect();
    let (_, d2_expect) =
        constraint_operator_expectations(constraint, &psi0_slice, basis, orbital_map)?;

    let points = lambdas
        .iter()
        .map(|&lambda| {
            let d_exact = d_at(lambda);
            let d_half = d_at(lambda / 2.0);
            let first_order = (4.0 * d_half - d_exact - 3.0 * d0) / lambda;
            let quad_coeff = 2.0 * (d_exact - 2.0 * d_half + d0) / (lambda * lambda);
            let bound_linear = d0 + 2.0 * lambda * gamma_v * d2_expect.sqrt();
            let first_order_ok =
                first_order <= 2.0 * gamma_v * d2_expect.sqrt() + opts.first_order_tol;
            let chain_ok = d_exact <= bound_linear + quad_coeff.abs() * lambda * lambda + 1e-9;
            ResponsePoint {
                lambda,
                d_exact,
                bound_linear,
                first_order,
                quad_coeff,
                bound_holds: first_order_ok && chain_ok,
            }
        })
        .collect();

    Ok(ResponseTable {
        constraint_label: constraint.label.clone(),
        d0,
        d2_expect,
        gap,
        cov_v,
        gamma_v,
        points,
    })
}

/// Independent response trials over a batch of perturbations, parallel when
/// the feature is enabled.
pub fn perturbation_response_batch(
    h: &CMatrix,
    vs: &[CMatrix],
    constraint: &Constraint,
    basis: &[Determinant],
    orbital_map: &[usize],
    lambdas: &[f64],
    opts: &ResponseOptions,
) -> Result<Vec<ResponseTable>, GpcError> {
    #[cfg(feature = "parallel")]
    {
        vs.par_iter()
            .map(|v| perturbation_response(h, v, constraint, basis, orbital_map, lambdas, opts))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        vs.iter()
            .map(|v| perturbation_response(h, v, constraint, basis, orbital_map, lambdas, opts))
            .collect()
    }
}

/// Slope of `log |d(lambda) - d0|` against `log lambda` by least squares.
pub fn log_log_slope(lambdas: &[f64], deviations: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(deviations.iter())
        .filter(|(_, &d)| d > 0.0)
        .map(|(&l, &d)| (l.ln(), d.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Evaluate every sector functional on a labeled occupation vector.
pub fn sector_distances(set: &SymmetryConstraintSet, n: &[f64]) -> Vec<f64> {
    (0..set.dim())
        .map(|j| {
            set.inverse[j]
                .iter()
                .zip(set.slots.iter())
                .map(|(r, slot)| {
                    let x = match slot {
                        crate::sector_map::RowLabel::Occupation(p) => n[*p],
                        crate::sector_map::RowLabel::Normalization => 1.0,
                    };
                    rational_to_f64(r) * x
                })
                .sum()
        })
        .collect()
}
