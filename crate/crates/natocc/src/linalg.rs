//! Thin dense-matrix helpers shared across the crate.
//!
//! Everything in this crate lives at desk scale (matrix dimensions up to a
//! few hundred), so we use pure-Rust dense routines throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Hermitian eigendecomposition with eigenpairs sorted by ascending
/// eigenvalue. The input is symmetrized first so callers can pass matrices
/// that are Hermitian only to rounding.
pub fn eigh(matrix: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "eigh needs a square matrix");
    let herm = (matrix + matrix.adjoint()).scale(0.5);
    let se = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Hermiticity deviation `max |A - A†|`.
pub fn hermiticity_error(matrix: &CMatrix) -> f64 {
    let d = matrix - matrix.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unitarity deviation `max |C†C - 1|`.
pub fn unitarity_error(matrix: &CMatrix) -> f64 {
    let n = matrix.ncols();
    let d = matrix.adjoint() * matrix - CMatrix::identity(n, n);
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Closest unitary matrix in Frobenius norm (polar projection via SVD).
pub fn polar_unitary(matrix: &CMatrix) -> CMatrix {
    let svd = matrix.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    u * v_t
}

/// Determinant of a small dense complex matrix by Gaussian elimination with
/// partial pivoting. Used for determinant-overlap minors (n <= particle
/// count), where nalgebra's generic LU is overkill.
pub fn det_small(m: &CMatrix) -> Complex64 {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut a = m.clone();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[(col, col)].norm();
        for row in col + 1..n {
            let v = a[(row, col)].norm();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            a.swap_rows(pivot, col);
            det = -det;
        }
        let p = a[(col, col)];
        det *= p;
        for row in col + 1..n {
            let factor = a[(row, col)] / p;
            for k in col..n {
                let sub = factor * a[(col, k)];
                a[(row, k)] -= sub;
            }
        }
    }
    det
}

/// Inner product `<a|b>` with the physics convention (conjugate-linear in the
/// first argument).
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.5, 0.0),
        ]));
        let (vals, vecs) = eigh(&m);
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 0.5).abs() < 1e-14);
        assert!((vals[2] - 2.0).abs() < 1e-14);
        assert!(unitarity_error(&vecs) < 1e-12);
    }

    #[test]
    fn eigh_reconstructs() {
        let mut m = CMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = Complex64::new((i * j) as f64 * 0.3 - 0.2, (i as f64 - j as f64) * 0.7);
            }
        }
        let h = (&m + m.adjoint()).scale(0.5);
        let (vals, vecs) = eigh(&h);
        let lam = CMatrix::from_diagonal(&CVector::from_iterator(
            4,
            vals.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        let rebuilt = &vecs * lam * vecs.adjoint();
        let err = (&rebuilt - &h).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "reconstruction error {err}");
    }

    #[test]
    fn polar_projects_to_unitary() {
        let mut m = CMatrix::identity(3, 3);
        m[(0, 1)] = Complex64::new(0.05, -0.02);
        m[(2, 0)] = Complex64::new(-0.03, 0.04);
        let u = polar_unitary(&m);
        assert!(unitarity_error(&u) < 1e-12);
    }

    #[test]
    fn det_small_matches_closed_form() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.0, 2.0);
        m[(0, 1)] = Complex64::new(0.0, -1.0);
        m[(1, 0)] = Complex64::new(3.0, 0.5);
        m[(1, 1)] = Complex64::new(-2.0, 1.0);
        let expect = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        assert!((det_small(&m) - expect).norm() < 1e-12);
    }
}
