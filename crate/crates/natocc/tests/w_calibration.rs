//! Calibration of the interaction-contraction normalization.
//!
//! The occupation flow identity `dn_k/dt = 2 Im W_kk` fixes the relative
//! normalization of the stored two-body matrix and the `W` contraction. With
//! `Gamma[p,q,r,s] = <a†_r a†_s a_q a_p>` and
//! `W_jk = sum_{a,b,d} v[j,d,a,b] Gamma[a,b,k,d]` the constant is exactly 1;
//! this suite is the calibration run that freezes it. If either convention
//! drifts (tensor symmetry, operator ordering, kernel normalization), the
//! finite-difference oracle here fails before anything else does.

use num_complex::Complex64;

use natocc::dynamics::{
    evolve_reduced, reduced_rhs, ReducedOptions, ReducedState, SectorSystem, TimeGrid,
};
use natocc::fock::{enumerate_determinants, sector_filter, SectorLabel};
use natocc::linalg::{eigh, CMatrix, CVector};
use natocc::model::{
    build_hubbard, build_many_body_matrix, transform_integrals, BasisKind, QuenchProtocol,
};
use natocc::rdm::{compute_w, compute_w_in_frame, one_rdm, two_rdm, NaturalFrame};

fn sector() -> SectorSystem {
    let dets = enumerate_determinants(3, 4).unwrap();
    let basis = sector_filter(&dets, SectorLabel::new(1, 1), 4);
    SectorSystem::for_lattice_sector(basis, 4).unwrap()
}

fn propagate(h: &CMatrix, psi: &[Complex64], dt: f64) -> Vec<Complex64> {
    let (evals, evecs) = eigh(h);
    let mut coeff = evecs.adjoint() * CVector::from_vec(psi.to_vec());
    for (i, c) in coeff.iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, -evals[i] * dt);
    }
    (&evecs * coeff).iter().copied().collect()
}

/// The calibration run proper: quench from the free ground state and compare
/// the contraction diagonal against finite differences of the exact
/// occupations at t = 0.1. A wrong prefactor shows up as a constant ratio.
#[test]
fn calibration_quench_from_free_ground_state() {
    let sector = sector();
    let h_free = {
        let ints = build_hubbard(4, 1.0, 0.0, true, BasisKind::Momentum).unwrap();
        build_many_body_matrix(&sector.basis, &ints)
    };
    let ints2 = build_hubbard(4, 1.0, 2.0, true, BasisKind::Momentum).unwrap();
    let h2 = build_many_body_matrix(&sector.basis, &ints2);

    let (_, vecs) = eigh(&h_free);
    let psi0: Vec<Complex64> = vecs.column(0).iter().copied().collect();
    let psi_t = propagate(&h2, &psi0, 0.1);

    let fd_h = 1e-4;
    let n_of = |psi: &[Complex64]| one_rdm(psi, &sector.basis, 8).unwrap().diagonal();
    let n_p = n_of(&propagate(&h2, &psi_t, fd_h));
    let n_m = n_of(&propagate(&h2, &psi_t, -fd_h));

    let gamma2 = two_rdm(&psi_t, &sector.basis, 8).unwrap();
    let frame = NaturalFrame::reference(n_of(&psi_t));
    let w = compute_w(&gamma2, &ints2, &frame);
    let rates = w.occupation_rates();

    let mut moved = false;
    for k in 0..8 {
        let fd = (n_p[k] - n_m[k]) / (2.0 * fd_h);
        assert!(
            (rates[k] - fd).abs() < 1e-6,
            "slot {k}: 2 Im W = {} vs finite difference {}",
            rates[k],
            fd
        );
        moved |= fd.abs() > 1e-3;
    }
    assert!(moved, "calibration trajectory must have flowing occupations");
}

/// Along reduced trajectories the two routes to the occupation flow must
/// agree: the contraction diagonal on the reconstructed state, and the
/// amplitude flow pushed through the sector map.
#[test]
fn reduced_trajectory_internal_bridge() {
    let sector = sector();
    let ints1 = build_hubbard(4, 1.0, 1.0, true, BasisKind::Momentum).unwrap();
    let ints2 = build_hubbard(4, 1.0, 2.0, true, BasisKind::Momentum).unwrap();
    let h1 = build_many_body_matrix(&sector.basis, &ints1);
    let (_, vecs) = eigh(&h1);
    let psi0: Vec<Complex64> = vecs.column(0).iter().copied().collect();
    let init = ReducedState::from_sector_amplitudes(&psi0, &sector).unwrap();

    let protocol = QuenchProtocol::constant(ints2.clone());
    let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
    let traj = evolve_reduced(&protocol, &init, &sector, &grid, &ReducedOptions::default())
        .unwrap();

    for &i in &[0usize, 250, 500, 999] {
        let state = ReducedState {
            f: traj.amplitudes[i].clone(),
            xi_dyn: traj.xi_dyn[i].clone(),
            frame: traj.frames[i].clone(),
            projection_residual: 0.0,
        };
        let rhs = reduced_rhs(&state, &ints2, &sector, traj.times[i], &ReducedOptions::default())
            .unwrap();
        let dn = sector.map.occupations_from_amplitudes(&rhs.df);

        let ints_frame = transform_integrals(&ints2, &state.frame.orbitals).unwrap();
        let psi: Vec<Complex64> = state
            .f
            .iter()
            .zip(state.xi_dyn.iter())
            .map(|(&f, &xi)| Complex64::from_polar(f.max(0.0).sqrt(), -xi))
            .collect();
        let gamma2 = two_rdm(&psi, &sector.basis, 8).unwrap();
        let w = compute_w_in_frame(&ints_frame, &gamma2);
        let rates = w.occupation_rates();
        for k in 0..8 {
            assert!(
                (dn[k] - rates[k]).abs() < 1e-8,
                "step {i} slot {k}: M df = {} vs 2 Im W = {}",
                dn[k],
                rates[k]
            );
        }
    }
}

/// Eigenstates have stationary occupations: the contraction diagonal must be
/// real for every eigenvector of an interacting sector Hamiltonian.
#[test]
fn eigenstates_have_no_occupation_flow() {
    let sector = sector();
    let ints = build_hubbard(4, 1.0, 1.7, true, BasisKind::Momentum).unwrap();
    let h = build_many_body_matrix(&sector.basis, &ints);
    let (_, vecs) = eigh(&h);
    for col in 0..6 {
        let psi: Vec<Complex64> = vecs.column(col).iter().copied().collect();
        let gamma2 = two_rdm(&psi, &sector.basis, 8).unwrap();
        let n = one_rdm(&psi, &sector.basis, 8).unwrap().diagonal();
        let w = compute_w(&gamma2, &ints, &NaturalFrame::reference(n));
        for rate in w.occupation_rates() {
            assert!(rate.abs() < 1e-12, "eigenstate {col} has dn/dt = {rate}");
        }
    }
}
