//! Exact spectral propagation and the reduced occupation-number dynamics.
//!
//! The reduced state is the triple `(f, xi_dyn, C)`: squared amplitudes over
//! the sector determinants, dynamical phases, and the parallel-transported
//! orbital frame. With `c_a = sqrt(f_a) exp(-i xi_a)` the coupled equations
//! integrated here are
//!
//! ```text
//! df_a/dt  = 2 sum_{b != a} sqrt(f_a f_b) Im[ H_ab exp(i(xi_a - xi_b)) ]
//! dxi_a/dt =     sum_b  sqrt(f_b / f_a)   Re[ H_ab exp(i(xi_a - xi_b)) ]
//! dC/dt    = C A,  A_jk = -i [ h_jk + (W_jk - W_kj^*) / (n_k - n_j) ],  A_kk = 0
//! ```
//!
//! with every matrix expressed in the moving frame. Projecting the
//! Schrodinger equation on the moving determinants and splitting `c_a` into
//! modulus and phase yields exactly these equations; the sign convention is
//! pinned by the finite-difference oracle in the tests below. Occupations
//! follow as `n = M f` through the sector amplitude map.

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{frame_determinant_overlap, Determinant};
use crate::linalg::{eigh, polar_unitary, CMatrix, CVector};
use crate::model::{
    build_many_body_matrix, transform_integrals, IntegralSet, ModelError, QuenchProtocol,
};
use crate::rdm::{
    natural_spectrum, one_rdm, parallel_transport_step, two_rdm, NaturalFrame, RdmError,
    SpectrumOptions,
};
use crate::sector_map::{
    build_amplitude_map, invert_map, AmplitudeMap, SectorMapError, SymmetryConstraintSet,
};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("degenerate occupations at t = {t}: n[{k}] - n[{j}] = {gap:.3e}")]
    DegenerateOccupations { t: f64, j: usize, k: usize, gap: f64 },
    #[error("orbital overlap collapsed at step {step} (|<phi|phi'>| = {magnitude:.3e} < 0.1); snapshots too coarse")]
    OverlapCollapse { step: usize, magnitude: f64 },
    #[error("trajectories have different grids or shapes")]
    GridMismatch,
    #[error("time grid is invalid: step {step} does not divide [{t_start}, {t_end}]")]
    BadGrid { t_start: f64, t_end: f64, step: f64 },
    #[error("quench at t = {t} does not lie on the time grid")]
    SegmentOffGrid { t: f64 },
    #[error("state norm {norm} is not 1 within 1e-10")]
    UnnormalizedState { norm: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rdm(#[from] RdmError),
    #[error(transparent)]
    SectorMap(#[from] SectorMapError),
}

/// Fixed-step time grid. A negative step with `t_end < t_start` integrates
/// backwards (used by the reversibility checks).
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub step: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, step: f64) -> Result<TimeGrid, DynamicsError> {
        let bad = DynamicsError::BadGrid {
            t_start,
            t_end,
            step,
        };
        if step == 0.0 || !step.is_finite() {
            return Err(bad);
        }
        let ratio = (t_end - t_start) / step;
        if ratio < 0.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(bad);
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            step,
        })
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.step).round() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps())
            .map(|i| self.t_start + i as f64 * self.step)
            .collect()
    }
}

/// Sector bundle used by the reduced dynamics: determinant basis, amplitude
/// map, and its exact inverse.
#[derive(Debug, Clone)]
pub struct SectorSystem {
    pub basis: Vec<Determinant>,
    pub map: AmplitudeMap,
    pub constraints: SymmetryConstraintSet,
    pub norb: usize,
}

impl SectorSystem {
    pub fn for_lattice_sector(
        basis: Vec<Determinant>,
        sites: usize,
    ) -> Result<SectorSystem, SectorMapError> {
        let map = build_amplitude_map(&basis, sites)?;
        let constraints = invert_map(&map)?;
        Ok(SectorSystem {
            basis,
            map,
            constraints,
            norb: 2 * sites,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// Reduced dynamical state: squared amplitudes, dynamical phases, and the
/// moving orbital frame (`frame.orbitals` is already parallel-transported;
/// its `geo_phase_accum` logs the phase dust removed after each step).
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub f: Vec<f64>,
    pub xi_dyn: Vec<f64>,
    pub frame: NaturalFrame,
    /// Weight discarded when the initial state was projected onto the
    /// sector; an input error bar carried into the trajectory record.
    pub projection_residual: f64,
}

impl ReducedState {
    /// State from CI amplitudes over the sector basis. The frame starts as
    /// the reference frame (sector determinants are strings of reference
    /// orbitals at t = 0).
    pub fn from_sector_amplitudes(
        psi: &[Complex64],
        sector: &SectorSystem,
    ) -> Result<ReducedState, DynamicsError> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(DynamicsError::UnnormalizedState { norm });
        }
        let f: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let xi_dyn: Vec<f64> = psi
            .iter()
            .map(|z| if z.norm_sqr() > 1e-24 { -z.arg() } else { 0.0 })
            .collect();
        let occupations = sector.map.occupations_from_amplitudes(&f);
        let mut frame = NaturalFrame::reference(occupations);
        frame.orbitals = CMatrix::identity(sector.norb, sector.norb);
        Ok(ReducedState {
            f,
            xi_dyn,
            frame,
            projection_residual: 0.0,
        })
    }

    /// State from a full-space vector: project onto the sector, renormalize,
    /// and keep the discarded weight as the projection residual.
    pub fn from_projected_state(
        psi_full: &[Complex64],
        full_basis: &[Determinant],
        sector: &SectorSystem,
    ) -> Result<ReducedState, DynamicsError> {
        let (kept, residual) = project_to_sector(psi_full, full_basis, &sector.basis);
        let mut state = ReducedState::from_sector_amplitudes(&kept, sector)?;
        state.projection_residual = residual;
        Ok(state)
    }

    /// Squared-amplitude sum; 1 up to integrator drift.
    pub fn total_weight(&self) -> f64 {
        self.f.iter().sum()
    }

    /// Occupations of the moving orbitals, `n = M f` extended to all slots.
    pub fn frame_occupations(&self, sector: &SectorSystem) -> Vec<f64> {
        sector.map.occupations_from_amplitudes(&self.f)
    }
}

/// Project a full-space state onto a sector basis. Returns the renormalized
/// sector amplitudes and the discarded weight (projection residual).
pub fn project_to_sector(
    psi_full: &[Complex64],
    full_basis: &[Determinant],
    sector_basis: &[Determinant],
) -> (Vec<Complex64>, f64) {
    let mut kept = vec![C0; sector_basis.len()];
    for (det, amp) in full_basis.iter().zip(psi_full.iter()) {
        if let Some(pos) = sector_basis.iter().position(|d| d == det) {
            kept[pos] = *amp;
        }
    }
    let inside: f64 = kept.iter().map(|z| z.norm_sqr()).sum();
    let residual = 1.0 - inside;
    let scale = inside.sqrt();
    if scale > 0.0 {
        for z in &mut kept {
            *z /= scale;
        }
    }
    (kept, residual)
}

/// Per-run integration options for the reduced dynamics.
#[derive(Debug, Clone, Copy)]
pub struct ReducedOptions {
    pub degeneracy_tol: f64,
    /// Below this amplitude the phase equation is frozen and flagged.
    pub phase_freeze_tol: f64,
    /// Abort at t = 0 when the initial occupations carry a degeneracy.
    pub strict_degeneracy: bool,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        ReducedOptions {
            degeneracy_tol: 1e-8,
            phase_freeze_tol: 1e-12,
            strict_degeneracy: true,
        }
    }
}

/// Right-hand side of the reduced system at fixed integrals.
#[derive(Debug, Clone)]
pub struct ReducedRhs {
    pub df: Vec<f64>,
    pub dxi_dyn: Vec<f64>,
    pub dc: CMatrix,
    /// Determinant indices whose phase derivative was frozen this call.
    pub frozen: Vec<usize>,
}

/// Evaluate the reduced equations of motion.
///
/// Reconstructs the CI state over the moving determinants, rotates the
/// integrals into the frame, assembles the frame Hamiltonian by the
/// Slater-Condon rules, and evaluates the amplitude, phase, and orbital
/// equations. The orbital equation couples through the interaction
/// contraction `W`; its diagonal is zeroed (transported gauge) and the
/// off-diagonal division by `n_k - n_j` is guarded: a vanishing gap with a
/// vanishing coupling contributes zero, a vanishing gap with a finite
/// coupling is a genuine singularity and errors out.
pub fn reduced_rhs(
    state: &ReducedState,
    ints: &IntegralSet,
    sector: &SectorSystem,
    t: f64,
    opts: &ReducedOptions,
) -> Result<ReducedRhs, DynamicsError> {
    let dim = sector.dim();
    let norb = sector.norb;
    let c_frame = &state.frame.orbitals;
    let ints_frame = transform_integrals(ints, c_frame)?;

    // Frame Hamiltonian over the sector determinant strings.
    let h_frame = build_many_body_matrix(&sector.basis, &ints_frame);

    let amp: Vec<f64> = state.f.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let phases: Vec<Complex64> = state
        .xi_dyn
        .iter()
        .map(|&xi| Complex64::from_polar(1.0, xi))
        .collect();

    let mut df = vec![0.0; dim];
    let mut dxi = vec![0.0; dim];
    let mut frozen = Vec::new();
    for a in 0..dim {
        let mut fdot = 0.0;
        let mut xidot = 0.0;
        for b in 0..dim {
            // H_ab exp(i(xi_a - xi_b))
            let z = h_frame[(a, b)] * phases[a] * phases[b].conj();
            if b != a {
                fdot += 2.0 * amp[a] * amp[b] * z.im;
            }
            xidot += amp[b] * z.re;
        }
        df[a] = fdot;
        if state.f[a] < opts.phase_freeze_tol {
            frozen.push(a);
            dxi[a] = 0.0;
        } else {
            dxi[a] = xidot / amp[a];
        }
    }
    // Total weight is conserved by construction.
    debug_assert!(df.iter().sum::<f64>().abs() < 1e-12 * (1.0 + h_frame.norm()));

    // CI state in the moving frame for the two-body matrix.
    let psi: Vec<Complex64> = (0..dim).map(|a| phases[a].conj() * amp[a]).collect();
    let gamma2 = two_rdm(&psi, &sector.basis, norb)?;
    let w = crate::rdm::compute_w_in_frame(&ints_frame, &gamma2);

    let n_frame = state.frame_occupations(sector);
    let w_scale = w.w.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut a_mat = CMatrix::zeros(norb, norb);
    for j in 0..norb {
        for k in 0..norb {
            if j == k {
                continue;
            }
            let num = w.w[(j, k)] - w.w[(k, j)].conj();
            let denom = n_frame[k] - n_frame[j];
            let ratio = if denom.abs() < opts.degeneracy_tol {
                if num.norm() <= 1e-10 * w_scale {
                    C0
                } else {
                    return Err(DynamicsError::DegenerateOccupations {
                        t,
                        j,
                        k,
                        gap: denom,
                    });
                }
            } else {
                num / Complex64::new(denom, 0.0)
            };
            a_mat[(j, k)] = -I * (ints_frame.h[(j, k)] + ratio);
        }
    }
    let dc = c_frame * a_mat;

    Ok(ReducedRhs {
        df,
        dxi_dyn: dxi,
        dc,
        frozen,
    })
}

/// Column-oriented trajectory record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Occupations of the reference/moving orbital slots (length `norb`).
    pub occupations: Vec<Vec<f64>>,
    /// Squared amplitudes per sector determinant.
    pub amplitudes: Vec<Vec<f64>>,
    /// Dynamical phases per determinant (unwrapped).
    pub xi_dyn: Vec<Vec<f64>>,
    /// Accumulated geometric phases per determinant string.
    pub xi_geo: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub norm: Vec<f64>,
    /// Normalized sector-constraint distances per step.
    pub distances: Vec<Vec<f64>>,
    /// Orbital frames per step. Exact runs store raw-gauge frames with the
    /// accumulated geometric phase (`transported()` gives the transported
    /// orbitals); reduced runs store already-transported working frames with
    /// the removed integrator dust in `geo_phase_accum`.
    pub frames: Vec<NaturalFrame>,
    pub basis: Vec<Determinant>,
    pub integrator: String,
    /// (time, determinant index) pairs where the phase equation was frozen.
    pub freeze_events: Vec<(f64, usize)>,
    /// Norm discarded when the initial state was projected onto the sector.
    pub projection_residual: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keep every `stride`-th record (grids of halved step compare against
    /// the parent grid this way).
    pub fn subsample(&self, stride: usize) -> Trajectory {
        assert!(stride >= 1);
        let pick =
            |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().step_by(stride).cloned().collect() };
        Trajectory {
            times: self.times.iter().step_by(stride).copied().collect(),
            occupations: pick(&self.occupations),
            amplitudes: pick(&self.amplitudes),
            xi_dyn: pick(&self.xi_dyn),
            xi_geo: pick(&self.xi_geo),
            energy: self.energy.iter().step_by(stride).copied().collect(),
            norm: self.norm.iter().step_by(stride).copied().collect(),
            distances: pick(&self.distances),
            frames: self.frames.iter().step_by(stride).cloned().collect(),
            basis: self.basis.clone(),
            integrator: self.integrator.clone(),
            freeze_events: self.freeze_events.clone(),
            projection_residual: self.projection_residual,
        }
    }
}

fn unwrap_phase(raw: f64, prev: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    raw + two_pi * ((prev - raw) / two_pi).round()
}

fn segment_index(protocol: &QuenchProtocol, t: f64) -> usize {
    let starts = protocol.segment_starts();
    let mut idx = 0;
    for (i, s) in starts.iter().enumerate() {
        if *s <= t + 1e-12 {
            idx = i;
        }
    }
    idx
}

/// Exact propagation by spectral decomposition of each piecewise-constant
/// segment Hamiltonian, with per-step derived quantities.
///
/// `initial_frame` fixes the orbital tracking origin; sector runs pass the
/// reference frame so that occupations and amplitudes stay labeled by the
/// reference slots. When absent, the descending natural frame of the initial
/// state is used.
pub fn evolve_exact(
    protocol: &QuenchProtocol,
    psi0: &[Complex64],
    basis: &[Determinant],
    norb: usize,
    grid: &TimeGrid,
    constraints: Option<&SymmetryConstraintSet>,
    initial_frame: Option<NaturalFrame>,
) -> Result<Trajectory, DynamicsError> {
    let norm0 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm0 - 1.0).abs() > 1e-10 {
        return Err(DynamicsError::UnnormalizedState { norm: norm0 });
    }
    // Segment boundaries must lie on the grid.
    for s in protocol.segment_starts() {
        if s <= grid.t_start.min(grid.t_end) || s >= grid.t_start.max(grid.t_end) {
            continue;
        }
        let ratio = (s - grid.t_start) / grid.step;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(DynamicsError::SegmentOffGrid { t: s });
        }
    }

    let dim = basis.len();
    let times = grid.times();
    let mut traj = Trajectory {
        times: Vec::with_capacity(times.len()),
        occupations: Vec::with_capacity(times.len()),
        amplitudes: Vec::with_capacity(times.len()),
        xi_dyn: Vec::with_capacity(times.len()),
        xi_geo: Vec::with_capacity(times.len()),
        energy: Vec::with_capacity(times.len()),
        norm: Vec::with_capacity(times.len()),
        distances: Vec::with_capacity(times.len()),
        frames: Vec::with_capacity(times.len()),
        basis: basis.to_vec(),
        integrator: "spectral".to_string(),
        freeze_events: Vec::new(),
        projection_residual: 0.0,
    };

    // Spectral data per segment, built on first use.
    let n_segments = protocol.segment_starts().len();
    let mut seg_cache: Vec<Option<(CMatrix, Vec<f64>, CMatrix)>> = vec![None; n_segments];

    let mut psi = CVector::from_vec(psi0.to_vec());
    // State at the entry into the current segment; every grid point inside a
    // segment is reached by a single propagator application from here, so
    // norm and energy carry no step-count-dependent drift.
    let mut seg_entry_psi = psi.clone();
    let mut seg_entry_time = times[0];
    let mut seg_current = usize::MAX;
    let mut raw_frame: Option<NaturalFrame> = None;
    let mut transported: Option<NaturalFrame> = None;
    let mut prev_xi: Vec<f64> = vec![0.0; dim];

    let ensure_segment = |cache: &mut Vec<Option<(CMatrix, Vec<f64>, CMatrix)>>, seg: usize| {
        if cache[seg].is_none() {
            let t_seg = protocol.segment_starts()[seg];
            let h = build_many_body_matrix(basis, protocol.integrals_at(t_seg));
            let (vals, vecs) = eigh(&h);
            cache[seg] = Some((h, vals, vecs));
        }
    };
    let propagate = |cache: &Vec<Option<(CMatrix, Vec<f64>, CMatrix)>>,
                     seg: usize,
                     from: &CVector,
                     dt: f64|
     -> CVector {
        let (_, evals, evecs) = cache[seg].as_ref().unwrap();
        let mut coeff = evecs.adjoint() * from;
        for (i, c) in coeff.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, -evals[i] * dt);
        }
        evecs * coeff
    };

    for (step, &t) in times.iter().enumerate() {
        let seg = segment_index(protocol, if grid.step > 0.0 { t } else { t + grid.step });
        ensure_segment(&mut seg_cache, seg);
        if step == 0 {
            seg_current = seg;
            seg_entry_time = t;
            seg_entry_psi = psi.clone();
        } else if seg != seg_current {
            // Advance to the boundary with the outgoing segment, then enter.
            psi = propagate(&seg_cache, seg_current, &seg_entry_psi, t - seg_entry_time);
            seg_current = seg;
            seg_entry_time = t;
            seg_entry_psi = psi.clone();
        } else {
            psi = propagate(&seg_cache, seg, &seg_entry_psi, t - seg_entry_time);
        }
        let (h_mat, _, _) = seg_cache[seg].as_ref().unwrap();

        // Derived per-step data.
        let psi_slice: Vec<Complex64> = psi.iter().copied().collect();
        let g1 = one_rdm(&psi_slice, basis, norb)?;
        let new_raw = match &raw_frame {
            None => {
                let f0 =
                    natural_spectrum(&g1, initial_frame.as_ref(), &SpectrumOptions::default())?;
                // The provided initial frame only seeds the column matching.
                NaturalFrame {
                    geo_phase_accum: vec![0.0; norb],
                    ..f0
                }
            }
            Some(prev) => natural_spectrum(&g1, Some(prev), &SpectrumOptions::default())?,
        };
        let new_transported = match &transported {
            None => new_raw.clone(),
            Some(prev) => parallel_transport_step(prev, &new_raw, grid.step),
        };

        let c_t = new_transported.transported();
        let coeffs: Vec<Complex64> = basis
            .iter()
            .map(|&a| {
                basis
                    .iter()
                    .zip(psi_slice.iter())
                    .filter(|(_, z)| z.norm_sqr() > 0.0)
                    .map(|(&b, &z)| frame_determinant_overlap(&c_t, a, b) * z)
                    .sum()
            })
            .collect();
        let f: Vec<f64> = coeffs.iter().map(|z| z.norm_sqr()).collect();
        let xi: Vec<f64> = coeffs
            .iter()
            .enumerate()
            .map(|(a, z)| {
                if z.norm_sqr() > 1e-24 {
                    let raw = -z.arg();
                    if step == 0 {
                        raw
                    } else {
                        unwrap_phase(raw, prev_xi[a])
                    }
                } else {
                    prev_xi[a]
                }
            })
            .collect();
        let xi_geo: Vec<f64> = basis
            .iter()
            .map(|&a| new_transported.geo_phase_for(a))
            .collect();

        let n_slots = g1.diagonal();
        let distances = match constraints {
            Some(set) => (0..set.dim()).map(|j| set.evaluate(j, &n_slots)).collect(),
            None => Vec::new(),
        };
        let energy = psi.dotc(&(h_mat * &psi)).re;

        traj.times.push(t);
        traj.occupations.push(n_slots);
        traj.amplitudes.push(f);
        prev_xi = xi.clone();
        traj.xi_dyn.push(xi);
        traj.xi_geo.push(xi_geo);
        traj.energy.push(energy);
        traj.norm.push(psi.norm());
        traj.distances.push(distances);
        traj.frames.push(new_transported.clone());
        raw_frame = Some(new_raw);
        transported = Some(new_transported);
    }
    Ok(traj)
}

/// Fixed-step fourth-order Runge-Kutta integration of the reduced system,
/// with post-step re-unitarization (polar projection) and re-imposition of
/// the discrete parallel transport.
pub fn evolve_reduced(
    protocol: &QuenchProtocol,
    init: &ReducedState,
    sector: &SectorSystem,
    grid: &TimeGrid,
    opts: &ReducedOptions,
) -> Result<Trajectory, DynamicsError> {
    let dim = sector.dim();
    let norb = sector.norb;

    // Strict degeneracy policy applies to the initial occupations.
    if opts.strict_degeneracy {
        let n0 = init.frame_occupations(sector);
        for j in 0..norb {
            for k in j + 1..norb {
                let gap = n0[j] - n0[k];
                if gap.abs() < opts.degeneracy_tol {
                    return Err(DynamicsError::DegenerateOccupations {
                        t: grid.t_start,
                        j,
                        k,
                        gap,
                    });
                }
            }
        }
    }

    let times = grid.times();
    let mut traj = Trajectory {
        times: Vec::with_capacity(times.len()),
        occupations: Vec::with_capacity(times.len()),
        amplitudes: Vec::with_capacity(times.len()),
        xi_dyn: Vec::with_capacity(times.len()),
        xi_geo: Vec::with_capacity(times.len()),
        energy: Vec::with_capacity(times.len()),
        norm: Vec::with_capacity(times.len()),
        distances: Vec::with_capacity(times.len()),
        frames: Vec::with_capacity(times.len()),
        basis: sector.basis.clone(),
        integrator: "rk4".to_string(),
        freeze_events: Vec::new(),
        projection_residual: init.projection_residual,
    };

    let mut state = init.clone();
    let h = grid.step;

    for (step, &t) in times.iter().enumerate() {
        let t_ref = if h > 0.0 { t } else { t + h };
        let ints = protocol.integrals_at(t_ref);

        // Record the current step.
        let ints_frame = transform_integrals(ints, &state.frame.orbitals)?;
        let h_frame = build_many_body_matrix(&sector.basis, &ints_frame);
        let amp: Vec<Complex64> = state
            .f
            .iter()
            .zip(state.xi_dyn.iter())
            .map(|(&f, &xi)| Complex64::from_polar(f.max(0.0).sqrt(), -xi))
            .collect();
        let mut energy = C0;
        for a in 0..dim {
            for b in 0..dim {
                energy += amp[a].conj() * h_frame[(a, b)] * amp[b];
            }
        }
        let n_slots = state.frame_occupations(sector);
        let distances: Vec<f64> = (0..sector.constraints.dim())
            .map(|j| sector.constraints.evaluate(j, &n_slots))
            .collect();
        traj.times.push(t);
        traj.occupations.push(n_slots);
        traj.amplitudes.push(state.f.clone());
        traj.xi_dyn.push(state.xi_dyn.clone());
        traj.xi_geo.push(
            sector
                .basis
                .iter()
                .map(|&a| state.frame.geo_phase_for(a))
                .collect(),
        );
        traj.energy.push(energy.re);
        traj.norm.push(state.total_weight());
        traj.distances.push(distances);
        traj.frames.push(state.frame.clone());

        if step + 1 == times.len() {
            break;
        }

        // Classical RK4 on (f, xi, C).
        let attach = |e: DynamicsError| match e {
            DynamicsError::DegenerateOccupations { j, k, gap, .. } => {
                DynamicsError::DegenerateOccupations { t, j, k, gap }
            }
            other => other,
        };
        let k1 = reduced_rhs(&state, ints, sector, t, opts).map_err(attach)?;
        let s2 = advance(&state, &k1, h / 2.0);
        let k2 = reduced_rhs(&s2, ints, sector, t, opts).map_err(attach)?;
        let s3 = advance(&state, &k2, h / 2.0);
        let k3 = reduced_rhs(&s3, ints, sector, t, opts).map_err(attach)?;
        let s4 = advance(&state, &k3, h);
        let k4 = reduced_rhs(&s4, ints, sector, t, opts).map_err(attach)?;

        let mut frozen_here: Vec<usize> = Vec::new();
        for idx in k1
            .frozen
            .iter()
            .chain(&k2.frozen)
            .chain(&k3.frozen)
            .chain(&k4.frozen)
        {
            if !frozen_here.contains(idx) {
                frozen_here.push(*idx);
                traj.freeze_events.push((t, *idx));
            }
        }

        let mut f_new = state.f.clone();
        let mut xi_new = state.xi_dyn.clone();
        for a in 0..dim {
            f_new[a] += h / 6.0 * (k1.df[a] + 2.0 * k2.df[a] + 2.0 * k3.df[a] + k4.df[a]);
            xi_new[a] += h / 6.0
                * (k1.dxi_dyn[a] + 2.0 * k2.dxi_dyn[a] + 2.0 * k3.dxi_dyn[a] + k4.dxi_dyn[a]);
        }
        let c_new = &state.frame.orbitals
            + (&k1.dc + &k2.dc.scale(2.0) + &k3.dc.scale(2.0) + &k4.dc).scale(h / 6.0);

        // Re-unitarize, then re-impose discrete transport against the
        // previous working frame; removed phases accumulate as dust.
        let projected = polar_unitary(&c_new);
        let mut baked = projected.clone();
        let mut geo = state.frame.geo_phase_accum.clone();
        for k in 0..norb {
            let overlap: Complex64 = state
                .frame
                .orbitals
                .column(k)
                .iter()
                .zip(projected.column(k).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let theta = overlap.arg();
            geo[k] += theta;
            let factor = Complex64::from_polar(1.0, -theta);
            for r in 0..norb {
                baked[(r, k)] *= factor;
            }
        }

        let occupations = sector.map.occupations_from_amplitudes(&f_new);
        state = ReducedState {
            f: f_new,
            xi_dyn: xi_new,
            frame: NaturalFrame {
                occupations,
                orbitals: baked,
                geo_phase_accum: geo,
            },
            projection_residual: state.projection_residual,
        };
    }
    Ok(traj)
}

fn advance(state: &ReducedState, rhs: &ReducedRhs, dt: f64) -> ReducedState {
    let f: Vec<f64> = state
        .f
        .iter()
        .zip(rhs.df.iter())
        .map(|(&x, &d)| x + dt * d)
        .collect();
    let xi: Vec<f64> = state
        .xi_dyn
        .iter()
        .zip(rhs.dxi_dyn.iter())
        .map(|(&x, &d)| x + dt * d)
        .collect();
    let orbitals = &state.frame.orbitals + rhs.dc.scale(dt);
    ReducedState {
        f,
        xi_dyn: xi,
        frame: NaturalFrame {
            occupations: state.frame.occupations.clone(),
            orbitals,
            geo_phase_accum: state.frame.geo_phase_accum.clone(),
        },
        projection_residual: state.projection_residual,
    }
}

/// Discrete geometric phase of a Slater string along a frame history:
/// the accumulated `Im log <phi_k(t)|phi_k(t+h)>` summed over the orbitals
/// in the string. Snapshots must be raw-gauge frames.
pub fn geometric_phase(
    history: &[NaturalFrame],
    alpha: Determinant,
) -> Result<f64, DynamicsError> {
    let mut total = 0.0;
    for (step, pair) in history.windows(2).enumerate() {
        for k in alpha.occupied_list() {
            let overlap: Complex64 = pair[0]
                .orbitals
                .column(k)
                .iter()
                .zip(pair[1].orbitals.column(k).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let magnitude = overlap.norm();
            if magnitude < 0.1 {
                return Err(DynamicsError::OverlapCollapse { step, magnitude });
            }
            total += overlap.arg();
        }
    }
    Ok(total)
}

/// Per-quantity deviations between two trajectories on identical grids.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DeviationReport {
    pub grid_points: usize,
    pub occupation_max: f64,
    pub occupation_l2: f64,
    pub amplitude_max: f64,
    pub amplitude_l2: f64,
    pub distance_max: f64,
    pub energy_max: f64,
}

fn column_devs(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<(f64, f64)> {
    if a.len() != b.len() {
        return None;
    }
    let mut max = 0.0f64;
    let mut sq = 0.0f64;
    for (ra, rb) in a.iter().zip(b.iter()) {
        if ra.len() != rb.len() {
            return None;
        }
        for (x, y) in ra.iter().zip(rb.iter()) {
            let d = (x - y).abs();
            max = max.max(d);
            sq += d * d;
        }
    }
    Some((max, sq.sqrt()))
}

pub fn compare_trajectories(
    a: &Trajectory,
    b: &Trajectory,
) -> Result<DeviationReport, DynamicsError> {
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(b.times.iter())
            .any(|(x, y)| (x - y).abs() > 1e-12)
    {
        return Err(DynamicsError::GridMismatch);
    }
    let (occupation_max, occupation_l2) =
        column_devs(&a.occupations, &b.occupations).ok_or(DynamicsError::GridMismatch)?;
    let (amplitude_max, amplitude_l2) =
        column_devs(&a.amplitudes, &b.amplitudes).ok_or(DynamicsError::GridMismatch)?;
    let (distance_max, _) =
        column_devs(&a.distances, &b.distances).ok_or(DynamicsError::GridMismatch)?;
    let energy_max = a
        .energy
        .iter()
        .zip(b.energy.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(DeviationReport {
        grid_points: a.times.len(),
        occupation_max,
        occupation_l2,
        amplitude_max,
        amplitude_l2,
        distance_max,
        energy_max,
    })
}

/// Observed convergence order from deviations at step h and h/2.
pub fn convergence_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}
