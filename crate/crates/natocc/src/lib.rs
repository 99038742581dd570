//! Natural-occupation-number dynamics for small fermionic systems.
//!
//! The crate assembles, for lattice and abstract CI models at desk scale:
//!
//! - a Fock-space layer with deterministic ordering and sign conventions
//!   ([`fock`]),
//! - Hubbard and generic CI Hamiltonians with Slater-Condon matrix elements
//!   ([`model`]),
//! - reduced density matrices, natural spectra with gauge and continuity
//!   tracking, and parallel-transported orbital frames ([`rdm`]),
//! - generalized Pauli constraint analysis: polytope distances, pinning
//!   detection, and perturbation-response bounds ([`gpc`]),
//! - the exact symmetry-adapted amplitude/occupation linear map and its
//!   rational inverse ([`sector_map`]),
//! - exact spectral propagation and the reduced equations of motion for
//!   square amplitudes, dynamical phases and natural orbitals ([`dynamics`]).
//!
//! Hot loops (many-body matrix assembly, perturbation-response sweeps) run
//! data-parallel under the default `parallel` feature and fall back to
//! sequential code without it; `benches/parallel.rs` compares both paths.

pub mod config;
pub mod dynamics;
pub mod fock;
pub mod gpc;
pub mod linalg;
pub mod model;
pub mod output;
pub mod rdm;
pub mod sector_map;

pub use fock::{Determinant, SectorLabel, Spin, SpinOrbital};
pub use model::{BasisKind, IntegralSet, QuenchProtocol};
pub use rdm::{NaturalFrame, OneRdm, TwoRdm, WMatrix};
