//! Quantum Fisher information for the generalized spin-boson model.
//!
//! The model is a single qubit coupled to a bath of harmonic modes,
//!
//! ```text
//! H = -(Δ/2)σ_x - (h/2)σ_z + Σ_i ω_i b_i†b_i
//!     + Σ_i (σ_z λ_i^z + σ_x λ_i^x)(b_i + b_i†)
//! ```
//!
//! in units with ħ = 1 and the bath zero-point energy dropped. Couplings
//! derive from the Ohmic-family spectral density
//! J(ω) = (α/2) ω_c^{1-s} ω^s Θ(ω_c - ω), with an independent amplitude β
//! for the σ_x channel.
//!
//! The crate provides two independent routes to the reduced qubit state and
//! its quantum Fisher information matrix (QFIM) with respect to (α, Δ, h):
//!
//! * [`ed`]: dense exact diagonalization of small star or chain
//!   Hamiltonians, the oracle for everything else;
//! * [`mps`]: matrix product states with two-site DMRG for ground states
//!   and a second-order time evolver for dynamics, for converged baths of
//!   hundreds of modes.
//!
//! Supporting modules: [`model`] (parameters, bath discretization, chain
//! mapping), [`qfim`] (QFIM from density-matrix derivatives by two
//! independent formulas plus SLDs and fidelity), [`lindblad`] (analytic
//! weak-coupling benchmark at h = 0), [`analysis`] (entropy, spectra, peak
//! finding, power-law fits), and [`linalg`] (dense kernels shared by all of
//! the above).

pub mod analysis;
pub mod ed;
pub mod linalg;
pub mod lindblad;
pub mod model;
pub mod mps;
pub mod qfim;

pub use model::{
    chain_map, discretize_bath, shared_chain, spectral_density, BathScheme, ChainGeometry,
    Channel, DiscretizedBath, ModelParams,
};

/// Complex double, the scalar type of every quantum object in the crate.
pub type C64 = num_complex::Complex64;
