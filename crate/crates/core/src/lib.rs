//! Simulation toolkit for electron-mediated nuclear spin diffusion in diamond.
//!
//! The crate models small electron–nuclear spin clusters (P1 centers and ¹³C
//! nuclei) and the transport of nuclear polarization through them:
//!
//! - [`spin_model`] — spin systems, Hamiltonian terms, dense matrix assembly,
//!   local-frame rotations and subspace projections;
//! - [`evolution`] — exact (eigendecomposition) and fourth-order Trotter–Suzuki
//!   state-vector propagation with polarization observables;
//! - [`effective`] — perturbative effective nuclear–nuclear couplings for the
//!   hyperfine- and dipolar-dominated regimes, network Hamiltonians, and the
//!   Cayley-tree geometry;
//! - [`rf`] — rotating-frame construction under RF drive, eigen-spectra versus
//!   electron dipolar coupling, and polarization dip maps;
//! - [`chain`] — classical master-equation transport along a spectral chain of
//!   spin packets driven by an RF pulse train;
//! - [`analysis`] — stretched-exponential fitting, inverse Laplace rate
//!   densities, and diffusion-constant estimates;
//! - [`io`] — CSV and binary export helpers.
//!
//! All frequencies passed to this crate are angular (rad/s). Conversion from
//! linear frequencies happens at the interface layer (see the CLI crate).

pub mod analysis;
pub mod chain;
pub mod effective;
pub mod error;
pub mod evolution;
pub mod io;
pub mod rf;
pub mod spin_model;

pub use error::{Error, Result};

/// 2π, for converting linear frequencies (Hz) to angular ones (rad/s).
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// ¹³C gyromagnetic ratio, Hz/T (linear frequency per field).
pub const GAMMA_C13_HZ_PER_T: f64 = 10.7084e6;

/// Electron (P1) gyromagnetic ratio magnitude, Hz/T.
pub const GAMMA_E_HZ_PER_T: f64 = 28.024e9;
