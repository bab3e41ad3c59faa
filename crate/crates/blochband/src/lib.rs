//! Floquet-Bloch band-structure solver for periodic second-order elliptic
//! operators with high contrast.
//!
//! The crate computes band functions E_k(theta; lambda) over the Brillouin
//! zone for several operator families (Schrodinger barriers, divergence-form
//! two-component media, conformally deformed Laplace-Beltrami operators and
//! magnetic Schrodinger/Pauli pairs), detects spectral gaps, evaluates the
//! integrated density of states, and runs contrast sweeps that verify the
//! expected high-contrast asymptotics: concentration of the spectrum at
//! inclusion eigenvalues, gap opening after the first band, Dirichlet-Neumann
//! band enclosures and the supersymmetric pairing of the Pauli spectra.

pub mod assembly;
pub mod asymptotics;
pub mod banded;
pub mod bloch;

pub mod config;
pub mod eigensolve;
pub mod error;
pub mod geometry;
pub mod runner;
pub mod sparse;

pub use error::{Error, Result};
