//! Simulator and verification toolkit for the one-dimensional compressible
//! Navier–Stokes equations with nonlocal interaction, alignment and damping
//! forces on an expanding free-boundary domain.

pub mod config;
pub mod diagnostics;
pub mod entropy_pairs;
pub mod error;
pub mod initial_data;
pub mod nonlocal_forces;
pub mod pressure_laws;
pub mod lagrangian_solver;
pub mod quad;
pub mod suite;
pub mod sweep;
pub mod tridiag;

pub use error::{Error, Result};
