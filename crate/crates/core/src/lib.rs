//! Magnetoquasistatic (eddy current) field simulation in a 2D `A_z` formulation.
//!
//! The semi-discrete system `M da/dt + K(a) a = j` is a DAE because the mass
//! matrix vanishes outside conductors. Eliminating the nonconducting unknowns
//! with a generalized Schur complement leaves an ODE for the conducting
//! unknowns, which [`integrate`] advances with explicit Euler. The embedded
//! solves with the air block are multiple right-hand-side problems and are
//! warm-started from [`startvec`] (subspace projection or POD).

pub mod assembly;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod materials;
pub mod mesh;
pub mod schur;
pub mod startvec;

pub use error::{Error, Result};

/// Vacuum permeability in H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Reluctivity of vacuum (and air, coils) in m/H.
pub const NU0: f64 = 1.0 / MU0;
