//! Reaction-diffusion equations with nonlinear flux boundary conditions in
//! one space dimension: discretization, truncated-flux cascades, smoothing
//! and blow-up diagnostics, and equilibrium computations.

pub mod asymptotics;
pub mod calibration;
pub mod cascade;
pub mod data;
pub mod error;
pub mod grid;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod nonlinearity;

pub use error::{Error, Result};
pub use grid::{Field, Mesh1D};
pub use nonlinearity::{Nonlinearity, PowerNonlinearity, Problem, TruncatedNonlinearity};
