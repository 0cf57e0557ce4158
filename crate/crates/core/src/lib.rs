//! Numerics for one-dimensional quasi-periodic Schrödinger operators with
//! decaying perturbations: transfer-matrix cocycles, finite-volume spectral
//! machinery, renormalized oscillation theory and scenario runners.

pub mod cli;
pub mod cocycle;
pub mod experiments;
pub mod lattice;
pub mod linalg;
pub mod oscillation;
pub mod spectral;

pub use lattice::{BoxOperator, OperatorSpec, PerturbationSpec, PotentialSpec};
