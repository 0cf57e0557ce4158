//! Renormalized oscillation theory for Jacobi operators: node and Wronskian
//! counts, Weyl solutions, gap eigenvalue counting, and the fixed-point
//! constructions of bounded and growing solutions of perturbed constant
//! recursions.
//!
//! All counting is done in Jacobi coordinates
//! `(Hu)(n) = a(n)u(n+1) + a(n−1)u(n−1) − b(n)u(n)` with `a < 0`. A
//! Schrödinger operator `H̃ = Δ + V` maps to `a ≡ −1`, `b = V`, `λ = −E`.

mod fixed_point;
mod jacobi;
mod trace;
mod weyl;

pub use fixed_point::{
    hyperbolic_solutions, parabolic_solutions, FixedPointReport, HyperbolicSolutions, N0Policy, ParabolicSolutions,
};
pub use jacobi::{to_jacobi, JacobiForm};
pub use trace::{count_nodes, count_wronskian_nodes, wronskian, SolutionTrace};
pub use weyl::{
    gap_eigenvalue_count, threshold_eigenvalue, weyl_edge_limit, weyl_solution, Approach, Construction, EdgeLimit,
    GapCount, Side, ThresholdReport, WeylSolution,
};

use crate::spectral::SpectralError;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OscillationError {
    #[error("solution vanishes at consecutive sites {site} and {}", site + 1)]
    DegenerateTrace { site: i64 },
    #[error("the Wronskian vanishes on all of [{start}, {end}]")]
    VanishingWronskian { start: i64, end: i64 },
    #[error("site {site} outside the trace window [{start}, {end}]")]
    OutOfWindow { site: i64, start: i64, end: i64 },
    #[error("three-term residual {residual:e} at site {site} exceeds 1e-9")]
    NotASolution { site: i64, residual: f64 },
    #[error("energy {energy} is not in a gap of the essential spectrum: {reason}")]
    NotInGap { energy: f64, reason: String },
    #[error("edge extrapolation at {energy} did not settle: last change {change:e}")]
    NonConvergent { energy: f64, change: f64 },
    #[error("gap count changed with the horizon: {count} at {horizon}, {half_count} at half")]
    Unstable {
        count: usize,
        half_count: usize,
        horizon: i64,
    },
    #[error("no n0 up to {horizon} meets the contraction threshold (best tail {best:e})")]
    NoContraction { horizon: i64, best: f64 },
    #[error("{0}")]
    BadParameter(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}
