//! Finite-volume spectral tools: block determinants, Sturm counts, the
//! box resolvent, integrated density of states, gap labels and eigenpairs.

mod determinant;
mod eigen;
mod green;
mod ids;

pub use determinant::{sturm_count, sturm_count_diagonal, DeterminantSequence};
pub use eigen::{decay_rate, eigenpairs_in_window, Eigenpair};
pub use green::{
    green_column, green_entry, green_entry_cramer, green_entry_solve, scan_windows, window_scan, GreenSample,
    GreenTable, WindowResult, WindowScanReport, CRAMER_MAX_LEN,
};
pub use ids::{find_gaps, gap_label, ids, ids_curve, uniform_grid, Gap, IdsCurve};

use crate::lattice::LatticeError;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("energy {energy} is within 1e-13 of an eigenvalue of the box")]
    SingularBox { energy: f64 },
    #[error("the integrated density of states is defined for the unperturbed family")]
    Perturbed,
    #[error("only {usable} usable samples for the decay fit (need 16)")]
    TooShort { usable: usize },
    #[error("inverse iteration near {eigenvalue} stalled at residual {residual:e}")]
    IllConditioned { eigenvalue: f64, residual: f64 },
    #[error("no gap label within tolerance for IDS value {ids}")]
    NoLabel { ids: f64 },
    #[error("{0}")]
    BadParameter(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}
