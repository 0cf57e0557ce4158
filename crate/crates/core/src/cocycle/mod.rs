//! Transfer-matrix cocycle: scaled products, the variation-of-constants
//! identities between perturbed and unperturbed products, Lyapunov exponent
//! estimates, growth and deviation checks, and the rotation number.

mod deviation;
mod growth;
mod product;
mod rotation;
mod telescoping;

pub use deviation::{deviation_check, DeviationBranch, DeviationParams, DeviationReport};
pub use growth::{
    geometric_ladder, growth_profile, lyapunov, theta_sample, uniform_upper_bound_check, Direction, GrowthProfile,
    UpperBoundReport,
};
pub use product::{prefix_products, product, suffix_products, transfer_step, ScaledMatrixProduct};
pub use rotation::rotation_number;
pub use telescoping::{telescoping_residuals, TelescopingResiduals};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CocycleError {
    #[error("the Lyapunov exponent is defined for the unperturbed family; remove the perturbation")]
    PerturbedLyapunov,
    #[error("branch {branch:?} does not apply at n={n}, k={k}")]
    BranchMismatch { branch: DeviationBranch, n: i64, k: i64 },
    #[error("{0}")]
    BadParameter(String),
}
