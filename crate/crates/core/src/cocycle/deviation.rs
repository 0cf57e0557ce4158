use super::growth::lyapunov;
use super::product::product;
use super::CocycleError;
use crate::lattice::{OperatorSpec, PerturbationSpec};
use serde::{Deserialize, Serialize};

/// Which of the four deviation estimates to test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationBranch {
    /// `‖M̃_k(n) − M_k(n)‖ ≤ e^{(L+ε)k − sn}`, `n ≥ 0`.
    ForwardRight,
    /// `‖M̃_k(n) − M_k(n)‖ ≤ e^{(L+ε)k + s(n+k−1)}`, `n + k − 1 ≤ 0`.
    ForwardLeft,
    /// `‖M̃_{−k}(n) − M_{−k}(n)‖ ≤ e^{(L+ε)k − s(n−k)}`, `n − k ≥ 0`.
    BackwardRight,
    /// `‖M̃_{−k}(n) − M_{−k}(n)‖ ≤ e^{(L+ε)k + s(n−1)}`, `n − 1 ≤ 0`.
    BackwardLeft,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationParams {
    pub branch: DeviationBranch,
    pub eps: f64,
    /// Added to the bound exponent before comparing.
    pub slack: f64,
    /// Length and θ-grid of the Lyapunov estimate.
    pub lyapunov_k: usize,
    pub lyapunov_grid: usize,
}

impl Default for DeviationParams {
    fn default() -> Self {
        Self {
            branch: DeviationBranch::ForwardRight,
            eps: 0.1,
            slack: 0.0,
            lyapunov_k: 4096,
            lyapunov_grid: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub branch: DeviationBranch,
    /// `log‖M̃ − M‖`; `-inf` when the difference vanishes.
    pub measured: f64,
    /// Exponent of the right-hand side.
    pub bound: f64,
    pub lyapunov: f64,
    pub pass: bool,
    /// `c = e^{-(L̂+ε)}`.
    pub gronwall_c: f64,
    /// `C = 1 + Σ c|g(n+i)|·exp(Σ_{i<l<k} c|g(n+l)|)`.
    pub gronwall_upper: f64,
    /// `C' = cΣ|g(n+i)| + C·Σ c|g(n+i)|·exp(Σ_{i<l<k} c|g(n+l)|)`.
    pub gronwall_deviation: f64,
}

/// Returns `Σ_i c·w_i·exp(Σ_{i<l<k} c·w_l)` over the given weights.
fn gronwall_sum(c: f64, weights: &[f64]) -> f64 {
    let mut tail = 0.0f64;
    let mut total = 0.0;
    for w in weights.iter().rev() {
        total += c * w * tail.exp();
        tail += c * w;
    }
    total
}

pub fn deviation_check(
    op: &OperatorSpec,
    energy: f64,
    n: i64,
    k: i64,
    params: &DeviationParams,
) -> Result<DeviationReport, CocycleError> {
    let s = match op.perturbation {
        PerturbationSpec::Exponential { s, .. } => s,
        PerturbationSpec::Zero => 0.0,
        _ => {
            return Err(CocycleError::BadParameter(
                "deviation check needs an exponential perturbation".into(),
            ))
        }
    };
    if k < 1 {
        return Err(CocycleError::BadParameter("deviation check needs k >= 1".into()));
    }
    use DeviationBranch::*;
    let (valid, signed_k, shift) = match params.branch {
        ForwardRight => (n >= 0, k, -s * n as f64),
        ForwardLeft => (n + k - 1 <= 0, k, s * (n + k - 1) as f64),
        BackwardRight => (n - k >= 0, -k, -s * (n - k) as f64),
        BackwardLeft => (n - 1 <= 0, -k, s * (n - 1) as f64),
    };
    if !valid {
        return Err(CocycleError::BranchMismatch {
            branch: params.branch,
            n,
            k,
        });
    }

    let bare = op.potential_only();
    let l_hat = lyapunov(&bare, energy, params.lyapunov_k, params.lyapunov_grid)?;
    let perturbed = product(op, energy, n, signed_k);
    let plain = product(&bare, energy, n, signed_k);
    let r = perturbed.log_scale().max(plain.log_scale());
    let diff = (perturbed.scaled_to(r) - plain.scaled_to(r)).norm();
    let measured = if diff == 0.0 { f64::NEG_INFINITY } else { r + diff.ln() };
    let bound = (l_hat + params.eps) * k as f64 + shift;

    // Sites touched by the product, in the order the steps are applied.
    let first = if signed_k > 0 { n } else { n - k };
    let weights: Vec<f64> = (0..k).map(|i| op.perturbation.value(first + i).abs()).collect();
    let c = (-(l_hat + params.eps)).exp();
    let g_sum = gronwall_sum(c, &weights);
    let upper = 1.0 + g_sum;
    let deviation = c * weights.iter().sum::<f64>() + upper * g_sum;

    Ok(DeviationReport {
        branch: params.branch,
        measured,
        bound,
        lyapunov: l_hat,
        pass: measured <= bound + params.slack,
        gronwall_c: c,
        gronwall_upper: upper,
        gronwall_deviation: deviation,
    })
}
