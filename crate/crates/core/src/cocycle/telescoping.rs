use super::product::{prefix_products, suffix_products, ScaledMatrixProduct};
use crate::lattice::OperatorSpec;
use crate::linalg::Mat2;
use serde::{Deserialize, Serialize};

/// Normalized residuals of the four variation-of-constants identities
/// relating perturbed and unperturbed products.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TelescopingResiduals {
    /// `M̃_k = M_k + Σ M̃_{k-i-1}(n+i+1)·diag(-g(n+i),0)·M_i(n)`
    pub forward_perturbed_left: f64,
    /// `M̃_k = M_k + Σ M_{k-i-1}(n+i+1)·diag(-g(n+i),0)·M̃_i(n)`
    pub forward_perturbed_right: f64,
    /// `M̃_k⁻¹ = M_k⁻¹ + Σ M_i⁻¹(n)·diag(0,-g(n+i))·M̃⁻¹_{k-i-1}(n+i+1)`
    pub inverse_perturbed_right: f64,
    /// `M̃_k⁻¹ = M_k⁻¹ + Σ M̃_i⁻¹(n)·diag(0,-g(n+i))·M⁻¹_{k-i-1}(n+i+1)`
    pub inverse_perturbed_left: f64,
}

impl TelescopingResiduals {
    pub fn max(&self) -> f64 {
        self.forward_perturbed_left
            .max(self.forward_perturbed_right)
            .max(self.inverse_perturbed_right)
            .max(self.inverse_perturbed_left)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.forward_perturbed_left,
            self.forward_perturbed_right,
            self.inverse_perturbed_right,
            self.inverse_perturbed_left,
        ]
    }
}

/// `lhs - base - Σ terms`, with every piece brought to a common scale, divided
/// by the largest norm among the pieces.
fn residual(lhs: &ScaledMatrixProduct, base: &ScaledMatrixProduct, terms: &[ScaledMatrixProduct]) -> f64 {
    let mut reference = lhs.log_scale().max(base.log_scale());
    for t in terms {
        reference = reference.max(t.log_scale());
    }
    let l = lhs.scaled_to(reference);
    let b = base.scaled_to(reference);
    let mut largest = l.norm().max(b.norm());
    let mut sum = Mat2::ZERO;
    for t in terms {
        let m = t.scaled_to(reference);
        largest = largest.max(m.norm());
        sum = sum + m;
    }
    if largest == 0.0 {
        return 0.0;
    }
    (l - b - sum).max_abs() / largest
}

/// Residuals of all four identities at `(E, n, k)`. A zero perturbation
/// gives exactly zero.
pub fn telescoping_residuals(op: &OperatorSpec, energy: f64, n: i64, k: usize) -> TelescopingResiduals {
    assert!(k >= 1, "telescoping needs k >= 1");
    let bare = op.potential_only();
    let g: Vec<f64> = (0..k as i64).map(|i| op.perturbation.value(n + i)).collect();

    let pre = prefix_products(&bare, energy, n, k);
    let pre_t = prefix_products(op, energy, n, k);
    let suf = suffix_products(&bare, energy, n, k);
    let suf_t = suffix_products(op, energy, n, k);
    let (m_k, mt_k) = (pre[k], pre_t[k]);

    let fwd = |left: &[ScaledMatrixProduct], right: &[ScaledMatrixProduct]| -> Vec<ScaledMatrixProduct> {
        (0..k)
            .map(|i| {
                let mid = Mat2::diag(-g[i], 0.0);
                ScaledMatrixProduct::from_parts(
                    left[i].mantissa() * mid * right[i].mantissa(),
                    left[i].log_scale() + right[i].log_scale(),
                )
            })
            .collect()
    };
    let inv = |left: &[ScaledMatrixProduct], right: &[ScaledMatrixProduct]| -> Vec<ScaledMatrixProduct> {
        (0..k)
            .map(|i| {
                let l = left[i].inverse();
                let r = right[i].inverse();
                let mid = Mat2::diag(0.0, -g[i]);
                ScaledMatrixProduct::from_parts(l.mantissa() * mid * r.mantissa(), l.log_scale() + r.log_scale())
            })
            .collect()
    };

    TelescopingResiduals {
        forward_perturbed_left: residual(&mt_k, &m_k, &fwd(&suf_t, &pre)),
        forward_perturbed_right: residual(&mt_k, &m_k, &fwd(&suf, &pre_t)),
        inverse_perturbed_right: residual(&mt_k.inverse(), &m_k.inverse(), &inv(&pre, &suf_t)),
        inverse_perturbed_left: residual(&mt_k.inverse(), &m_k.inverse(), &inv(&pre_t, &suf)),
    }
}
