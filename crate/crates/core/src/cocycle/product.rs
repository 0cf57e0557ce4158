use crate::lattice::OperatorSpec;
use crate::linalg::{exponent_of, pow2, Mat2};
use std::f64::consts::LN_2;

/// One Schrödinger transfer step `[[E - V, -1], [1, 0]]`.
pub fn transfer_step(energy: f64, site_value: f64) -> Mat2 {
    Mat2::new(energy - site_value, -1.0, 1.0, 0.0)
}

/// A 2×2 matrix held as `e^{log_scale} · mantissa`, with the mantissa's
/// largest entry kept in `[1/2, 2]`. Rescaling uses exact powers of two.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledMatrixProduct {
    mantissa: Mat2,
    log_scale: f64,
}

impl Default for ScaledMatrixProduct {
    fn default() -> Self {
        Self::identity()
    }
}

impl ScaledMatrixProduct {
    pub fn identity() -> Self {
        Self {
            mantissa: Mat2::IDENTITY,
            log_scale: 0.0,
        }
    }

    pub fn from_matrix(m: Mat2) -> Self {
        let mut out = Self {
            mantissa: m,
            log_scale: 0.0,
        };
        out.renormalize();
        out
    }

    pub fn from_parts(mantissa: Mat2, log_scale: f64) -> Self {
        let mut out = Self { mantissa, log_scale };
        out.renormalize();
        out
    }

    pub fn mantissa(&self) -> Mat2 {
        self.mantissa
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Bring the mantissa's max entry back into `[1, 2)` when it has left
    /// `[1/2, 2]`.
    #[inline]
    pub fn renormalize(&mut self) {
        let m = self.mantissa.max_abs();
        if m == 0.0 || !m.is_finite() {
            return;
        }
        if !(0.5..=2.0).contains(&m) {
            let e = exponent_of(m);
            // two exact steps: subnormal maxima push -e past 1023
            let half = -e / 2;
            self.mantissa = self.mantissa.scale(pow2(half)).scale(pow2(-e - half));
            self.log_scale += e as f64 * LN_2;
        }
    }

    /// `self ← [[a, -1], [1, 0]] · self` with `a = E - V`.
    #[inline]
    pub fn push_step(&mut self, a: f64) {
        let m = self.mantissa;
        self.mantissa = Mat2::new(a * m.a - m.c, a * m.b - m.d, m.a, m.b);
        self.renormalize();
    }

    /// `self ← self · [[a, -1], [1, 0]]`.
    #[inline]
    pub fn push_step_right(&mut self, a: f64) {
        let m = self.mantissa;
        self.mantissa = Mat2::new(m.a * a + m.b, -m.a, m.c * a + m.d, -m.c);
        self.renormalize();
    }

    pub fn left_mul(&self, m: Mat2) -> Self {
        Self::from_parts(m * self.mantissa, self.log_scale)
    }

    pub fn right_mul(&self, m: Mat2) -> Self {
        Self::from_parts(self.mantissa * m, self.log_scale)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self::from_parts(self.mantissa * rhs.mantissa, self.log_scale + rhs.log_scale)
    }

    /// Inverse of a unimodular product: `e^{s}·adj(M)` since `det M = e^{-2s}`.
    pub fn inverse(&self) -> Self {
        Self {
            mantissa: self.mantissa.adjugate(),
            log_scale: self.log_scale,
        }
    }

    /// `log ‖·‖` (operator 2-norm).
    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.mantissa.norm().ln()
    }

    /// `det(mantissa)·e^{2·log_scale}`; one for exact products of steps.
    pub fn unimodularity(&self) -> f64 {
        let d = self.mantissa.det();
        d.signum() * (d.abs().ln() + 2.0 * self.log_scale).exp()
    }

    /// `|det − 1|` measured against `|ad| + |bc|`, the size of the terms the
    /// determinant cancels; the absolute defect of a hyperbolic product is
    /// dominated by that cancellation.
    pub fn unimodularity_defect(&self) -> f64 {
        let m = self.mantissa;
        let det = m.det();
        let terms = (m.a * m.d).abs() + (m.b * m.c).abs();
        if 2.0 * self.log_scale + terms.ln() > 0.0 {
            (det - (-2.0 * self.log_scale).exp()).abs() / terms
        } else {
            (det * (2.0 * self.log_scale).exp() - 1.0).abs()
        }
    }

    /// `‖A·B − I‖ / (‖A‖·‖B‖)` for `A = self`, `B = other`.
    pub fn inverse_law_defect(&self, other: &Self) -> f64 {
        let (a, b) = (self.mantissa, other.mantissa);
        let target = (-(self.log_scale + other.log_scale)).exp();
        let r = a * b - Mat2::diag(target, target);
        r.norm() / (a.norm() * b.norm()).max(target)
    }

    /// `e^{log_scale - reference} · mantissa`.
    pub fn scaled_to(&self, reference: f64) -> Mat2 {
        self.mantissa.scale((self.log_scale - reference).exp())
    }

    /// Plain matrix; overflows for very long products.
    pub fn to_matrix(&self) -> Mat2 {
        self.scaled_to(0.0)
    }
}

/// `M_k(n) = S(n+k-1) ⋯ S(n)` for `k > 0`, `M_k(n) = M_{|k|}(n-|k|)^{-1}`
/// for `k < 0`, identity for `k = 0`.
pub fn product(op: &OperatorSpec, energy: f64, n: i64, k: i64) -> ScaledMatrixProduct {
    if k >= 0 {
        forward_product(op, energy, n, k as usize)
    } else {
        let m = k.unsigned_abs() as i64;
        forward_product(op, energy, n - m, m as usize).inverse()
    }
}

fn forward_product(op: &OperatorSpec, energy: f64, n: i64, k: usize) -> ScaledMatrixProduct {
    let mut acc = ScaledMatrixProduct::identity();
    for j in 0..k as i64 {
        acc.push_step(energy - op.eval_site(n + j));
    }
    acc
}

/// Forward products `M_i(n)` for `i = 0..=k` (inclusive), reusing prefixes.
pub fn prefix_products(op: &OperatorSpec, energy: f64, n: i64, k: usize) -> Vec<ScaledMatrixProduct> {
    let mut out = Vec::with_capacity(k + 1);
    let mut acc = ScaledMatrixProduct::identity();
    out.push(acc);
    for j in 0..k as i64 {
        acc.push_step(energy - op.eval_site(n + j));
        out.push(acc);
    }
    out
}

/// `M_{k-i-1}(n+i+1)` for `i = 0..k`, i.e. the products of the steps after
/// index `i` up to `n+k-1`.
pub fn suffix_products(op: &OperatorSpec, energy: f64, n: i64, k: usize) -> Vec<ScaledMatrixProduct> {
    let mut out = vec![ScaledMatrixProduct::identity(); k];
    if k == 0 {
        return out;
    }
    let mut acc = ScaledMatrixProduct::identity();
    for i in (0..k - 1).rev() {
        acc.push_step_right(energy - op.eval_site(n + i as i64 + 1));
        out[i] = acc;
    }
    out
}
