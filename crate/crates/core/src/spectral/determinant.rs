use crate::lattice::{BoxOperator, OperatorSpec};
use crate::linalg::{exponent_of, pow2};
use std::f64::consts::LN_2;

/// `P_k = det(E − D_k)` for `k = 0..=K`, where `D_k` is the tridiagonal
/// matrix with unit off-diagonals and diagonal `V(n), …, V(n+k−1)`.
///
/// Each value is stored as `mantissa · e^{log_scale}`; `P_{-1} = 0` is
/// implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterminantSequence {
    base: i64,
    mantissas: Vec<f64>,
    log_scales: Vec<f64>,
}

impl DeterminantSequence {
    /// Determinants of the leading blocks of `E − diag(diagonal) − offdiag`.
    pub fn from_diagonal(base: i64, diagonal: &[f64], energy: f64) -> Self {
        Self::from_iter(base, diagonal.iter().copied(), energy, diagonal.len())
    }

    fn from_iter(base: i64, diagonal: impl Iterator<Item = f64>, energy: f64, len: usize) -> Self {
        let mut mantissas = Vec::with_capacity(len + 1);
        let mut log_scales = Vec::with_capacity(len + 1);
        mantissas.push(1.0);
        log_scales.push(0.0);
        // (cur, prev) = (P_{k-1}, P_{k-2}) · e^{-scale}
        let (mut cur, mut prev, mut scale) = (1.0f64, 0.0f64, 0.0f64);
        for v in diagonal {
            let next = (energy - v) * cur - prev;
            prev = cur;
            cur = next;
            let m = cur.abs().max(prev.abs());
            if m != 0.0 && !(2f64.powi(-64)..=2f64.powi(64)).contains(&m) {
                let e = exponent_of(m);
                let f = pow2(-e);
                cur *= f;
                prev *= f;
                scale += e as f64 * LN_2;
            }
            mantissas.push(cur);
            log_scales.push(scale);
        }
        Self {
            base,
            mantissas,
            log_scales,
        }
    }

    pub fn new(op: &OperatorSpec, energy: f64, n: i64, k: usize) -> Self {
        Self::from_iter(n, (0..k as i64).map(|j| op.eval_site(n + j)), energy, k)
    }

    pub fn base(&self) -> i64 {
        self.base
    }

    /// Largest index `K`.
    pub fn len(&self) -> usize {
        self.mantissas.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(sign, log|P_k|)`; `k = -1` gives `(0, -inf)`.
    pub fn get(&self, k: isize) -> (f64, f64) {
        if k < 0 {
            return (0.0, f64::NEG_INFINITY);
        }
        let m = self.mantissas[k as usize];
        if m == 0.0 {
            (0.0, f64::NEG_INFINITY)
        } else {
            (m.signum(), m.abs().ln() + self.log_scales[k as usize])
        }
    }

    pub fn sign(&self, k: isize) -> f64 {
        self.get(k).0
    }

    pub fn log_abs(&self, k: isize) -> f64 {
        self.get(k).1
    }

    /// `P_k · e^{-reference}`.
    pub fn scaled(&self, k: isize, reference: f64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        let k = k as usize;
        self.mantissas[k] * (self.log_scales[k] - reference).exp()
    }

    /// Plain value; may overflow for long sequences.
    pub fn value(&self, k: isize) -> f64 {
        self.scaled(k, 0.0)
    }
}

/// Number of eigenvalues of the box strictly below `energy`, from the signs
/// of the LDLᵀ pivots of `H − E`. A zero pivot is replaced by
/// `−eps·(max|diag| + 2)`.
pub fn sturm_count(b: &BoxOperator, energy: f64) -> usize {
    sturm_count_diagonal(b.diagonal(), energy)
}

pub fn sturm_count_diagonal(diagonal: &[f64], energy: f64) -> usize {
    let scale = diagonal.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 2.0;
    let tiny = -f64::EPSILON * scale;
    let mut count = 0;
    let mut d = 1.0f64;
    let mut first = true;
    for &v in diagonal {
        d = if first { v - energy } else { (v - energy) - 1.0 / d };
        first = false;
        if d == 0.0 {
            d = tiny;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}
