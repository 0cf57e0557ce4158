use super::OscillationError;
use crate::lattice::OperatorSpec;

#[derive(Clone, Debug, PartialEq)]
enum Coefficients {
    Schrodinger(OperatorSpec),
    /// `b(n) = V(−n) + g(−n)`.
    Reflected(OperatorSpec),
    Table {
        start: i64,
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

/// Coefficients `a(n) < 0`, `b(n)` of a whole-line Jacobi operator, with
/// spectral parameter `λ = −E`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiForm {
    coeffs: Coefficients,
}

/// The canonical Jacobi form of `H̃`: `a ≡ −1`, `b = V + g`, `λ = −E`.
pub fn to_jacobi(op: &OperatorSpec) -> JacobiForm {
    JacobiForm {
        coeffs: Coefficients::Schrodinger(op.clone()),
    }
}

/// The canonical form of the reflected operator `n ↦ −n`.
pub(crate) fn to_jacobi_reflected(op: &OperatorSpec) -> JacobiForm {
    JacobiForm {
        coeffs: Coefficients::Reflected(op.clone()),
    }
}

impl JacobiForm {
    /// Explicit coefficients on `[start, start + len)`. Outside the table the
    /// operator is free: `a = −1`, `b = 0`.
    pub fn from_table(start: i64, a: Vec<f64>, b: Vec<f64>) -> Result<Self, OscillationError> {
        if a.len() != b.len() {
            return Err(OscillationError::BadParameter(format!(
                "a has {} entries, b has {}",
                a.len(),
                b.len()
            )));
        }
        if let Some(i) = a.iter().position(|x| !(*x < 0.0)) {
            return Err(OscillationError::BadParameter(format!(
                "a({}) = {} is not negative",
                start + i as i64,
                a[i]
            )));
        }
        Ok(Self {
            coeffs: Coefficients::Table { start, a, b },
        })
    }

    pub fn a(&self, n: i64) -> f64 {
        match &self.coeffs {
            Coefficients::Schrodinger(_) | Coefficients::Reflected(_) => -1.0,
            Coefficients::Table { start, a, .. } => table_get(a, n - start).unwrap_or(-1.0),
        }
    }

    pub fn b(&self, n: i64) -> f64 {
        match &self.coeffs {
            Coefficients::Schrodinger(op) => op.eval_site(n),
            Coefficients::Reflected(op) => op.eval_site(-n),
            Coefficients::Table { start, b, .. } => table_get(b, n - start).unwrap_or(0.0),
        }
    }

    /// The underlying Schrödinger operator for the canonical form.
    pub fn operator(&self) -> Option<&OperatorSpec> {
        match &self.coeffs {
            Coefficients::Schrodinger(op) => Some(op),
            Coefficients::Reflected(_) | Coefficients::Table { .. } => None,
        }
    }

    pub fn lambda_of(&self, energy: f64) -> f64 {
        -energy
    }

    pub fn energy_of(&self, lambda: f64) -> f64 {
        -lambda
    }

    /// `(Hu)(n) − λu(n)` for three consecutive values.
    pub fn residual(&self, lambda: f64, n: i64, prev: f64, cur: f64, next: f64) -> f64 {
        self.a(n) * next + self.a(n - 1) * prev - (self.b(n) + lambda) * cur
    }
}

fn table_get(v: &[f64], i: i64) -> Option<f64> {
    if i < 0 {
        None
    } else {
        v.get(i as usize).copied()
    }
}
