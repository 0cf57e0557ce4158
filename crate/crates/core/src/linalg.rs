//! Small dense helpers: 2×2 matrices, exact power-of-two rescaling,
//! deterministic summation and a pivoted tridiagonal solver.

use std::ops::{Add, Mul, Sub};

/// A real 2×2 matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub const fn diag(x: f64, y: f64) -> Self {
        Self::new(x, 0.0, 0.0, y)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Adjugate; equals the inverse when the determinant is one.
    pub fn adjugate(&self) -> Mat2 {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn inverse(&self) -> Mat2 {
        self.adjugate().scale(1.0 / self.det())
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn frobenius(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    /// Operator 2-norm (largest singular value), closed form.
    pub fn norm(&self) -> f64 {
        let (smax, _) = self.singular_values();
        smax
    }

    /// (σ_max, σ_min).
    pub fn singular_values(&self) -> (f64, f64) {
        let m = self.max_abs();
        if m == 0.0 {
            return (0.0, 0.0);
        }
        // Work on a scaled copy so the squares cannot overflow; the scale is
        // split in two so subnormal inputs stay in range.
        let e = exponent_of(m);
        let s = self.scale(pow2(-e / 2)).scale(pow2(-(e - e / 2)));
        let m = pow2(e / 2) * pow2(e - e / 2);
        let f2 = s.a * s.a + s.b * s.b + s.c * s.c + s.d * s.d;
        let det = s.det().abs();
        let disc = ((f2 - 2.0 * det) * (f2 + 2.0 * det)).max(0.0).sqrt();
        let smax2 = 0.5 * (f2 + disc);
        let smax = smax2.sqrt();
        let smin = if smax > 0.0 { det / smax } else { 0.0 };
        (smax * m, smin * m)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

/// Euclidean norm of a 2-vector.
pub fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Binary exponent e with `x / 2^e ∈ [1, 2)` for finite nonzero `x`.
pub fn exponent_of(x: f64) -> i32 {
    debug_assert!(x.is_finite() && x != 0.0);
    let bits = x.abs().to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // subnormal: normalise first
        exponent_of(x * f64::from_bits(((1023 + 64) as u64) << 52)) - 64
    } else {
        raw - 1023
    }
}

/// Exact multiplication by 2^e for |e| within the normal range.
pub fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// `x·2^e` for any integer `e`, saturating to zero or infinity.
pub fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= pow2(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= pow2(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * pow2(e as i32)
}

/// Pairwise (tree) summation. Deterministic for a given slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Solve `T x = rhs` for the symmetric tridiagonal `T` with diagonal `diag`
/// and all off-diagonal entries equal to `off`, using Gaussian elimination
/// with partial pivoting (the LAPACK `gtsv` scheme). Exactly zero pivots
/// are replaced by `tiny` so the solver can be used for inverse iteration.
pub fn solve_tridiagonal(diag: &[f64], off: f64, rhs: &[f64], tiny: f64) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        let p = if diag[0] == 0.0 { tiny } else { diag[0] };
        return vec![rhs[0] / p];
    }
    // Row i of U holds (u0, u1, u2) for columns i, i+1, i+2.
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut b = rhs.to_vec();
    // Current working row: (d, du) in columns (i, i+1); next row lower entry `off`.
    let mut cur_d = diag[0];
    let mut cur_du = off;
    let mut cur_du2 = 0.0;
    for i in 0..n - 1 {
        let next_dl = off;
        let next_d = diag[i + 1];
        let next_du = if i + 2 < n { off } else { 0.0 };
        if cur_d.abs() >= next_dl.abs() {
            let p = if cur_d == 0.0 { tiny } else { cur_d };
            let f = next_dl / p;
            u0[i] = p;
            u1[i] = cur_du;
            u2[i] = cur_du2;
            b[i + 1] -= f * b[i];
            cur_d = next_d - f * cur_du;
            cur_du = next_du - f * cur_du2;
            cur_du2 = 0.0;
        } else {
            // swap rows i and i+1
            let f = cur_d / next_dl;
            u0[i] = next_dl;
            u1[i] = next_d;
            u2[i] = next_du;
            b.swap(i, i + 1);
            b[i + 1] -= f * b[i];
            let nd = cur_du - f * next_d;
            let ndu = cur_du2 - f * next_du;
            cur_d = nd;
            cur_du = ndu;
            cur_du2 = 0.0;
        }
    }
    u0[n - 1] = if cur_d == 0.0 { tiny } else { cur_d };
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / u0[i];
    }
    x
}
