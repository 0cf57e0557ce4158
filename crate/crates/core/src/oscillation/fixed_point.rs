//! Fixed-point constructions for `x(n+1) = (A + R(n))x(n)` with `A` a
//! parabolic Jordan block or a hyperbolic upper-triangular matrix and `R`
//! summable. The infinite sums of the variation-of-constants formulas are
//! truncated at the horizon (`R(s) = 0` for `s ≥ horizon`), so the returned
//! sequences are exact solutions of the truncated recursion.

use super::OscillationError;
use crate::linalg::{norm2, Mat2};
use serde::{Deserialize, Serialize};

const MAX_ITER: usize = 400;
const TARGET: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum N0Policy {
    /// Smallest admissible `n0` from a scan.
    Auto,
    Fixed(i64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub n0: i64,
    pub horizon: i64,
    pub iterations: usize,
    /// Last change between iterates in the construction's own norm.
    pub final_update: f64,
    /// The quantity the contraction threshold is imposed on.
    pub contraction: f64,
    /// The a priori deviation bound, evaluated by direct summation.
    pub bound: f64,
    /// The measured deviation in the same norm as `bound`.
    pub deviation: f64,
    /// `max ‖x(n+1) − (A + R(n))x(n)‖ / ‖x(n)‖`.
    pub max_residual: f64,
    pub bound_holds: bool,
    pub residual_ok: bool,
}

/// Bounded and linearly growing solutions on `[n0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicSolutions {
    pub n0: i64,
    /// `phi[i] = φ(n0 + i)`, close to `A^n e1`.
    pub phi: Vec<[f64; 2]>,
    /// `psi[i] = ψ(n0 + i)`, close to `A^n e2`.
    pub psi: Vec<[f64; 2]>,
    pub phi_report: FixedPointReport,
    pub psi_report: FixedPointReport,
    /// `inf_n` of `‖φ‖`, `‖ψ‖`, `‖φ ± ψ‖/√2` over the window.
    pub no_decay_floor: f64,
}

/// The growing solution `φ(n) = λⁿ·scaled(n)` on `[n0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicSolutions {
    pub n0: i64,
    pub lambda: f64,
    pub scaled: Vec<[f64; 2]>,
    pub report: FixedPointReport,
}

fn r_at(r: &[Mat2], horizon: i64, s: i64) -> Mat2 {
    if s < 0 || s >= horizon || s as usize >= r.len() {
        Mat2::ZERO
    } else {
        r[s as usize]
    }
}

fn sub(x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    [x[0] - y[0], x[1] - y[1]]
}

fn choose_n0(
    policy: N0Policy,
    min_n0: i64,
    horizon: i64,
    threshold: f64,
    tail: impl Fn(i64) -> f64,
) -> Result<i64, OscillationError> {
    match policy {
        N0Policy::Fixed(n0) => {
            if n0 < min_n0 || n0 >= horizon {
                return Err(OscillationError::BadParameter(format!(
                    "n0 = {n0} outside [{min_n0}, {horizon})"
                )));
            }
            let t = tail(n0);
            if t < threshold {
                Ok(n0)
            } else {
                Err(OscillationError::NoContraction { horizon, best: t })
            }
        }
        N0Policy::Auto => {
            let mut best = f64::INFINITY;
            for n0 in min_n0..horizon {
                let t = tail(n0);
                if t < threshold {
                    return Ok(n0);
                }
                best = best.min(t);
            }
            Err(OscillationError::NoContraction { horizon, best })
        }
    }
}

/// Suffix sums `Σ_{s ≥ n} f(s)` for `n ∈ [lo, hi]`, accumulated from the far end.
fn suffix(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Vec<f64> {
    let len = (hi - lo + 1) as usize;
    let mut out = vec![0.0; len + 1];
    for i in (0..len).rev() {
        out[i] = out[i + 1] + f(lo + i as i64);
    }
    out
}

/// Picard iteration for the parabolic block `[[1, c], [0, 1]]` on
/// `[n0, horizon]`:
/// `x(n) = x0(n) + Σ_{s=n0+1}^{n} Φ1(s)w(s) − Φ2(n)Σ_{s>n} w(s)`,
/// `w(s) = R(s−1)x(s−1)`, `Φ1(s) = [[1, −cs], [0, 0]]`, `Φ2(n) = [[0, cn], [0, 1]]`.
/// `weight(n)` is the norm weight (`1` or `n`).
fn parabolic_iterate(
    c: f64,
    r: &dyn Fn(i64) -> Mat2,
    n0: i64,
    horizon: i64,
    x0: &dyn Fn(i64) -> [f64; 2],
    weight: &dyn Fn(i64) -> f64,
) -> (Vec<[f64; 2]>, usize, f64) {
    let len = (horizon - n0 + 1) as usize;
    let mut x: Vec<[f64; 2]> = (0..len).map(|i| x0(n0 + i as i64)).collect();
    let mut update = f64::INFINITY;
    let mut iterations = 0;
    let mut w = vec![[0.0; 2]; len];
    while iterations < MAX_ITER {
        iterations += 1;
        for i in 1..len {
            w[i] = r(n0 + i as i64 - 1).apply(x[i - 1]);
        }
        // G(n) = Σ_{s>n} w2(s)
        let mut g = vec![0.0; len];
        for i in (0..len - 1).rev() {
            g[i] = g[i + 1] + w[i + 1][1];
        }
        let mut f = 0.0;
        let mut change: f64 = 0.0;
        for i in 0..len {
            let n = n0 + i as i64;
            if i > 0 {
                f += w[i][0] - c * n as f64 * w[i][1];
            }
            let base = x0(n);
            let next = [base[0] + f - c * n as f64 * g[i], base[1] - g[i]];
            change = change.max(norm2(sub(next, x[i])) / weight(n));
            x[i] = next;
        }
        let stalled = change >= update && change < TARGET;
        update = change;
        if change < 1e-15 || stalled {
            break;
        }
    }
    (x, iterations, update)
}

/// Bounded and linearly growing solutions of `x(n+1) = (A + R(n))x(n)` for
/// `A = [[σ, c], [0, σ]]`, `σ = ±1`, `c ≠ 0`.
/// `r[s]` is `R(s)`; values at `s ≥ horizon` are ignored.
///
/// With `K0 = K1 = K2 = √(1+c²)` the admissible `n0 ≥ 1` satisfies
/// `(K1+K2)Σ_{s≥n0}|R(s)|s < 1/2`, and the certificate is
/// `sup‖σ^{−n}φ(n) − e1‖ ≤ 2K0(K1+K2)Σ_{s≥n0}|R(s)|(s+1)`, with the same
/// bound for `sup‖σ^{−n}ψ(n) − (σcn, 1)‖/n`.
pub fn parabolic_solutions(
    a: Mat2,
    r: &[Mat2],
    n0: N0Policy,
    horizon: i64,
) -> Result<ParabolicSolutions, OscillationError> {
    let sigma = a.a;
    if a.c != 0.0 || a.d != sigma || sigma.abs() != 1.0 || a.b == 0.0 || !a.b.is_finite() {
        return Err(OscillationError::BadParameter(format!(
            "{a:?} is not a parabolic block [[±1, c], [0, ±1]]"
        )));
    }
    parabolic_with(sigma, a.b, &|s| r_at(r, horizon, s), n0, horizon)
}

pub(crate) fn parabolic_with(
    sigma: f64,
    c_orig: f64,
    r: &dyn Fn(i64) -> Mat2,
    n0: N0Policy,
    horizon: i64,
) -> Result<ParabolicSolutions, OscillationError> {
    if horizon < 2 {
        return Err(OscillationError::BadParameter("horizon must be at least 2".into()));
    }
    // σ^{−n}x(n) solves the recursion with c' = σc, R' = σR.
    let c = sigma * c_orig;
    let rs = |s: i64| r(s).scale(sigma);
    let k = (1.0 + c * c).sqrt();
    let moments = suffix(1, horizon, |s| r(s).norm() * s as f64);
    let shifted = suffix(1, horizon, |s| r(s).norm() * (s + 1) as f64);
    let tail = |n: i64| moments[(n - 1) as usize];
    let n0 = choose_n0(n0, 1, horizon, 0.5, |n| 2.0 * k * tail(n))?;
    let contraction = 2.0 * k * tail(n0);
    let bound = 2.0 * k * 2.0 * k * shifted[(n0 - 1) as usize];

    let (phi_s, it_phi, up_phi) = parabolic_iterate(c, &rs, n0, horizon, &|_| [1.0, 0.0], &|_| 1.0);
    let (psi_s, it_psi, up_psi) = parabolic_iterate(c, &rs, n0, horizon, &|n| [c * n as f64, 1.0], &|n| n as f64);

    let sign = |n: i64| if sigma < 0.0 && n.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    let orig = |v: &[[f64; 2]]| -> Vec<[f64; 2]> {
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                let s = sign(n0 + i as i64);
                [s * x[0], s * x[1]]
            })
            .collect()
    };
    let phi = orig(&phi_s);
    let psi = orig(&psi_s);
    let a = Mat2::new(sigma, c_orig, 0.0, sigma);
    let residual = |x: &[[f64; 2]]| -> f64 {
        (0..x.len() - 1)
            .map(|i| {
                let step = a + r(n0 + i as i64);
                norm2(sub(x[i + 1], step.apply(x[i]))) / norm2(x[i])
            })
            .fold(0.0, f64::max)
    };
    let dev_phi = phi_s.iter().map(|x| norm2(sub(*x, [1.0, 0.0]))).fold(0.0, f64::max);
    let dev_psi = psi_s
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let n = (n0 + i as i64) as f64;
            norm2(sub(*x, [c * n, 1.0])) / n
        })
        .fold(0.0, f64::max);
    let report = |iterations, final_update, deviation: f64, max_residual: f64| FixedPointReport {
        n0,
        horizon,
        iterations,
        final_update,
        contraction,
        bound,
        deviation,
        max_residual,
        bound_holds: deviation <= bound,
        residual_ok: max_residual <= RESIDUAL_TOL,
    };
    let phi_report = report(it_phi, up_phi, dev_phi, residual(&phi));
    let psi_report = report(it_psi, up_psi, dev_psi, residual(&psi));
    for rep in [&phi_report, &psi_report] {
        if !(rep.final_update < TARGET) {
            return Err(OscillationError::NoContraction {
                horizon,
                best: rep.final_update,
            });
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let no_decay_floor = phi
        .iter()
        .zip(&psi)
        .map(|(p, q)| {
            let plus = [h * (p[0] + q[0]), h * (p[1] + q[1])];
            let minus = [h * (p[0] - q[0]), h * (p[1] - q[1])];
            norm2(*p).min(norm2(*q)).min(norm2(plus)).min(norm2(minus))
        })
        .fold(f64::INFINITY, f64::min);
    Ok(ParabolicSolutions {
        n0,
        phi,
        psi,
        phi_report,
        psi_report,
        no_decay_floor,
    })
}

/// Picard iteration of the scaled hyperbolic fixed point on `[lo, hi]`:
/// `χ(n) = e1 + λ⁻¹(Q·S(n) − P·T(n))` with `S(n) = λ⁻²S(n−1) + w(n)`,
/// `S(lo) = 0`, `T(n) = Σ_{s=n+1}^{hi} w(s)` and `w(s) = R(s−1)χ(s−1)`.
/// `Q = [[0, −c/d], [0, 1]]`, `P = [[1, c/d], [0, 0]]`, `d = λ − λ⁻¹`.
/// On `[n0, horizon]` this is the growing solution `λⁿχ(n)`; on
/// `[−horizon, −n0]` it is the solution decaying like `λⁿ` at `−∞`.
pub(crate) fn hyperbolic_window(
    lambda: f64,
    c: f64,
    r: &dyn Fn(i64) -> Mat2,
    lo: i64,
    hi: i64,
) -> (Vec<[f64; 2]>, usize, f64) {
    let len = (hi - lo + 1) as usize;
    let d = lambda - 1.0 / lambda;
    let q = c / d;
    let inv = 1.0 / lambda;
    let inv2 = inv * inv;
    let mut x = vec![[1.0, 0.0]; len];
    let mut w = vec![[0.0; 2]; len];
    let mut update = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        for i in 1..len {
            w[i] = r(lo + i as i64 - 1).apply(x[i - 1]);
        }
        let mut t = vec![[0.0; 2]; len];
        for i in (0..len - 1).rev() {
            t[i] = [t[i + 1][0] + w[i + 1][0], t[i + 1][1] + w[i + 1][1]];
        }
        let mut s = [0.0; 2];
        let mut change: f64 = 0.0;
        for i in 0..len {
            if i > 0 {
                s = [inv2 * s[0] + w[i][0], inv2 * s[1] + w[i][1]];
            }
            // Q·S only sees S₂, P·T only sees T.
            let qs = [-q * s[1], s[1]];
            let pt = [t[i][0] + q * t[i][1], 0.0];
            let next = [1.0 + inv * (qs[0] - pt[0]), inv * qs[1]];
            change = change.max(norm2(sub(next, x[i])));
            x[i] = next;
        }
        let stalled = change >= update && change < TARGET;
        update = change;
        if change < 1e-15 || stalled {
            break;
        }
    }
    (x, iterations, update)
}

/// The growing solution of `x(n+1) = (A + R(n))x(n)` for
/// `A = [[λ, c], [0, 1/λ]]`, `|λ| > 1`. The
/// threshold is `2K·Σ_{s≥n0}|R(s)| < min(ε, 1/2)` with `K = √(1 + c²/d²)`,
/// `d = λ − 1/λ`; the certificate is `sup‖λ^{−n}φ(n) − e1‖ ≤ 2K·Σ|R(s)|`.
pub fn hyperbolic_solutions(
    a: Mat2,
    r: &[Mat2],
    eps: f64,
    n0: N0Policy,
    horizon: i64,
) -> Result<HyperbolicSolutions, OscillationError> {
    let lambda = a.a;
    if a.c != 0.0 || !(lambda.abs() > 1.0) || !lambda.is_finite() || (a.d * lambda - 1.0).abs() > 1e-12 {
        return Err(OscillationError::BadParameter(format!(
            "{a:?} is not [[λ, c], [0, 1/λ]] with |λ| > 1"
        )));
    }
    if !(eps > 0.0) {
        return Err(OscillationError::BadParameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if horizon < 1 {
        return Err(OscillationError::BadParameter("horizon must be at least 1".into()));
    }
    let c = a.b;
    let d = lambda - 1.0 / lambda;
    let k = (1.0 + (c / d).powi(2)).sqrt();
    let rr = |s: i64| r_at(r, horizon, s);
    let sums = suffix(0, horizon, |s| rr(s).norm());
    let n0 = choose_n0(n0, 0, horizon, eps.min(0.5), |n| 2.0 * k * sums[n as usize])?;
    let bound = 2.0 * k * sums[n0 as usize];
    let (scaled, iterations, final_update) = hyperbolic_window(lambda, c, &rr, n0, horizon);
    let deviation = scaled.iter().map(|x| norm2(sub(*x, [1.0, 0.0]))).fold(0.0, f64::max);
    let max_residual = (0..scaled.len() - 1)
        .map(|i| {
            let step = a + rr(n0 + i as i64);
            let lhs = [lambda * scaled[i + 1][0], lambda * scaled[i + 1][1]];
            norm2(sub(lhs, step.apply(scaled[i]))) / norm2(scaled[i])
        })
        .fold(0.0, f64::max);
    if !(final_update < TARGET) {
        return Err(OscillationError::NoContraction {
            horizon,
            best: final_update,
        });
    }
    Ok(HyperbolicSolutions {
        n0,
        lambda,
        scaled,
        report: FixedPointReport {
            n0,
            horizon,
            iterations,
            final_update,
            contraction: bound,
            bound,
            deviation,
            max_residual,
            bound_holds: deviation <= bound,
            residual_ok: max_residual <= RESIDUAL_TOL,
        },
    })
}
