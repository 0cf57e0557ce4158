use super::{JacobiForm, OscillationError};
use crate::linalg::{exponent_of, ldexp};
use std::f64::consts::LN_2;
use std::sync::Arc;

const RESIDUAL_TOL: f64 = 1e-9;
const PAIR_HI: i32 = 64;

/// Split a finite `x` into `(m, e)` with `x = m·2^e` and `|m| ∈ [1, 2)`.
pub(crate) fn split(x: f64) -> (f64, i64) {
    if x == 0.0 {
        return (0.0, 0);
    }
    let e = exponent_of(x);
    (ldexp(x, -(e as i64)), e as i64)
}

/// A solution of `Hu = λu` on a window `[start, end]`, stored site by site
/// as `u(n) = m(n)·2^{e(n)}` so that traces spanning thousands of orders of
/// magnitude keep full relative precision.
#[derive(Clone, Debug)]
pub struct SolutionTrace {
    jacobi: Arc<JacobiForm>,
    lambda: f64,
    start: i64,
    mant: Vec<f64>,
    exp: Vec<i64>,
}

/// A pair of consecutive values sharing one binary exponent.
struct Pair {
    lo: f64,
    hi: f64,
    shift: i64,
}

impl Pair {
    fn new(lo: f64, hi: f64) -> Self {
        let mut p = Self { lo, hi, shift: 0 };
        p.rescale();
        p
    }

    fn rescale(&mut self) {
        let m = self.lo.abs().max(self.hi.abs());
        if m == 0.0 || !m.is_finite() {
            return;
        }
        let e = exponent_of(m);
        if !(-PAIR_HI..=PAIR_HI).contains(&e) {
            self.lo = ldexp(self.lo, -(e as i64));
            self.hi = ldexp(self.hi, -(e as i64));
            self.shift += e as i64;
        }
    }

    fn stored(&self, x: f64) -> (f64, i64) {
        let (m, e) = split(x);
        (m, if m == 0.0 { 0 } else { e + self.shift })
    }
}

impl SolutionTrace {
    /// Wrap explicit values `u(start), u(start+1), …`, checking the
    /// three-term equation at every interior site.
    pub fn from_values(
        jacobi: Arc<JacobiForm>,
        lambda: f64,
        start: i64,
        values: &[f64],
    ) -> Result<Self, OscillationError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(OscillationError::BadParameter(
                "trace values must be finite and nonempty".into(),
            ));
        }
        let (mant, exp) = values.iter().map(|v| split(*v)).unzip();
        let t = Self {
            jacobi,
            lambda,
            start,
            mant,
            exp,
        };
        t.check()?;
        Ok(t)
    }

    pub(crate) fn from_parts(jacobi: Arc<JacobiForm>, lambda: f64, start: i64, mant: Vec<f64>, exp: Vec<i64>) -> Self {
        Self {
            jacobi,
            lambda,
            start,
            mant,
            exp,
        }
    }

    /// Forward recursion from `(u(start), u(start+1))` to `end`.
    pub fn forward(
        jacobi: Arc<JacobiForm>,
        lambda: f64,
        start: i64,
        end: i64,
        initial: (f64, f64),
    ) -> Result<Self, OscillationError> {
        if end <= start {
            return Err(OscillationError::BadParameter(format!("empty window [{start}, {end}]")));
        }
        let len = (end - start + 1) as usize;
        let mut mant = Vec::with_capacity(len);
        let mut exp = Vec::with_capacity(len);
        let mut p = Pair::new(initial.0, initial.1);
        for x in [p.lo, p.hi] {
            let (m, e) = p.stored(x);
            mant.push(m);
            exp.push(e);
        }
        for n in start + 1..end {
            let next = ((lambda + jacobi.b(n)) * p.hi - jacobi.a(n - 1) * p.lo) / jacobi.a(n);
            p.lo = p.hi;
            p.hi = next;
            p.rescale();
            let (m, e) = p.stored(p.hi);
            mant.push(m);
            exp.push(e);
        }
        Ok(Self::from_parts(jacobi, lambda, start, mant, exp))
    }

    /// Backward recursion from `(u(end−1), u(end))` down to `start`.
    pub fn backward(
        jacobi: Arc<JacobiForm>,
        lambda: f64,
        start: i64,
        end: i64,
        terminal: (f64, f64),
    ) -> Result<Self, OscillationError> {
        if end <= start {
            return Err(OscillationError::BadParameter(format!("empty window [{start}, {end}]")));
        }
        let len = (end - start + 1) as usize;
        let mut mant = vec![0.0; len];
        let mut exp = vec![0; len];
        let mut p = Pair::new(terminal.0, terminal.1);
        (mant[len - 2], exp[len - 2]) = p.stored(p.lo);
        (mant[len - 1], exp[len - 1]) = p.stored(p.hi);
        for n in (start + 1..end).rev() {
            let prev = ((lambda + jacobi.b(n)) * p.lo - jacobi.a(n) * p.hi) / jacobi.a(n - 1);
            p.hi = p.lo;
            p.lo = prev;
            p.rescale();
            let i = (n - 1 - start) as usize;
            (mant[i], exp[i]) = p.stored(p.lo);
        }
        Ok(Self::from_parts(jacobi, lambda, start, mant, exp))
    }

    pub fn jacobi(&self) -> &Arc<JacobiForm> {
        &self.jacobi
    }

    /// Spectral parameter in Jacobi coordinates.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Schrödinger energy `E = −λ`.
    pub fn energy(&self) -> f64 {
        self.jacobi.energy_of(self.lambda)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.mant.len() as i64 - 1
    }

    pub fn contains(&self, n: i64) -> bool {
        self.start <= n && n <= self.end()
    }

    fn index(&self, n: i64) -> Result<usize, OscillationError> {
        if self.contains(n) {
            Ok((n - self.start) as usize)
        } else {
            Err(OscillationError::OutOfWindow {
                site: n,
                start: self.start,
                end: self.end(),
            })
        }
    }

    pub(crate) fn parts(&self, n: i64) -> (f64, i64) {
        let i = (n - self.start) as usize;
        (self.mant[i], self.exp[i])
    }

    /// `u(n)` as a float; overflows or underflows far out on long traces.
    pub fn value(&self, n: i64) -> f64 {
        let (m, e) = self.parts(n);
        ldexp(m, e)
    }

    /// `u(n)/u(reference)` evaluated through the exponent difference.
    pub fn ratio(&self, n: i64, reference: i64) -> f64 {
        let (m, e) = self.parts(n);
        let (mr, er) = self.parts(reference);
        ldexp(m / mr, e - er)
    }

    pub fn log_abs(&self, n: i64) -> f64 {
        let (m, e) = self.parts(n);
        m.abs().ln() + e as f64 * LN_2
    }

    pub fn sign(&self, n: i64) -> f64 {
        let (m, _) = self.parts(n);
        if m == 0.0 {
            0.0
        } else {
            m.signum()
        }
    }

    /// Largest three-term residual over interior sites, relative to
    /// `max|u| · (|a(n)| + |a(n−1)| + |b(n) + λ|)`.
    pub fn max_relative_residual(&self) -> (i64, f64) {
        let top = self
            .mant
            .iter()
            .zip(&self.exp)
            .filter(|(m, _)| **m != 0.0)
            .map(|(_, e)| *e)
            .max();
        let Some(top) = top else {
            return (self.start, 0.0);
        };
        let mut worst = (self.start, 0.0);
        for n in self.start + 1..self.end() {
            let sites = [self.parts(n - 1), self.parts(n), self.parts(n + 1)];
            let e = sites.iter().filter(|s| s.0 != 0.0).map(|s| s.1).max().unwrap_or(top);
            let [p, c, x] = sites.map(|(m, k)| ldexp(m, k - e));
            let j = &self.jacobi;
            let r = j.residual(self.lambda, n, p, c, x).abs();
            let scale = j.a(n).abs() + j.a(n - 1).abs() + (j.b(n) + self.lambda).abs();
            let rel = ldexp(r, e - top) / scale;
            if rel > worst.1 {
                worst = (n, rel);
            }
        }
        worst
    }

    fn check(&self) -> Result<(), OscillationError> {
        let (site, residual) = self.max_relative_residual();
        if residual > RESIDUAL_TOL {
            return Err(OscillationError::NotASolution { site, residual });
        }
        Ok(())
    }

    /// The same trace viewed through `n ↦ −n`, attached to `jacobi`.
    pub(crate) fn mirrored(&self, jacobi: Arc<JacobiForm>) -> Self {
        let mut mant = self.mant.clone();
        let mut exp = self.exp.clone();
        mant.reverse();
        exp.reverse();
        Self::from_parts(jacobi, self.lambda, -self.end(), mant, exp)
    }
}

fn check_consecutive_zeros(u: &SolutionTrace, m: i64, n: i64) -> Result<(), OscillationError> {
    for k in m..n {
        if u.sign(k) == 0.0 && u.sign(k + 1) == 0.0 {
            return Err(OscillationError::DegenerateTrace { site: k });
        }
    }
    Ok(())
}

/// Nodes of `u` between `m` and `n`: sites `k` with `u(k) = 0` or
/// `a(k)u(k)u(k+1) > 0`, for `m < k < n`, plus `k = m` when `u(m) ≠ 0`.
/// With `sign_flip` the nodes of `(−1)ⁿu(n)` are counted instead.
pub fn count_nodes(u: &SolutionTrace, m: i64, n: i64, sign_flip: bool) -> Result<usize, OscillationError> {
    u.index(m)?;
    u.index(n)?;
    if n < m {
        return Err(OscillationError::BadParameter(format!("window ({m}, {n}) is reversed")));
    }
    check_consecutive_zeros(u, m, n)?;
    let flip = if sign_flip { -1.0 } else { 1.0 };
    let mut count = 0;
    for k in m..n {
        let zero = u.sign(k) == 0.0;
        let node = zero || flip * u.jacobi.a(k) * u.sign(k) * u.sign(k + 1) > 0.0;
        if node && (k > m || !zero) {
            count += 1;
        }
    }
    Ok(count)
}

/// `W(n)` as `(mantissa, binary exponent)`.
pub(crate) fn wronskian_parts(u1: &SolutionTrace, u2: &SolutionTrace, n: i64) -> (f64, i64) {
    let (a1, e1) = u1.parts(n);
    let (b1, f1) = u1.parts(n + 1);
    let (a2, e2) = u2.parts(n);
    let (b2, f2) = u2.parts(n + 1);
    let (x, ex) = (a1 * b2, e1 + f2);
    let (y, ey) = (b1 * a2, f1 + e2);
    let top = match (x == 0.0, y == 0.0) {
        (true, true) => return (0.0, 0),
        (true, false) => ey,
        (false, true) => ex,
        (false, false) => ex.max(ey),
    };
    let d = ldexp(x, ex - top) - ldexp(y, ey - top);
    let (m, e) = split(u1.jacobi.a(n) * d);
    (m, if m == 0.0 { 0 } else { e + top })
}

/// `W(u1, u2)(n) = a(n)(u1(n)u2(n+1) − u1(n+1)u2(n))`.
pub fn wronskian(u1: &SolutionTrace, u2: &SolutionTrace, n: i64) -> Result<f64, OscillationError> {
    for u in [u1, u2] {
        u.index(n)?;
        u.index(n + 1)?;
    }
    let (m, e) = wronskian_parts(u1, u2, n);
    Ok(ldexp(m, e))
}

/// Nodes of `W(u1, u2)` between `m` and `n`, with the same boundary
/// convention as [`count_nodes`]. Both traces must cover `[m, n+1]`.
pub fn count_wronskian_nodes(
    u1: &SolutionTrace,
    u2: &SolutionTrace,
    m: i64,
    n: i64,
) -> Result<usize, OscillationError> {
    if n < m {
        return Err(OscillationError::BadParameter(format!("window ({m}, {n}) is reversed")));
    }
    for u in [u1, u2] {
        u.index(m)?;
        u.index(n + 1)?;
    }
    let w: Vec<f64> = (m..=n).map(|k| wronskian_parts(u1, u2, k).0).collect();
    if w.iter().all(|x| *x == 0.0) {
        return Err(OscillationError::VanishingWronskian { start: m, end: n });
    }
    let mut count = 0;
    for (i, pair) in w.windows(2).enumerate() {
        let zero = pair[0] == 0.0;
        let node = zero || pair[0] * pair[1] < 0.0;
        if node && (i > 0 || !zero) {
            count += 1;
        }
    }
    Ok(count)
}
