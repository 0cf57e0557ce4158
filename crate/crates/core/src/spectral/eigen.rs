use super::determinant::sturm_count_diagonal;
use super::SpectralError;
use crate::lattice::BoxOperator;
use crate::linalg::solve_tridiagonal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const SEED: u64 = 0x5EED_0F_E16E;
const TAIL_FLOOR: f64 = 1e-280;
const MAX_TAIL_SWEEPS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub value: f64,
    /// Indexed from the box's first site; unit norm, largest entry positive.
    pub vector: Vec<f64>,
    pub residual: f64,
}

impl Eigenpair {
    /// Local index of the largest-magnitude entry.
    pub fn peak(&self) -> usize {
        argmax_abs(&self.vector)
    }

    /// Center of mass of `|ψ|²` (local index).
    pub fn center_of_mass(&self) -> f64 {
        self.vector.iter().enumerate().map(|(i, x)| i as f64 * x * x).sum()
    }
}

fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

fn normalize(x: &mut [f64]) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return;
    }
    for v in x.iter_mut() {
        *v /= m;
    }
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= n;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rayleigh(b: &BoxOperator, x: &[f64]) -> f64 {
    dot(x, &b.apply(x))
}

fn residual_norm(b: &BoxOperator, x: &[f64], lambda: f64) -> f64 {
    b.apply(x)
        .iter()
        .zip(x)
        .map(|(hx, xi)| (hx - lambda * xi).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Bisection for the `index`-th eigenvalue (0-based, ascending) inside
/// `(lo, hi)`, down to a few ulps.
fn bisect(diag: &[f64], index: usize, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1e-300) {
            return mid;
        }
        if sturm_count_diagonal(diag, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

fn orthogonalize(x: &mut [f64], against: &[Vec<f64>]) {
    for q in against {
        let p = dot(x, q);
        for (a, c) in x.iter_mut().zip(q) {
            *a -= p * c;
        }
    }
}

/// Inverse iteration at shift `sigma` from a seeded random start, kept
/// orthogonal to `against`: two steps, a Rayleigh-quotient step, then
/// fixed-shift sweeps until the tail profile above `1e-280` stops changing.
fn inverse_iteration(b: &BoxOperator, sigma: f64, seed: u64, against: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = b.len();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let tiny = f64::EPSILON * (b.norm_bound() + 2.0) * 1e-3;
    let solve = |shift: f64, rhs: &[f64]| {
        let d: Vec<f64> = b.diagonal().iter().map(|v| v - shift).collect();
        let mut y = solve_tridiagonal(&d, 1.0, rhs, tiny);
        normalize(&mut y);
        if !against.is_empty() {
            orthogonalize(&mut y, against);
            normalize(&mut y);
        }
        y
    };
    orthogonalize(&mut x, against);
    for _ in 0..2 {
        x = solve(sigma, &x);
    }
    let rq = rayleigh(b, &x);
    x = solve(rq, &x);
    for _ in 0..MAX_TAIL_SWEEPS {
        let y = solve(rq, &x);
        let settled = x.iter().zip(&y).all(|(a, c)| {
            let (a, c) = (a.abs(), c.abs());
            if a < TAIL_FLOOR && c < TAIL_FLOOR {
                true
            } else {
                (a.ln() - c.ln()).abs() < 1e-6
            }
        });
        x = y;
        if settled {
            break;
        }
    }
    (rayleigh(b, &x), x)
}

fn fix_sign(x: &mut [f64]) {
    if x[argmax_abs(x)] < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// All eigenpairs of the box with eigenvalue in `(e1, e2)`.
pub fn eigenpairs_in_window(b: &BoxOperator, e1: f64, e2: f64) -> Result<Vec<Eigenpair>, SpectralError> {
    if !(e1 < e2) {
        return Err(SpectralError::BadParameter(format!("empty window ({e1}, {e2})")));
    }
    let diag = b.diagonal();
    // Eigenvalues equal to e1 are excluded from the open window.
    let c1 = sturm_count_diagonal(diag, e1);
    let c1 = c1
        + (c1..diag.len())
            .take_while(|&j| bisect(diag, j, e1 - 1e-300, e2) <= e1)
            .count();
    let c2 = sturm_count_diagonal(diag, e2);
    if c2 <= c1 {
        return Ok(Vec::new());
    }
    let norm = b.norm_bound().max(1.0);
    let values: Vec<f64> = (c1..c2).into_par_iter().map(|j| bisect(diag, j, e1, e2)).collect();
    // Numerically coincident eigenvalues form a cluster whose vectors are
    // computed in sequence, each kept orthogonal to the earlier ones.
    let cluster_tol = 1e-10 * norm;
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && values[end] - values[end - 1] <= cluster_tol {
            end += 1;
        }
        clusters.push((start, end));
        start = end;
    }
    let mut pairs: Vec<Eigenpair> = clusters
        .par_iter()
        .flat_map_iter(|&(start, end)| {
            let mut done: Vec<Vec<f64>> = Vec::new();
            let mut out = Vec::new();
            for i in start..end {
                let (rq, x) = inverse_iteration(b, values[i], (c1 + i) as u64, &done);
                done.push(x.clone());
                out.push(Eigenpair {
                    value: rq,
                    vector: x,
                    residual: 0.0,
                });
            }
            out
        })
        .collect();

    for (i, p) in pairs.iter_mut().enumerate() {
        fix_sign(&mut p.vector);
        p.residual = residual_norm(b, &p.vector, p.value);
        if !(p.residual <= 1e-8 * norm) {
            return Err(SpectralError::IllConditioned {
                eigenvalue: values[i],
                residual: p.residual,
            });
        }
    }
    Ok(pairs)
}

/// Exponential decay rate of `|ψ(n)|` away from `center` (local index): the
/// negated common slope of `log|ψ|` against `|n − center|` over the outer
/// half of each side, with a separate intercept per side, ignoring entries
/// below `1e-280`.
pub fn decay_rate(vector: &[f64], center: usize) -> Result<f64, SpectralError> {
    let n = vector.len();
    if n < 64 || center >= n {
        return Err(SpectralError::TooShort { usable: 0 });
    }
    let right = n - 1 - center;
    let mut sides = Vec::new();
    for (reach, sign) in [(center, -1i64), (right, 1i64)] {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for d in reach.div_ceil(2)..=reach {
            if d == 0 {
                continue;
            }
            let idx = (center as i64 + sign * d as i64) as usize;
            let v = vector[idx].abs();
            if v >= TAIL_FLOOR {
                xs.push(d as f64);
                ys.push(v.ln());
            }
        }
        sides.push((xs, ys));
    }
    let usable: usize = sides.iter().map(|s| s.0.len()).sum();
    if usable < 16 {
        return Err(SpectralError::TooShort { usable });
    }
    // pooled within-side regression
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (xs, ys) in sides.iter().filter(|s| s.0.len() >= 2) {
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        for (x, y) in xs.iter().zip(ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
    }
    if sxx == 0.0 {
        return Err(SpectralError::TooShort { usable });
    }
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::super::determinant::sturm_count;
    use super::*;
    use crate::lattice::{frequencies::GOLDEN, OperatorSpec, PerturbationSpec, PotentialSpec};

    #[test]
    fn two_site_box() {
        let b = BoxOperator::from_diagonal(0, vec![0.0, 0.0]).unwrap();
        let p = eigenpairs_in_window(&b, -2.0, 2.0).unwrap();
        assert_eq!(p.len(), 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p[0].value + 1.0).abs() < 1e-14 && (p[1].value - 1.0).abs() < 1e-14);
        // largest entry positive; ties resolve to the first entry
        assert!((p[0].vector[0] - s).abs() < 1e-12 && (p[0].vector[1] + s).abs() < 1e-12);
        assert!((p[1].vector[0] - s).abs() < 1e-12 && (p[1].vector[1] - s).abs() < 1e-12);
    }

    #[test]
    fn counts_and_residuals_on_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let m = rng.gen_range(2..200);
            let diag: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b = BoxOperator::from_diagonal(0, diag).unwrap();
            let (e1, e2) = (rng.gen_range(-5.0..0.0), rng.gen_range(0.0..5.0));
            let p = eigenpairs_in_window(&b, e1, e2).unwrap();
            assert_eq!(p.len(), sturm_count(&b, e2) - sturm_count(&b, e1));
            for q in &p {
                assert!(q.residual <= 1e-8 * b.norm_bound());
            }
        }
    }

    #[test]
    fn synthetic_decay() {
        let v: Vec<f64> = (0..201).map(|i| (-0.7 * (i as f64 - 100.0).abs()).exp()).collect();
        assert!((decay_rate(&v, 100).unwrap() - 0.7).abs() < 1e-6);
    }

    #[test]
    fn two_bump_decay() {
        // equal bumps at ±30 around a peak at +30: the left tail belongs to
        // the far bump and sits higher by 60·0.7
        let v: Vec<f64> = (0..401)
            .map(|i| {
                let x = i as f64 - 200.0;
                (-0.7 * (x - 30.0).abs()).exp() + (-0.7 * (x + 30.0).abs()).exp()
            })
            .collect();
        assert!((decay_rate(&v, 230).unwrap() - 0.7).abs() < 1e-6);
    }

    #[test]
    fn random_vector_has_no_decay() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..400).map(|_| rng.gen_range(0.5..1.5)).collect();
        assert!(decay_rate(&v, 200).unwrap().abs() < 0.05);
    }

    #[test]
    fn short_vectors_are_rejected() {
        assert!(matches!(decay_rate(&[1.0; 10], 5), Err(SpectralError::TooShort { .. })));
    }

    #[test]
    fn localized_eigenvector_tail_is_resolved() {
        let op = OperatorSpec::new(
            PotentialSpec::almost_mathieu(3.0, GOLDEN, 0.0),
            PerturbationSpec::exponential(1.0, 1.0).unwrap(),
        );
        let b = op.build_box(-500, 499).unwrap();
        let p = eigenpairs_in_window(&b, 0.2, 0.6).unwrap();
        let q = p
            .iter()
            .min_by(|a, c| {
                (a.center_of_mass() - 500.0)
                    .abs()
                    .total_cmp(&(c.center_of_mass() - 500.0).abs())
            })
            .unwrap();
        let rate = decay_rate(&q.vector, q.peak()).unwrap();
        assert!((rate - 3f64.ln()).abs() < 0.2 * 3f64.ln(), "{rate}");
    }
}
