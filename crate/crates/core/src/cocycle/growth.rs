use super::product::{product, ScaledMatrixProduct};
use super::CocycleError;
use crate::lattice::OperatorSpec;
use crate::linalg::{linear_fit, pairwise_sum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Deterministic θ sample `j` of a `grid`-point set: uniform on the circle
/// for `d = 1`, a Korobov rank-1 lattice for `d > 1`.
pub fn theta_sample(dim: usize, grid: usize, j: usize) -> Vec<f64> {
    const GENERATOR: u64 = 0x9E37_79B9; // odd; powers taken mod grid
    let g = grid as u64;
    let mut z = 1u64;
    (0..dim)
        .map(|_| {
            let x = ((j as u64 % g) * (z % g)) % g;
            z = z.wrapping_mul(GENERATOR) % g.max(1);
            x as f64 / grid as f64
        })
        .collect()
}

/// `(1/k)·log‖M_k(θ, E, 0)‖` averaged over a deterministic θ grid.
pub fn lyapunov(op: &OperatorSpec, energy: f64, k: usize, theta_grid: usize) -> Result<f64, CocycleError> {
    if !op.is_unperturbed() {
        return Err(CocycleError::PerturbedLyapunov);
    }
    if k == 0 || theta_grid == 0 {
        return Err(CocycleError::BadParameter(
            "lyapunov needs k >= 1 and theta_grid >= 1".into(),
        ));
    }
    let dim = op.potential.dim();
    let terms: Vec<f64> = (0..theta_grid)
        .into_par_iter()
        .map(|j| {
            let shifted = op.with_theta(&theta_sample(dim, theta_grid, j));
            let p = product(&shifted, energy, 0, k as i64);
            (p.log_norm() / k as f64).max(0.0)
        })
        .collect();
    Ok(pairwise_sum(&terms) / theta_grid as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub ks: Vec<u64>,
    pub log_norms: Vec<f64>,
    pub direction: Direction,
    /// Least-squares slope of `log‖M_k‖` against `log k` over `k ≥ √k_max`.
    pub fit_exponent: f64,
}

/// Geometric ladder `1, ⌈2^{1/4}⌉, …` up to and including `k_max`.
pub fn geometric_ladder(k_max: u64) -> Vec<u64> {
    let mut ks = vec![1u64];
    let mut x = 1.0f64;
    while *ks.last().unwrap() < k_max {
        x *= 2f64.powf(0.25);
        let k = (x.round() as u64).clamp(ks.last().unwrap() + 1, k_max);
        ks.push(k);
    }
    ks
}

/// `log‖M_k(θ, E, 0)‖` (forward) or `log‖M_{-k}(θ, E, 0)‖` (backward) on a
/// geometric ladder, built in a single pass.
pub fn growth_profile(
    op: &OperatorSpec,
    energy: f64,
    theta_override: Option<&[f64]>,
    k_max: u64,
    direction: Direction,
) -> Result<GrowthProfile, CocycleError> {
    if k_max < 2 {
        return Err(CocycleError::BadParameter("growth profile needs k_max >= 2".into()));
    }
    let op = match theta_override {
        Some(t) => op.with_theta(t),
        None => op.clone(),
    };
    let ks = geometric_ladder(k_max);
    let mut log_norms = Vec::with_capacity(ks.len());
    let mut acc = ScaledMatrixProduct::identity();
    let mut done = 0u64;
    for &k in &ks {
        while done < k {
            match direction {
                Direction::Forward => acc.push_step(energy - op.eval_site(done as i64)),
                // M_k(-k) = S(-1)⋯S(-k); its inverse has the same norm.
                Direction::Backward => acc.push_step_right(energy - op.eval_site(-(done as i64) - 1)),
            }
            done += 1;
        }
        log_norms.push(acc.log_norm());
    }
    let floor = (k_max as f64).sqrt();
    let (x, y): (Vec<f64>, Vec<f64>) = ks
        .iter()
        .zip(&log_norms)
        .filter(|(k, _)| **k as f64 >= floor)
        .map(|(k, l)| ((*k as f64).ln(), *l))
        .unzip();
    let fit_exponent = if x.len() >= 2 { linear_fit(&x, &y).0 } else { f64::NAN };
    Ok(GrowthProfile {
        ks,
        log_norms,
        direction,
        fit_exponent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    /// `max (1/k)·log‖M̃_k‖ − (L̂(E) + ε)` over the samples.
    pub worst: f64,
    pub worst_energy: f64,
    pub worst_theta: Vec<f64>,
    pub worst_site: i64,
    pub samples: usize,
}

/// Sample `(E, θ, n)` and compare `(1/k)·log‖M̃_k(θ, E, n)‖` with
/// `L̂(E) + eps`, where `L̂` is estimated on the unperturbed family with the
/// same `k` and a 64-point θ grid.
pub fn uniform_upper_bound_check(
    op: &OperatorSpec,
    energy_interval: (f64, f64),
    eps: f64,
    k: usize,
    samples: usize,
) -> Result<UpperBoundReport, CocycleError> {
    let (e1, e2) = energy_interval;
    if !(e1 <= e2) || k == 0 || samples == 0 {
        return Err(CocycleError::BadParameter(
            "upper bound check needs e1 <= e2, k >= 1, samples >= 1".into(),
        ));
    }
    let n_energies = samples.min(32);
    let per_energy = samples.div_ceil(n_energies);
    let dim = op.potential.dim();
    let bare = op.potential_only();
    let energies: Vec<f64> = (0..n_energies)
        .map(|i| {
            if n_energies == 1 {
                0.5 * (e1 + e2)
            } else {
                e1 + (e2 - e1) * i as f64 / (n_energies - 1) as f64
            }
        })
        .collect();
    let lyap: Vec<f64> = energies
        .iter()
        .map(|&e| lyapunov(&bare, e, k, 64))
        .collect::<Result<_, _>>()?;
    let span = 2 * k as i64;
    let jobs: Vec<(usize, usize)> = (0..n_energies)
        .flat_map(|i| (0..per_energy).map(move |j| (i, j)))
        .take(samples)
        .collect();
    let results: Vec<(f64, usize, Vec<f64>, i64)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let theta = theta_sample(dim, per_energy, j)
                .into_iter()
                .map(|t| (t + 0.5 / per_energy as f64 * (i % 2) as f64).fract())
                .collect::<Vec<_>>();
            let n = -span + ((2 * span + 1) * j as i64) / per_energy as i64;
            let shifted = op.with_theta(&theta);
            let p = product(&shifted, energies[i], n, k as i64);
            (p.log_norm() / k as f64 - (lyap[i] + eps), i, theta, n)
        })
        .collect();
    let mut best = &results[0];
    for r in &results {
        if r.0 > best.0 {
            best = r;
        }
    }
    Ok(UpperBoundReport {
        worst: best.0,
        worst_energy: energies[best.1],
        worst_theta: best.2.clone(),
        worst_site: best.3,
        samples: results.len(),
    })
}
