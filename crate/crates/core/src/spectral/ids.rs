use super::determinant::sturm_count_diagonal;
use super::SpectralError;
use crate::cocycle::theta_sample;
use crate::lattice::{frac, OperatorSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub box_size: usize,
}

fn diagonals(op: &OperatorSpec, box_size: usize, theta_grid: usize) -> Vec<Vec<f64>> {
    let dim = op.potential.dim();
    let ops: Vec<OperatorSpec> = if theta_grid <= 1 {
        vec![op.clone()]
    } else {
        (0..theta_grid)
            .map(|j| op.with_theta(&theta_sample(dim, theta_grid, j)))
            .collect()
    };
    ops.iter()
        .map(|o| (0..box_size as i64).map(|n| o.eval_site(n)).collect())
        .collect()
}

fn check(op: &OperatorSpec, box_size: usize) -> Result<(), SpectralError> {
    if !op.is_unperturbed() {
        return Err(SpectralError::Perturbed);
    }
    if box_size < 10 {
        return Err(SpectralError::BadParameter("IDS needs box_size >= 10".into()));
    }
    Ok(())
}

/// Fraction of eigenvalues below `E` of the box `[0, box_size − 1]`,
/// averaged over a `theta_grid`-point θ grid (`≤ 1`: the operator's own θ).
pub fn ids(op: &OperatorSpec, energy: f64, box_size: usize, theta_grid: usize) -> Result<f64, SpectralError> {
    Ok(ids_curve(op, &[energy], box_size, theta_grid)?.values[0])
}

pub fn ids_curve(
    op: &OperatorSpec,
    energies: &[f64],
    box_size: usize,
    theta_grid: usize,
) -> Result<IdsCurve, SpectralError> {
    check(op, box_size)?;
    let diags = diagonals(op, box_size, theta_grid);
    let total = (diags.len() * box_size) as f64;
    let values = energies
        .par_iter()
        .map(|&e| diags.iter().map(|d| sturm_count_diagonal(d, e)).sum::<usize>() as f64 / total)
        .collect();
    Ok(IdsCurve {
        energies: energies.to_vec(),
        values,
        box_size,
    })
}

/// `points` equally spaced energies in `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// First and last grid energies of the plateau.
    pub lower: f64,
    pub upper: f64,
    pub ids: f64,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Plateaus of an IDS curve: maximal runs of consecutive grid points whose
/// values differ by at most `tolerance`, spanning at least `min_width`.
/// The bottom (IDS 0) and top (IDS 1) plateaus are excluded.
pub fn find_gaps(curve: &IdsCurve, tolerance: f64, min_width: f64) -> Vec<Gap> {
    let e = &curve.energies;
    let v = &curve.values;
    let mut gaps = Vec::new();
    let mut start = 0;
    while start < e.len() {
        let mut end = start;
        while end + 1 < e.len() && v[end + 1] - v[start] <= tolerance {
            end += 1;
        }
        let width = e[end] - e[start];
        let level = 0.5 * (v[start] + v[end]);
        let interior = v[start] > tolerance && v[end] < 1.0 - tolerance;
        if width >= min_width && interior {
            gaps.push(Gap {
                lower: e[start],
                upper: e[end],
                ids: level,
            });
        }
        start = end + 1;
    }
    gaps
}

/// Smallest `|k| ≤ k_max` with `ids ≡ kα mod 1` within `tol`.
pub fn gap_label(ids_value: f64, alpha: f64, k_max: i64, tol: f64) -> Result<i64, SpectralError> {
    let mut best: Option<(i64, f64)> = None;
    for m in 0..=k_max {
        for k in if m == 0 { vec![0] } else { vec![m, -m] } {
            let d = (ids_value - frac(k as f64 * alpha)).abs();
            let d = d.min(1.0 - d);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
    }
    match best {
        Some((k, d)) if d <= tol => Ok(k),
        _ => Err(SpectralError::NoLabel { ids: ids_value }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{frequencies::GOLDEN, PerturbationSpec, PotentialSpec};

    #[test]
    fn free_ids_at_zero() {
        let op = OperatorSpec::free(PerturbationSpec::Zero);
        let n = 1000;
        assert!((ids(&op, 0.0, n, 1).unwrap() - 0.5).abs() <= 2.0 / n as f64);
        assert_eq!(ids(&op, -2.5, n, 1).unwrap(), 0.0);
        assert_eq!(ids(&op, 2.5, n, 1).unwrap(), 1.0);
    }

    #[test]
    fn rejects_perturbed() {
        let op = OperatorSpec::free(PerturbationSpec::exponential(1.0, 1.0).unwrap());
        assert_eq!(ids(&op, 0.0, 100, 1), Err(SpectralError::Perturbed));
    }

    #[test]
    fn labels() {
        assert_eq!(gap_label(0.0, GOLDEN, 30, 1e-9).unwrap(), 0);
        assert_eq!(gap_label(GOLDEN, GOLDEN, 30, 1e-12).unwrap(), 1);
        assert_eq!(gap_label(frac(-2.0 * GOLDEN), GOLDEN, 30, 1e-12).unwrap(), -2);
        assert!(gap_label(0.5, 0.25, 1, 1e-3).is_err());
    }

    #[test]
    fn amo_gap_plateau_is_volume_independent() {
        let op = OperatorSpec::unperturbed(PotentialSpec::almost_mathieu(3.0, GOLDEN, 0.0));
        let curve = ids_curve(&op, &uniform_grid(-6.5, 6.5, 800), 2000, 1).unwrap();
        let gaps = find_gaps(&curve, 2.5 / 2000.0, 0.05);
        assert!(!gaps.is_empty());
        let g = gaps.iter().max_by(|a, b| a.width().total_cmp(&b.width())).unwrap();
        let vals: Vec<f64> = [1000, 2000, 4000]
            .iter()
            .map(|&n| ids(&op, g.center(), n, 1).unwrap())
            .collect();
        assert!(
            (vals[0] - vals[2]).abs() < 2e-3 && (vals[1] - vals[2]).abs() < 2e-3,
            "{vals:?}"
        );
        let k = gap_label(vals[2], GOLDEN, 30, 1e-3).unwrap();
        assert!(k.abs() <= 30);
    }
}
