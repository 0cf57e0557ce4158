use super::{
    AppendixParams, Assertion, Check, ExperimentError, GapEdgeParams, LdtParams, LocalizationParams, RunReport,
    Scenario, ScenarioParams, SubcriticalParams, Table,
};
use crate::cocycle::{growth_profile, lyapunov, product, rotation_number, Direction};
use crate::lattice::{
    frequencies::GOLDEN, threshold_example_table, BoxOperator, OperatorSpec, PerturbationSpec, PotentialSpec,
};
use crate::linalg::{linear_fit, pairwise_sum};
use crate::oscillation::{
    gap_eigenvalue_count, threshold_eigenvalue, weyl_edge_limit, weyl_solution, Approach, OscillationError, Side,
};
use crate::spectral::{
    decay_rate, eigenpairs_in_window, find_gaps, gap_label, ids_curve, sturm_count, uniform_grid, window_scan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// The threshold-eigenvalue example at `E = 2` with default parameters.
pub fn run_appendix_example() -> Result<RunReport, ExperimentError> {
    super::run_scenario(&Scenario::appendix())
}

/// Growth exponents and gap-count stability for the almost Mathieu
/// operator at coupling `lambda` (golden frequency, θ = 0) plus `g`.
pub fn run_subcritical_ac_indicators(lambda: f64, g: PerturbationSpec) -> Result<RunReport, ExperimentError> {
    let op = OperatorSpec::new(PotentialSpec::almost_mathieu(lambda, GOLDEN, 0.0), g);
    super::run_scenario(&Scenario::new(
        op,
        ScenarioParams::SubcriticalAc(SubcriticalParams::default()),
    ))
}

/// Eigenvector decay against the Lyapunov exponent on a 2000-site box.
pub fn run_localization_scenario(lambda: f64, g: PerturbationSpec) -> Result<RunReport, ExperimentError> {
    let op = OperatorSpec::new(PotentialSpec::almost_mathieu(lambda, GOLDEN, 0.0), g);
    super::run_scenario(&Scenario::new(
        op,
        ScenarioParams::Localization(LocalizationParams::default()),
    ))
}

pub fn run_ldt_measurement(
    lambda: f64,
    energy: f64,
    n: usize,
    eps: f64,
    theta_samples: usize,
) -> Result<RunReport, ExperimentError> {
    let op = OperatorSpec::unperturbed(PotentialSpec::almost_mathieu(lambda, GOLDEN, 0.0));
    let params = LdtParams {
        energy,
        n,
        eps,
        theta_samples,
        ..LdtParams::default()
    };
    super::run_scenario(&Scenario::new(op, ScenarioParams::Ldt(params)))
}

/// Spectrum edges of the almost Mathieu operator at coupling 0.2.
pub fn run_gap_edge_scenario() -> Result<RunReport, ExperimentError> {
    super::run_scenario(&Scenario::gap_edge())
}

fn exact_u(n: i64) -> f64 {
    if n == 0 {
        1.0
    } else {
        1.0 / n as f64
    }
}

pub(super) fn appendix(p: &AppendixParams, report: &mut RunReport) -> Result<(), ExperimentError> {
    if p.extent < 3 || p.horizon < 64 || !(p.delta > 0.0) {
        return Err(ExperimentError::BadParameter(
            "appendix needs extent >= 3, horizon >= 64, delta > 0".into(),
        ));
    }
    let extent = p.extent.max(p.horizon + 2);
    let op = OperatorSpec::free(PerturbationSpec::Table(threshold_example_table(extent)));
    for n in -1..=1 {
        report.metric(&format!("completion_v({n})"), op.eval_site(n));
    }
    report
        .notes
        .push("u(n) = 1/n for n != 0 and u(0) = 1; V(-1), V(0), V(1) solve the eigenvalue equation".into());

    let (worst, sup) = (3..=p.extent)
        .into_par_iter()
        .map(|m| {
            let mut worst = 0.0f64;
            for n in [m, -m] {
                let (prev, cur, next) = (exact_u(n - 1), exact_u(n), exact_u(n + 1));
                let v = op.eval_site(n);
                let r = next + prev + v * cur - 2.0 * cur;
                let scale = next.abs() + prev.abs() + (v * cur).abs() + 2.0 * cur.abs();
                worst = worst.max(r.abs() / scale);
            }
            let nf = m as f64;
            (worst, nf * nf * op.eval_site(m).abs().max(op.eval_site(-m).abs()))
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let v2 = 4.0 * op.eval_site(2).abs().max(op.eval_site(-2).abs());
    report.assert(Assertion::new("eigen_residual_max", worst, 0.0, 1e-13, Check::AtMost));
    report.assert(Assertion::new(
        "sup_n2_abs_v",
        sup.max(v2),
        8.0 / 3.0,
        1e-12,
        Check::Within,
    ));
    report.assert(Assertion::new(
        "sup_n2_abs_v_bound",
        sup.max(v2),
        2.7,
        0.0,
        Check::AtMost,
    ));

    // Σ_{|n|≤N} u² + 2·Σ_{n>N} 1/n² with the Euler–Maclaurin tail
    let squares: Vec<f64> = (-p.extent..=p.extent).map(|n| exact_u(n).powi(2)).collect();
    let nf = p.extent as f64;
    let tail = 2.0 * (1.0 / nf - 0.5 / (nf * nf) + 1.0 / (6.0 * nf * nf * nf));
    report.metric("norm_squared_partial", pairwise_sum(&squares));
    report.assert(Assertion::new(
        "norm_squared_with_tail",
        pairwise_sum(&squares) + tail,
        1.0 + PI * PI / 3.0,
        1e-12,
        Check::Within,
    ));
    // Dirichlet half-line variant: 2u(1) − u(2) − u(0) = V(1)u(1) with u(0) = 0
    report.assert(Assertion::new("half_line_v1", 2.0 - 0.5, 1.5, 1e-15, Check::Within));

    let w = weyl_solution(&op, 2.0, Side::Plus, p.horizon)?;
    let mut t = Table::new("weyl_vs_exact", &["n", "weyl", "exact"]);
    let mut err = 0.0f64;
    let top = 1000.min(p.horizon / 100).max(11);
    for n in 10..=top {
        let ratio = w.trace.ratio(n, 10) / 10.0;
        err = err.max((ratio / exact_u(n) - 1.0).abs());
        t.push(vec![n as f64, ratio, exact_u(n)]);
    }
    report.tables.push(t);
    report.assert(Assertion::new("weyl_matches_inverse_n", err, 0.0, 1e-6, Check::AtMost));

    let th = threshold_eigenvalue(&op, 2.0, p.horizon)?;
    report.metric("threshold_wronskian_relative", th.wronskian_relative);
    let above = gap_eigenvalue_count(&op, 2.0, 2.0 + p.delta, p.horizon)?;
    report.metric("count_above_threshold", above.count as f64);
    match gap_eigenvalue_count(&op, 2.0 - p.delta, 2.0 + p.delta, p.horizon) {
        Err(OscillationError::NotInGap { reason, .. }) => report
            .notes
            .push(format!("(2 - delta, 2 + delta) meets the essential spectrum: {reason}")),
        Err(e) => return Err(e.into()),
        Ok(c) => report.metric("count_full_window", c.count as f64),
    }
    let detected = above.count + usize::from(th.is_eigenvalue);
    report.assert(Assertion::new(
        "eigenvalues_near_two",
        detected as f64,
        1.0,
        0.0,
        Check::AtLeast,
    ));
    Ok(())
}

/// Energies where a grid IDS curve rises on both sides, spread evenly.
fn spectral_energies(energies: &[f64], values: &[f64], want: usize) -> Vec<(f64, f64)> {
    let inside: Vec<usize> = (1..energies.len() - 1)
        .filter(|&i| values[i - 1] < values[i] && values[i] < values[i + 1])
        .collect();
    if inside.is_empty() || want == 0 {
        return Vec::new();
    }
    let take = want.min(inside.len());
    (0..take)
        .map(|j| {
            let i = inside[(2 * j + 1) * inside.len() / (2 * take)];
            (energies[i], values[i])
        })
        .collect()
}

fn label_of(op: &OperatorSpec, ids: f64, k_max: i64, tol: f64) -> Option<i64> {
    match op.potential.alpha() {
        [alpha] => gap_label(ids, *alpha, k_max, tol).ok(),
        _ => None,
    }
}

pub(super) fn subcritical(
    op: &OperatorSpec,
    p: &SubcriticalParams,
    report: &mut RunReport,
) -> Result<(), ExperimentError> {
    let bare = op.potential_only();
    let l11 = op.perturbation.in_l11();
    report.metric("hypothesis_l11", if l11 { 1.0 } else { 0.0 });
    if !l11 {
        report
            .notes
            .push("l11: false; the perturbation is outside the theorem, no assertions are made".into());
    }
    let reach = bare.norm_bound();
    let grid = uniform_grid(-reach, reach, p.grid_points);
    let curve = ids_curve(&bare, &grid, p.ids_box, 1)?;

    let picks = spectral_energies(&curve.energies, &curve.values, p.energies);
    let mut growth = Table::new(
        "growth",
        &[
            "energy",
            "ids",
            "exponent_bare",
            "exponent_perturbed",
            "log_norm_bare",
            "log_norm_perturbed",
        ],
    );
    let rows: Vec<Result<Vec<f64>, ExperimentError>> = picks
        .par_iter()
        .map(|&(e, n)| {
            let a = growth_profile(&bare, e, None, p.k_max, Direction::Forward)?;
            let b = growth_profile(op, e, None, p.k_max, Direction::Forward)?;
            Ok(vec![
                e,
                n,
                a.fit_exponent,
                b.fit_exponent,
                *a.log_norms.last().unwrap(),
                *b.log_norms.last().unwrap(),
            ])
        })
        .collect();
    for r in rows {
        growth.push(r?);
    }
    if l11 {
        for r in &growth.rows {
            report.assert(Assertion::new(
                format!("growth_exponent_bare@{:.6}", r[0]),
                r[2],
                p.growth_cap,
                0.0,
                Check::AtMost,
            ));
            report.assert(Assertion::new(
                format!("growth_exponent_perturbed@{:.6}", r[0]),
                r[3],
                p.growth_cap,
                0.0,
                Check::AtMost,
            ));
        }
        report.assert(Assertion::new(
            "spectral_energies_found",
            growth.rows.len() as f64,
            1.0,
            0.0,
            Check::AtLeast,
        ));
    }
    report.tables.push(growth);

    let step = 2.0 * reach / (p.grid_points.max(2) - 1) as f64;
    let mut gaps = find_gaps(&curve, 2.5 / p.ids_box as f64, 4.0 * step);
    gaps.sort_by(|a, b| b.width().total_cmp(&a.width()).then(a.lower.total_cmp(&b.lower)));
    gaps.truncate(p.gaps);
    let mut table = Table::new(
        "gap_counts",
        &["lower", "upper", "ids", "label", "count", "half_horizon_count"],
    );
    for g in &gaps {
        let (e1, e2) = (g.lower + 0.1 * g.width(), g.upper - 0.1 * g.width());
        let label = label_of(&bare, g.ids, 30, 1e-3).map_or(f64::NAN, |k| k as f64);
        let (count, half, stable) = match gap_eigenvalue_count(op, e1, e2, p.horizon) {
            Ok(c) => (c.count as f64, c.half_horizon_count as f64, true),
            Err(OscillationError::Unstable { count, half_count, .. }) => (count as f64, half_count as f64, false),
            Err(e) => {
                report.notes.push(format!("gap ({e1:.6}, {e2:.6}): {e}"));
                (f64::NAN, f64::NAN, false)
            }
        };
        table.push(vec![e1, e2, g.ids, label, count, half]);
        if l11 {
            report.assert(Assertion::flag(format!("gap_count_stable@{:.6}", g.ids), stable));
        }
    }
    report.tables.push(table);
    Ok(())
}

/// The `k`-th smallest eigenvalue (1-based) of the box by Sturm bisection.
fn kth_eigenvalue(b: &BoxOperator, k: usize) -> f64 {
    let (mut lo, mut hi) = b.gershgorin();
    lo -= 1.0;
    hi += 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(b, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub(super) fn localization(
    op: &OperatorSpec,
    p: &LocalizationParams,
    report: &mut RunReport,
) -> Result<(), ExperimentError> {
    if p.half_width < 64 || !(0.0 <= p.ids_low && p.ids_low < p.ids_high && p.ids_high <= 1.0) {
        return Err(ExperimentError::BadParameter(
            "localization needs half_width >= 64 and 0 <= ids_low < ids_high <= 1".into(),
        ));
    }
    let b = op.build_box(-p.half_width, p.half_width - 1)?;
    let len = b.len();
    let k1 = ((p.ids_low * len as f64).floor() as usize).max(1);
    let k2 = ((p.ids_high * len as f64).ceil() as usize).min(len - 1);
    let e1 = 0.5 * (kth_eigenvalue(&b, k1) + kth_eigenvalue(&b, k1 + 1));
    let e2 = 0.5 * (kth_eigenvalue(&b, k2) + kth_eigenvalue(&b, k2 + 1));
    let mut pairs = eigenpairs_in_window(&b, e1, e2)?;
    let center = p.half_width as usize;
    pairs.sort_by(|x, y| {
        x.peak()
            .abs_diff(center)
            .cmp(&y.peak().abs_diff(center))
            .then(x.value.total_cmp(&y.value))
    });
    pairs.truncate(p.vectors);
    pairs.sort_by(|x, y| x.value.total_cmp(&y.value));

    let bare = op.potential_only();
    let rows: Vec<Result<Vec<f64>, ExperimentError>> = pairs
        .par_iter()
        .map(|v| {
            let l = lyapunov(&bare, v.value, p.lyapunov_k, p.theta_grid)?;
            let rate = decay_rate(&v.vector, v.peak()).unwrap_or(f64::NAN);
            let rel = (rate - l).abs() / l;
            let ids = sturm_count(&b, v.value) as f64 / len as f64;
            let site = b.n1() + v.peak() as i64;
            Ok(vec![
                v.value,
                ids,
                site as f64,
                l,
                rate,
                rel,
                f64::from(u8::from(rel <= p.band)),
            ])
        })
        .collect();
    let mut t = Table::new(
        "decay",
        &[
            "energy",
            "ids",
            "peak_site",
            "lyapunov",
            "decay_rate",
            "relative_error",
            "pass",
        ],
    );
    for r in rows {
        t.push(r?);
    }
    let passed = t.rows.iter().filter(|r| r[6] == 1.0).count();
    report.metric("window_low", e1);
    report.metric("window_high", e2);
    report.metric("vectors_selected", t.rows.len() as f64);
    report.tables.push(t);
    report.assert(Assertion::new(
        "vectors_within_band",
        passed as f64,
        p.min_pass as f64,
        0.0,
        Check::AtLeast,
    ));
    Ok(())
}

pub(super) fn ldt(op: &OperatorSpec, p: &LdtParams, seed: u64, report: &mut RunReport) -> Result<(), ExperimentError> {
    if p.n < 4 || p.theta_samples < 1000 || !(p.eps > 0.0) {
        return Err(ExperimentError::BadParameter(
            "ldt needs n >= 4, theta_samples >= 1000, eps > 0".into(),
        ));
    }
    let bare = op.potential_only();
    let dim = bare.potential.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas: Vec<Vec<f64>> = (0..p.theta_samples)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut t = Table::new("ldt", &["n", "mean_exponent", "fraction"]);
    let mut levels = Table::new("ldt_levels", &["n", "eps", "fraction"]);
    let mut fractions = Vec::new();
    for n in [p.n, 2 * p.n, 4 * p.n] {
        let xs: Vec<f64> = thetas
            .par_iter()
            .map(|th| product(&bare.with_theta(th), p.energy, 0, n as i64).log_norm() / n as f64)
            .collect();
        let mean = pairwise_sum(&xs) / xs.len() as f64;
        let fraction = |eps: f64| xs.iter().filter(|x| (*x - mean).abs() >= eps).count() as f64 / xs.len() as f64;
        let f = fraction(p.eps);
        fractions.push(f);
        t.push(vec![n as f64, mean, f]);
        for j in 0..4 {
            let level = p.eps * 0.5f64.powi(j);
            levels.push(vec![n as f64, level, fraction(level)]);
        }
        let worst = xs.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        report.metric(&format!("max_deviation@{n}"), worst);
    }
    report.tables.push(t);
    report.tables.push(levels);
    for (n, f) in [p.n, 2 * p.n, 4 * p.n].iter().zip(&fractions) {
        report.metric(&format!("fraction@{n}"), *f);
    }
    // f ≈ exp(−c·N^σ): fit log(−log f) against log N
    let (x, y): (Vec<f64>, Vec<f64>) = [p.n, 2 * p.n, 4 * p.n]
        .iter()
        .zip(&fractions)
        .filter(|(_, f)| **f > 0.0 && **f < 1.0)
        .map(|(n, f)| ((*n as f64).ln(), (-f.ln()).ln()))
        .unzip();
    if x.len() >= 2 {
        let (sigma, intercept) = linear_fit(&x, &y);
        report.metric("fitted_sigma", sigma);
        report.metric("fitted_c", intercept.exp());
    } else {
        report
            .notes
            .push("fewer than two fractions in (0, 1); no decay fit".into());
    }
    let vanishing = fractions.iter().all(|f| *f == 0.0);
    if vanishing {
        report
            .notes
            .push(format!("no sample deviates by eps = {} at any length", p.eps));
    }
    let decreasing = vanishing || fractions.windows(2).all(|w| w[1] < w[0]);
    report.assert(Assertion::flag("fraction_decreasing_in_n", decreasing));

    if p.window_samples > 0 {
        let mean = report.tables[0].rows[0][1];
        let target = (mean - p.eps).max(0.0);
        let hits: Vec<Result<bool, ExperimentError>> = thetas
            .par_iter()
            .take(p.window_samples)
            .map(|th| Ok(window_scan(&bare.with_theta(th), p.energy, p.n as i64, 0, target, p.eps)?.any_pass()))
            .collect();
        let mut passed = 0usize;
        for h in hits {
            passed += usize::from(h?);
        }
        let rate = passed as f64 / p.window_samples.min(thetas.len()) as f64;
        report.metric("window_pass_rate", rate);
        report.assert(Assertion::new(
            "window_pass_rate_vs_ldt",
            rate,
            1.0 - fractions[0],
            0.0,
            Check::AtLeast,
        ));
    }
    Ok(())
}

/// First and last eigenvalues of a box of `sites` sites starting at 0.
fn box_edges(bare: &OperatorSpec, sites: usize) -> Result<(f64, f64), ExperimentError> {
    let b = bare.build_box(0, sites as i64 - 1)?;
    Ok((kth_eigenvalue(&b, 1), kth_eigenvalue(&b, sites)))
}

/// `true` when `s(n)·u(n)` has one strict sign on `[−h, h]`.
fn one_signed(u: &crate::oscillation::SolutionTrace, h: i64, alternate: bool) -> bool {
    let s = |n: i64| {
        if alternate && n.rem_euclid(2) == 1 {
            -u.sign(n)
        } else {
            u.sign(n)
        }
    };
    let first = s(-h);
    first != 0.0 && (-h..=h).all(|n| s(n) == first)
}

pub(super) fn gap_edge(op: &OperatorSpec, p: &GapEdgeParams, report: &mut RunReport) -> Result<(), ExperimentError> {
    let bare = op.potential_only();
    let reach = bare.norm_bound();
    let grid = uniform_grid(-reach, reach, p.grid_points);
    let curve = ids_curve(&bare, &grid, p.ids_box, 1)?;
    let tol = 2.5 / p.ids_box as f64;
    if !curve.values.iter().any(|v| *v > tol && *v < 1.0 - tol) {
        return Err(ExperimentError::EdgeNotFound(format!(
            "IDS stays within {tol:e} of 0 or 1 on [{:.3}, {:.3}]",
            -reach, reach
        )));
    }
    // Dirichlet box eigenvalues approach the edges from inside like C/L²;
    // one Richardson step removes the leading term.
    let (lo1, hi1) = box_edges(&bare, p.edge_box / 2)?;
    let (lo2, hi2) = box_edges(&bare, p.edge_box)?;
    let bottom = (4.0 * lo2 - lo1) / 3.0;
    let top = (4.0 * hi2 - hi1) / 3.0;
    report.metric("edge_bottom", bottom);
    report.metric("edge_top", top);

    let rho_top = rotation_number(&bare, top, p.iterates);
    let rho_bottom = rotation_number(&bare, bottom, p.iterates);
    report.assert(Assertion::new(
        "rotation_number_top",
        rho_top,
        0.0,
        p.tolerance,
        Check::Within,
    ));
    report.assert(Assertion::new(
        "rotation_number_bottom",
        rho_bottom,
        0.5,
        p.tolerance,
        Check::Within,
    ));

    let delta0 = 1e-2;
    for (name, energy, approach, alternate) in [
        ("edge_solution_positive_top", top, Approach::FromAbove, false),
        ("edge_solution_alternating_bottom", bottom, Approach::FromBelow, true),
    ] {
        let ok = match weyl_edge_limit(op, energy, Side::Plus, p.horizon, approach, delta0) {
            Ok(w) => {
                if let Some(e) = &w.edge {
                    report.metric(&format!("{name}_extrapolation_change"), e.change);
                }
                one_signed(&w.trace, p.horizon, alternate)
            }
            Err(e) => {
                report.notes.push(format!("{name}: {e}"));
                false
            }
        };
        report.assert(Assertion::flag(name, ok));
    }

    let bridge_grid = uniform_grid(bottom - 0.1, top + 0.1, p.grid_points);
    let bridge_ids = ids_curve(&bare, &bridge_grid, p.ids_box, 1)?;
    let rhos: Vec<f64> = bridge_grid
        .par_iter()
        .map(|e| rotation_number(&bare, *e, p.iterates))
        .collect();
    let mut t = Table::new("ids_rotation", &["energy", "ids", "rotation_number", "difference"]);
    let mut worst = 0.0f64;
    for ((e, n), r) in bridge_grid.iter().zip(&bridge_ids.values).zip(&rhos) {
        let d = (n - (1.0 - 2.0 * r)).abs();
        worst = worst.max(d);
        t.push(vec![*e, *n, *r, d]);
    }
    report.tables.push(t);
    report.assert(Assertion::new(
        "ids_rotation_bridge",
        worst,
        0.0,
        p.tolerance,
        Check::AtMost,
    ));

    let step = (top - bottom + 0.2) / (p.grid_points.max(2) - 1) as f64;
    let gaps = find_gaps(&bridge_ids, tol, 2.0 * step);
    let mut gt = Table::new("gap_labels", &["lower", "upper", "ids", "label"]);
    let mut labeled = 0;
    for g in &gaps {
        let label = label_of(&bare, g.ids, p.label_k_max, p.label_tolerance);
        labeled += usize::from(label.is_some());
        gt.push(vec![g.lower, g.upper, g.ids, label.map_or(f64::NAN, |k| k as f64)]);
    }
    report.metric("gaps_detected", gaps.len() as f64);
    report.tables.push(gt);
    report.assert(Assertion::new(
        "gaps_labeled",
        labeled as f64,
        gaps.len() as f64,
        0.0,
        Check::Within,
    ));
    Ok(())
}
