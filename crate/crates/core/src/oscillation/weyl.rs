use super::fixed_point::{hyperbolic_window, parabolic_with, N0Policy};
use super::jacobi::to_jacobi_reflected;
use super::trace::{count_wronskian_nodes, wronskian_parts, SolutionTrace};
use super::{to_jacobi, JacobiForm, OscillationError};
use crate::cocycle::ScaledMatrixProduct;
use crate::lattice::OperatorSpec;
use crate::linalg::{norm2, Mat2};
use crate::spectral::ids;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

const MIN_HORIZON: i64 = 32;
const LADDER_STEPS: u32 = 20;
const EDGE_TOL: f64 = 1e-6;
const DEFAULT_EDGE_DELTA: f64 = 1e-2;
const IDS_BOX: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Square-summable at `+∞`.
    Plus,
    /// Square-summable at `−∞`.
    Minus,
}

/// How the far-field seed of a Weyl solution was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Construction {
    /// Contracting direction of the far-field transfer matrix.
    BackwardRecurrence,
    /// Bounded solution of the perturbed free recursion at a band edge.
    ParabolicFixedPoint,
    /// Decaying solution of the perturbed free recursion off the band.
    HyperbolicFixedPoint,
}

/// Side of a gap edge from which the ladder approaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    FromAbove,
    FromBelow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeLimit {
    pub approach: Approach,
    pub delta0: f64,
    /// Seed angles along the ladder `E ± δ0·2^{−j}`.
    pub seed_angles: Vec<f64>,
    pub extrapolated_angle: f64,
    /// Difference of the last two Aitken estimates.
    pub change: f64,
}

#[derive(Clone, Debug)]
pub struct WeylSolution {
    pub side: Side,
    pub energy: f64,
    pub horizon: i64,
    /// Covers `[−horizon−1, horizon+1]`.
    pub trace: SolutionTrace,
    pub construction: Construction,
    pub edge: Option<EdgeLimit>,
    /// `log ‖u‖` over the dyadic blocks `[2^j, 2^{j+1})` inside `[1, horizon/2]`
    /// on the solution's own side.
    pub tail_log_norms: Vec<f64>,
    /// The last four block norms decrease strictly.
    pub tail_decreasing: bool,
}

/// The operator in the orientation where the wanted solution decays to the
/// right: `site(n) = V(±n) + g(±n)`.
struct Oriented<'a> {
    op: &'a OperatorSpec,
    reflect: bool,
}

impl Oriented<'_> {
    fn site(&self, n: i64) -> f64 {
        self.op.eval_site(if self.reflect { -n } else { n })
    }

    fn perturbation(&self, n: i64) -> f64 {
        self.op.perturbation.value(if self.reflect { -n } else { n })
    }

    fn jacobi(&self) -> JacobiForm {
        if self.reflect {
            to_jacobi_reflected(self.op)
        } else {
            to_jacobi(self.op)
        }
    }
}

fn not_in_gap(energy: f64, reason: impl Into<String>) -> OscillationError {
    OscillationError::NotInGap {
        energy,
        reason: reason.into(),
    }
}

/// `R(n) = B⁻¹·diag(−g(n), 0)·B`.
fn conjugated_perturbation(b: Mat2, g: f64) -> Mat2 {
    b.inverse() * Mat2::diag(-g, 0.0) * b
}

/// Seed `(u(H), u(H+1))` of the solution decaying to the right.
fn seed(o: &Oriented, energy: f64, h: i64) -> Result<([f64; 2], Construction), OscillationError> {
    if o.op.potential.is_zero() {
        if energy.abs() == 2.0 {
            // x(n) = (u(n), u(n−1)) = B·φ(n) with S₀ = B·[[σ, 1], [0, σ]]·B⁻¹.
            let sigma = energy / 2.0;
            let b = Mat2::new(sigma, 1.0, 1.0, 0.0);
            let far = 2 * h + 64;
            let r = |s: i64| conjugated_perturbation(b, o.perturbation(s));
            if let Ok(p) = parabolic_with(sigma, 1.0, &r, N0Policy::Fixed(h + 1), far) {
                let x = b.apply(p.phi[0]);
                return Ok(([x[1], x[0]], Construction::ParabolicFixedPoint));
            }
        } else if energy.abs() > 2.0 {
            // Reflected orientation: the wanted solution decays like λⁿ at −∞,
            // x̃(n) = (ũ(n), ũ(n−1)) = B·λⁿχ(n) with S₀ = B·diag(λ, 1/λ)·B⁻¹.
            let disc = (energy * energy - 4.0).sqrt();
            let lambda = 0.5 * (energy + energy.signum() * disc);
            let b = Mat2::new(lambda, 1.0 / lambda, 1.0, 1.0);
            let far = 2 * h + 64;
            let r = |s: i64| conjugated_perturbation(b, o.perturbation(-s));
            let mass: f64 = (h + 1..=far)
                .map(|s| conjugated_perturbation(b, o.perturbation(s)).norm())
                .sum();
            if 2.0 * mass < 0.5 {
                let (chi, _, update) = hyperbolic_window(lambda, 0.0, &r, -far, -h);
                if update < 1e-10 {
                    // x̃(−H) = (ũ(−H), ũ(−H−1)) = (u(H), u(H+1))
                    let x = b.apply(chi[chi.len() - 1]);
                    return Ok((x, Construction::HyperbolicFixedPoint));
                }
            }
        }
        // frozen far-field step
        let a = energy - o.site(h + 1);
        if a.abs() < 2.0 {
            return Err(not_in_gap(
                energy,
                format!("far-field step is elliptic (|E − V| = {:.3e})", a.abs()),
            ));
        }
        let r = 0.5 * (a - a.signum() * (a * a - 4.0).max(0.0).sqrt());
        return Ok(([1.0, r], Construction::BackwardRecurrence));
    }
    // Least right singular vector of M_ℓ(H+1) = S(H+ℓ)…S(H+1), acting on
    // (u(H+1), u(H)), for doubling ℓ until the direction settles.
    let mut prev: Option<[f64; 2]> = None;
    let mut m = ScaledMatrixProduct::identity();
    let mut done = 0;
    let mut best = [0.0, 1.0];
    let mut ell = 64;
    while ell <= 4096 {
        for n in h + 1 + done..=h + ell {
            m.push_step(energy - o.site(n));
        }
        done = ell;
        let t = m.mantissa();
        let theta = 0.5 * (2.0 * (t.a * t.b + t.c * t.d)).atan2(t.a * t.a + t.c * t.c - t.b * t.b - t.d * t.d);
        let v = [-theta.sin(), theta.cos()];
        best = v;
        if let Some(p) = prev {
            if (p[0] * v[1] - p[1] * v[0]).abs() < 1e-13 {
                break;
            }
        }
        prev = Some(v);
        ell *= 2;
    }
    Ok(([best[1], best[0]], Construction::BackwardRecurrence))
}

fn trace_from_seed(o: &Oriented, energy: f64, h: i64, s: [f64; 2]) -> Result<SolutionTrace, OscillationError> {
    let j = Arc::new(o.jacobi());
    SolutionTrace::backward(j, -energy, -h - 1, h + 1, (s[0], s[1]))
}

/// `log ‖u‖` on the dyadic blocks inside `[1, h/2]`.
fn tail_norms(t: &SolutionTrace, h: i64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut lo = 1;
    while 2 * lo - 1 <= h / 2 {
        let logs: Vec<f64> = (lo..2 * lo)
            .filter(|n| t.sign(*n) != 0.0)
            .map(|n| t.log_abs(n))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (2.0 * (l - top)).exp()).sum();
        out.push(top + 0.5 * sum.ln());
        lo *= 2;
    }
    out
}

fn decreasing(norms: &[f64]) -> bool {
    norms.len() >= 4 && norms[norms.len() - 4..].windows(2).all(|w| w[1] < w[0])
}

fn finish(
    op: &OperatorSpec,
    side: Side,
    energy: f64,
    h: i64,
    oriented_trace: SolutionTrace,
    construction: Construction,
    edge: Option<EdgeLimit>,
) -> WeylSolution {
    let tail_log_norms = tail_norms(&oriented_trace, h);
    let tail_decreasing = decreasing(&tail_log_norms);
    let trace = match side {
        Side::Plus => oriented_trace,
        Side::Minus => oriented_trace.mirrored(Arc::new(to_jacobi(op))),
    };
    WeylSolution {
        side,
        energy,
        horizon: h,
        trace,
        construction,
        edge,
        tail_log_norms,
        tail_decreasing,
    }
}

fn check_horizon(h: i64) -> Result<(), OscillationError> {
    if h < MIN_HORIZON {
        return Err(OscillationError::BadParameter(format!(
            "horizon must be at least {MIN_HORIZON}"
        )));
    }
    Ok(())
}

fn interior(op: &OperatorSpec, energy: f64, side: Side, h: i64) -> Result<WeylSolution, OscillationError> {
    let o = Oriented {
        op,
        reflect: side == Side::Minus,
    };
    let (s, construction) = seed(&o, energy, h)?;
    let t = trace_from_seed(&o, energy, h, s)?;
    let w = finish(op, side, energy, h, t, construction, None);
    if construction != Construction::ParabolicFixedPoint && !w.tail_decreasing {
        return Err(not_in_gap(
            energy,
            "tail norms over the last dyadic blocks do not decrease",
        ));
    }
    Ok(w)
}

/// The Weyl solution at `side` for `E` in a gap of the essential spectrum.
/// When the direct construction fails its tail test, `E` is probed as a gap
/// edge at distance `10⁻²` and the limit construction of
/// [`weyl_edge_limit`] is returned.
pub fn weyl_solution(
    op: &OperatorSpec,
    energy: f64,
    side: Side,
    horizon: i64,
) -> Result<WeylSolution, OscillationError> {
    check_horizon(horizon)?;
    let direct = match interior(op, energy, side, horizon) {
        Err(OscillationError::NotInGap { reason, .. }) => reason,
        other => return other,
    };
    let above = interior(op, energy + DEFAULT_EDGE_DELTA, side, horizon).is_ok();
    let below = interior(op, energy - DEFAULT_EDGE_DELTA, side, horizon).is_ok();
    let approach = match (above, below) {
        (true, false) => Approach::FromAbove,
        (false, true) => Approach::FromBelow,
        _ => {
            return Err(not_in_gap(
                energy,
                format!("{direct}; no adjacent gap on exactly one side"),
            ))
        }
    };
    weyl_edge_limit(op, energy, side, horizon, approach, DEFAULT_EDGE_DELTA)
}

/// Limit construction at a gap edge: seeds along `E ± δ0·2^{−j}`,
/// `j = 0..=20`, from inside the gap, Aitken Δ² extrapolation of the seed
/// angle, then backward recursion at `E` itself.
pub fn weyl_edge_limit(
    op: &OperatorSpec,
    energy: f64,
    side: Side,
    horizon: i64,
    approach: Approach,
    delta0: f64,
) -> Result<WeylSolution, OscillationError> {
    check_horizon(horizon)?;
    if !(delta0 > 0.0) {
        return Err(OscillationError::BadParameter(format!(
            "delta0 must be positive, got {delta0}"
        )));
    }
    let o = Oriented {
        op,
        reflect: side == Side::Minus,
    };
    let dir = match approach {
        Approach::FromAbove => 1.0,
        Approach::FromBelow => -1.0,
    };
    let mut angles: Vec<f64> = Vec::new();
    for j in 0..=LADDER_STEPS {
        let e = energy + dir * delta0 * 0.5f64.powi(j as i32);
        let (s, _) = seed(&o, e, horizon)?;
        let mut a = s[1].atan2(s[0]);
        if let Some(first) = angles.first() {
            // lines are defined mod π; stay on the branch of the first seed
            a -= PI * ((a - first) / PI).round();
        }
        angles.push(a);
    }
    let aitken: Vec<f64> = angles
        .windows(3)
        .map(|w| {
            let (d1, d2) = (w[2] - w[1], w[1] - w[0]);
            let den = d1 - d2;
            if den.abs() <= 1e-300 || d1 == 0.0 {
                w[2]
            } else {
                w[2] - d1 * d1 / den
            }
        })
        .collect();
    let k = aitken.len();
    let change = (aitken[k - 1] - aitken[k - 2]).abs();
    if !(change <= EDGE_TOL) {
        return Err(OscillationError::NonConvergent { energy, change });
    }
    let angle = aitken[k - 1];
    let t = trace_from_seed(&o, energy, horizon, [angle.cos(), angle.sin()])?;
    let edge = EdgeLimit {
        approach,
        delta0,
        seed_angles: angles,
        extrapolated_angle: angle,
        change,
    };
    Ok(finish(
        op,
        side,
        energy,
        horizon,
        t,
        Construction::BackwardRecurrence,
        Some(edge),
    ))
}

/// Weyl solution at an endpoint of a gap window, falling back to the edge
/// limit approached from inside the window.
fn endpoint(
    op: &OperatorSpec,
    energy: f64,
    h: i64,
    approach: Approach,
    delta0: f64,
) -> Result<WeylSolution, OscillationError> {
    match interior(op, energy, Side::Plus, h) {
        Err(OscillationError::NotInGap { .. }) => weyl_edge_limit(op, energy, Side::Plus, h, approach, delta0),
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCount {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub horizon: i64,
    pub half_horizon_count: usize,
    pub stable: bool,
    pub constructions: [Construction; 2],
}

/// Number of eigenvalues of `H̃` in `(E1, E2)`, a window inside a gap of the
/// essential spectrum, as the Wronskian node count of the `+∞` Weyl
/// solutions at the two ends over `[−horizon, horizon]`; repeated at half
/// the horizon.
pub fn gap_eigenvalue_count(op: &OperatorSpec, e1: f64, e2: f64, horizon: i64) -> Result<GapCount, OscillationError> {
    if !(e1 < e2) {
        return Err(OscillationError::BadParameter(format!("empty window ({e1}, {e2})")));
    }
    check_horizon(horizon / 2)?;
    let bare = op.potential_only();
    let n1 = ids(&bare, e1, IDS_BOX, 1)?;
    let n2 = ids(&bare, e2, IDS_BOX, 1)?;
    if (n2 - n1).abs() > 2.5 / IDS_BOX as f64 {
        return Err(not_in_gap(
            0.5 * (e1 + e2),
            format!("integrated density of states rises from {n1} to {n2} across the window"),
        ));
    }
    let delta0 = 0.25 * (e2 - e1);
    let count_at = |h: i64| -> Result<(usize, [Construction; 2]), OscillationError> {
        // Jacobi order: λ1 = −E2 < λ2 = −E1
        let u1 = endpoint(op, e2, h, Approach::FromBelow, delta0)?;
        let u2 = endpoint(op, e1, h, Approach::FromAbove, delta0)?;
        let c = count_wronskian_nodes(&u1.trace, &u2.trace, -h, h)?;
        Ok((c, [u2.construction, u1.construction]))
    };
    let (count, constructions) = count_at(horizon)?;
    let (half, _) = count_at(horizon / 2)?;
    if count != half {
        return Err(OscillationError::Unstable {
            count,
            half_count: half,
            horizon,
        });
    }
    Ok(GapCount {
        lower: e1,
        upper: e2,
        count,
        horizon,
        half_horizon_count: half,
        stable: true,
        constructions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub energy: f64,
    /// `|W(u₋, u₊)(0)| / (‖(u₋(0), u₋(1))‖·‖(u₊(0), u₊(1))‖)`.
    pub wronskian_relative: f64,
    pub plus_decreasing: bool,
    pub minus_decreasing: bool,
    pub constructions: [Construction; 2],
    pub is_eigenvalue: bool,
}

/// Whether `E` (typically a gap edge) is an eigenvalue: the two Weyl
/// solutions are linearly dependent and both have decreasing tails.
pub fn threshold_eigenvalue(op: &OperatorSpec, energy: f64, horizon: i64) -> Result<ThresholdReport, OscillationError> {
    let plus = weyl_solution(op, energy, Side::Plus, horizon)?;
    let minus = weyl_solution(op, energy, Side::Minus, horizon)?;
    let (m, e) = wronskian_parts(&minus.trace, &plus.trace, 0);
    let log_norm = |t: &SolutionTrace| {
        let (l0, l1) = (t.log_abs(0), t.log_abs(1));
        let top = l0.max(l1);
        top + norm2([(l0 - top).exp(), (l1 - top).exp()]).ln()
    };
    let wronskian_relative = if m == 0.0 {
        0.0
    } else {
        (m.abs().ln() + e as f64 * LN_2 - log_norm(&plus.trace) - log_norm(&minus.trace)).exp()
    };
    let is_eigenvalue = wronskian_relative <= EDGE_TOL && plus.tail_decreasing && minus.tail_decreasing;
    Ok(ThresholdReport {
        energy,
        wronskian_relative,
        plus_decreasing: plus.tail_decreasing,
        minus_decreasing: minus.tail_decreasing,
        constructions: [minus.construction, plus.construction],
        is_eigenvalue,
    })
}
