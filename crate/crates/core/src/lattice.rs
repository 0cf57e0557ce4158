//! Potentials, decaying perturbations and the perturbed lattice operator
//! `H̃ = Δ + λ v(θ + nα) + g(n)` on ℓ²(ℤ), together with its finite
//! Dirichlet truncations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("frequency dimension must be at least 1")]
    EmptyFrequency,
    #[error("dimension mismatch: alpha has {alpha}, theta has {theta}, mode {mode:?} has {mode_dim}")]
    DimensionMismatch {
        alpha: usize,
        theta: usize,
        mode: Vec<i64>,
        mode_dim: usize,
    },
    #[error("alpha component {0} is outside [0, 1)")]
    AlphaOutOfRange(f64),
    #[error("sampling function is not real: coefficient at {k:?} is not the conjugate of the one at -k")]
    NotRealSymmetric { k: Vec<i64> },
    #[error("invalid perturbation parameter: {0}")]
    BadPerturbation(String),
    #[error("interval [{0}, {1}] is empty")]
    EmptyInterval(i64, i64),
}

/// One term `amplitude · e^{2πi⟨k, x⟩}` of the sampling function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

impl FourierMode {
    pub fn new(k: Vec<i64>, amplitude: Complex64) -> Self {
        Self {
            k,
            re: amplitude.re,
            im: amplitude.im,
        }
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Reduce `x` into `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `frac(θ + n·α)` with the product `n·α` carried in twice the working
/// precision (an FMA error-free product), so the phase does not drift for
/// large `|n|`.
pub fn orbit_phase(theta: f64, alpha: f64, n: i64) -> f64 {
    let nf = n as f64;
    let hi = nf * alpha;
    let lo = nf.mul_add(alpha, -hi);
    let hi_frac = hi - hi.floor();
    frac(hi_frac + (lo + theta))
}

/// Quasi-periodic potential `λ·v(θ + nα)` with `v` a finite Fourier sum on
/// the d-torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    modes: Vec<FourierMode>,
    alpha: Vec<f64>,
    theta: Vec<f64>,
    lambda: f64,
}

impl PotentialSpec {
    pub fn new(modes: Vec<FourierMode>, alpha: Vec<f64>, theta: Vec<f64>, lambda: f64) -> Result<Self, LatticeError> {
        let d = alpha.len();
        if d == 0 {
            return Err(LatticeError::EmptyFrequency);
        }
        for m in &modes {
            if m.k.len() != d || theta.len() != d {
                return Err(LatticeError::DimensionMismatch {
                    alpha: d,
                    theta: theta.len(),
                    mode: m.k.clone(),
                    mode_dim: m.k.len(),
                });
            }
        }
        if theta.len() != d {
            return Err(LatticeError::DimensionMismatch {
                alpha: d,
                theta: theta.len(),
                mode: vec![],
                mode_dim: 0,
            });
        }
        if let Some(&a) = alpha.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(LatticeError::AlphaOutOfRange(a));
        }
        check_real_symmetric(&modes)?;
        let theta = theta.into_iter().map(frac).collect();
        Ok(Self {
            modes,
            alpha,
            theta,
            lambda,
        })
    }

    /// `2λ cos(2π(θ + nα))`, i.e. modes ±1 with unit amplitude.
    pub fn almost_mathieu(lambda: f64, alpha: f64, theta: f64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        Self::new(
            vec![FourierMode::new(vec![1], one), FourierMode::new(vec![-1], one)],
            vec![alpha],
            vec![theta],
            lambda,
        )
        .expect("almost Mathieu parameters are valid")
    }

    /// The zero potential with a one-dimensional frequency.
    pub fn zero() -> Self {
        Self {
            modes: Vec::new(),
            alpha: vec![0.0],
            theta: vec![0.0],
            lambda: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == 0.0 || self.modes.iter().all(|m| m.re == 0.0 && m.im == 0.0)
    }

    pub fn with_theta(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.dim());
        let mut out = self.clone();
        out.theta = theta.iter().copied().map(frac).collect();
        out
    }

    /// Largest mode |k|_∞, i.e. the Fourier cutoff.
    pub fn cutoff(&self) -> i64 {
        self.modes
            .iter()
            .flat_map(|m| m.k.iter().map(|k| k.abs()))
            .max()
            .unwrap_or(0)
    }

    /// `Σ |c_k|·|λ|`, an upper bound for `sup |λ v|`.
    pub fn sup_bound(&self) -> f64 {
        self.lambda.abs() * self.modes.iter().map(|m| m.amplitude().norm()).sum::<f64>()
    }

    /// `λ·v(x)` including the imaginary part, which vanishes up to rounding.
    pub fn sample_complex(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in &self.modes {
            let phase: f64 = m.k.iter().zip(x).map(|(k, xi)| *k as f64 * xi).sum();
            let arg = 2.0 * PI * frac(phase);
            acc += m.amplitude() * Complex64::new(arg.cos(), arg.sin());
        }
        acc * self.lambda
    }

    /// `λ·v(x)` (real part only).
    pub fn sample(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for m in &self.modes {
            let phase: f64 = m.k.iter().zip(x).map(|(k, xi)| *k as f64 * xi).sum();
            let arg = 2.0 * PI * frac(phase);
            acc += m.re * arg.cos() - m.im * arg.sin();
        }
        acc * self.lambda
    }

    /// Phase `θ + nα mod 1` in every coordinate.
    pub fn phase_at(&self, n: i64) -> Vec<f64> {
        self.theta
            .iter()
            .zip(&self.alpha)
            .map(|(t, a)| orbit_phase(*t, *a, n))
            .collect()
    }

    pub fn site_value(&self, n: i64) -> f64 {
        if self.modes.is_empty() || self.lambda == 0.0 {
            return 0.0;
        }
        if self.dim() == 1 {
            return self.sample(&[orbit_phase(self.theta[0], self.alpha[0], n)]);
        }
        self.sample(&self.phase_at(n))
    }
}

fn check_real_symmetric(modes: &[FourierMode]) -> Result<(), LatticeError> {
    const TOL: f64 = 1e-14;
    for m in modes {
        let neg: Vec<i64> = m.k.iter().map(|k| -k).collect();
        let conj_total: Complex64 = modes.iter().filter(|o| o.k == neg).map(|o| o.amplitude()).sum();
        let total: Complex64 = modes.iter().filter(|o| o.k == m.k).map(|o| o.amplitude()).sum();
        if (total - conj_total.conj()).norm() > TOL * (1.0 + total.norm()) {
            return Err(LatticeError::NotRealSymmetric { k: m.k.clone() });
        }
    }
    Ok(())
}

/// Dense window of perturbation values, zero outside `[start, start + len)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableValues {
    pub start: i64,
    pub values: Vec<f64>,
}

impl TableValues {
    /// Build from sparse `(n, value)` pairs.
    pub fn from_pairs(pairs: &[(i64, f64)]) -> Self {
        if pairs.is_empty() {
            return Self {
                start: 0,
                values: Vec::new(),
            };
        }
        let lo = pairs.iter().map(|p| p.0).min().unwrap();
        let hi = pairs.iter().map(|p| p.0).max().unwrap();
        let mut values = vec![0.0; (hi - lo + 1) as usize];
        for &(n, v) in pairs {
            values[(n - lo) as usize] = v;
        }
        Self { start: lo, values }
    }

    pub fn get(&self, n: i64) -> f64 {
        let i = n - self.start;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }
}

/// Decaying perturbation `g(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    #[default]
    Zero,
    /// `C·e^{-s|n|}`
    Exponential {
        c: f64,
        s: f64,
    },
    /// `C·(1+|n|)^{-γ}`
    PowerLaw {
        c: f64,
        gamma: f64,
    },
    Table(TableValues),
}

impl PerturbationSpec {
    pub fn exponential(c: f64, s: f64) -> Result<Self, LatticeError> {
        if !(c >= 0.0) || !(s > 0.0) {
            return Err(LatticeError::BadPerturbation(format!(
                "exponential needs C >= 0 and s > 0, got C={c}, s={s}"
            )));
        }
        Ok(Self::Exponential { c, s })
    }

    pub fn power_law(c: f64, gamma: f64) -> Result<Self, LatticeError> {
        if !(c >= 0.0) || !(gamma > 0.0) {
            return Err(LatticeError::BadPerturbation(format!(
                "power law needs C >= 0 and gamma > 0, got C={c}, gamma={gamma}"
            )));
        }
        Ok(Self::PowerLaw { c, gamma })
    }

    pub fn value(&self, n: i64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Exponential { c, s } => c * (-s * n.unsigned_abs() as f64).exp(),
            Self::PowerLaw { c, gamma } => c * (1.0 + n.unsigned_abs() as f64).powf(-gamma),
            Self::Table(t) => t.get(n),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Exponential { c, .. } | Self::PowerLaw { c, .. } => *c == 0.0,
            Self::Table(t) => t.values.iter().all(|v| *v == 0.0),
        }
    }

    /// Membership in the class of sequences with finite first moment.
    pub fn in_l11(&self) -> bool {
        match self {
            Self::Zero | Self::Exponential { .. } | Self::Table(_) => true,
            Self::PowerLaw { c, gamma } => *c == 0.0 || *gamma > 2.0,
        }
    }

    /// `Σ_n |n|·|g(n)|`, or `None` when the sum diverges.
    pub fn first_moment(&self) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::Exponential { c, s } => {
                let q = (-s).exp();
                Some(2.0 * c * q / ((1.0 - q) * (1.0 - q)))
            }
            Self::PowerLaw { c, gamma } => {
                if *c == 0.0 {
                    return Some(0.0);
                }
                if *gamma <= 2.0 {
                    return None;
                }
                Some(2.0 * c.abs() * power_law_moment_sum(*gamma))
            }
            Self::Table(t) => Some(
                t.values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (t.start + i as i64).unsigned_abs() as f64 * v.abs())
                    .sum(),
            ),
        }
    }

    /// `sup_n |g(n)|`.
    pub fn sup(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Exponential { c, .. } | Self::PowerLaw { c, .. } => c.abs(),
            Self::Table(t) => t.values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// `Σ_{m≥2} (m-1)·m^{-γ}` for γ > 2: direct sum plus an Euler–Maclaurin tail.
fn power_law_moment_sum(gamma: f64) -> f64 {
    const M: usize = 20_000;
    let f = |m: f64| (m - 1.0) * m.powf(-gamma);
    let mut s = 0.0;
    for m in (2..M).rev() {
        s += f(m as f64);
    }
    let mf = M as f64;
    let integral = mf.powf(2.0 - gamma) / (gamma - 2.0) - mf.powf(1.0 - gamma) / (gamma - 1.0);
    // f'(x) = x^{-γ} - γ(x-1)x^{-γ-1}
    let df = mf.powf(-gamma) - gamma * (mf - 1.0) * mf.powf(-gamma - 1.0);
    s + integral + 0.5 * f(mf) - df / 12.0
}

/// The whole-line operator `Δ + λv(θ+nα) + g(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
}

impl OperatorSpec {
    pub fn new(potential: PotentialSpec, perturbation: PerturbationSpec) -> Self {
        Self {
            potential,
            perturbation,
        }
    }

    pub fn unperturbed(potential: PotentialSpec) -> Self {
        Self::new(potential, PerturbationSpec::Zero)
    }

    /// The free Laplacian plus a perturbation.
    pub fn free(perturbation: PerturbationSpec) -> Self {
        Self::new(PotentialSpec::zero(), perturbation)
    }

    /// Diagonal entry at site `n`.
    pub fn eval_site(&self, n: i64) -> f64 {
        self.potential.site_value(n) + self.perturbation.value(n)
    }

    pub fn potential_only(&self) -> Self {
        Self::unperturbed(self.potential.clone())
    }

    pub fn with_theta(&self, theta: &[f64]) -> Self {
        Self::new(self.potential.with_theta(theta), self.perturbation.clone())
    }

    pub fn is_unperturbed(&self) -> bool {
        self.perturbation.is_zero()
    }

    /// Bound on `‖H̃‖`.
    pub fn norm_bound(&self) -> f64 {
        2.0 + self.potential.sup_bound() + self.perturbation.sup()
    }

    pub fn build_box(&self, n1: i64, n2: i64) -> Result<BoxOperator, LatticeError> {
        build_box(self, n1, n2)
    }
}

/// Restriction of an operator to `[n1, n2]` with Dirichlet conditions at
/// `n1 - 1` and `n2 + 1`. Off-diagonal entries are all 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxOperator {
    n1: i64,
    diagonal: Vec<f64>,
}

impl BoxOperator {
    pub fn from_diagonal(n1: i64, diagonal: Vec<f64>) -> Result<Self, LatticeError> {
        if diagonal.is_empty() {
            return Err(LatticeError::EmptyInterval(n1, n1 - 1));
        }
        Ok(Self { n1, diagonal })
    }

    pub fn n1(&self) -> i64 {
        self.n1
    }
    pub fn n2(&self) -> i64 {
        self.n1 + self.diagonal.len() as i64 - 1
    }
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }
    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Diagonal entry at lattice site `n`.
    pub fn at(&self, n: i64) -> f64 {
        self.diagonal[(n - self.n1) as usize]
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.n1 && n <= self.n2()
    }

    /// Gershgorin interval `[lo, hi]` containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let m = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, d) in self.diagonal.iter().enumerate() {
            let r = (i > 0) as u8 as f64 + (i + 1 < m) as u8 as f64;
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    /// Bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// `(box · x)` for a vector indexed from `n1`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.len();
        (0..m)
            .map(|i| {
                let mut s = self.diagonal[i] * x[i];
                if i > 0 {
                    s += x[i - 1];
                }
                if i + 1 < m {
                    s += x[i + 1];
                }
                s
            })
            .collect()
    }
}

pub fn build_box(op: &OperatorSpec, n1: i64, n2: i64) -> Result<BoxOperator, LatticeError> {
    if n1 > n2 {
        return Err(LatticeError::EmptyInterval(n1, n2));
    }
    let diagonal = (n1..=n2).map(|n| op.eval_site(n)).collect();
    Ok(BoxOperator { n1, diagonal })
}

/// Potential of the threshold-eigenvalue example: `V(n) = -2/(n²-1)` for
/// `|n| ≥ 2`, completed at `n ∈ {-1, 0, 1}` so that `u(n) = 1/n` for
/// `n ≠ 0` and `u(0) = 1` solves `H u = 2u` on the whole line. The table
/// covers `[-extent, extent]`.
pub fn threshold_example_table(extent: i64) -> TableValues {
    let extent = extent.max(2);
    let u = |n: i64| if n == 0 { 1.0 } else { 1.0 / n as f64 };
    let values = (-extent..=extent)
        .map(|n| {
            if n.abs() >= 2 {
                let nf = n as f64;
                -2.0 / (nf * nf - 1.0)
            } else {
                2.0 - (u(n + 1) + u(n - 1)) / u(n)
            }
        })
        .collect();
    TableValues { start: -extent, values }
}

/// Named frequency constants.
pub mod frequencies {
    /// (√5 − 1)/2
    pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
    /// √2 − 1
    pub const SQRT2_MINUS_1: f64 = 0.414_213_562_373_095_1;
}

#[cfg(test)]
mod tests {
    use super::frequencies::GOLDEN;
    use super::*;

    fn amo(lambda: f64, theta: f64) -> OperatorSpec {
        OperatorSpec::unperturbed(PotentialSpec::almost_mathieu(lambda, GOLDEN, theta))
    }

    #[test]
    fn zero_operator_is_zero_everywhere() {
        let op = OperatorSpec::free(PerturbationSpec::Zero);
        for n in [-7, 0, 3, 1_000_000] {
            assert_eq!(op.eval_site(n), 0.0);
        }
    }

    #[test]
    fn constant_orbit_gives_two() {
        let op = OperatorSpec::unperturbed(PotentialSpec::almost_mathieu(1.0, 0.0, 0.0));
        assert!((op.eval_site(5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_potential_values() {
        let t = threshold_example_table(10);
        assert!((t.get(2) + 2.0 / 3.0).abs() < 1e-15);
        assert!((t.get(3) + 0.25).abs() < 1e-15);
        assert!((t.get(4) + 2.0 / 15.0).abs() < 1e-15);
        let op = OperatorSpec::free(PerturbationSpec::Table(t));
        let b = op.build_box(2, 4).unwrap();
        assert_eq!(b.diagonal().len(), 3);
        assert!((b.at(2) + 2.0 / 3.0).abs() < 1e-15);
        assert!((b.at(4) + 2.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn build_box_examples() {
        let z = OperatorSpec::free(PerturbationSpec::Zero).build_box(0, 2).unwrap();
        assert_eq!(z.diagonal(), &[0.0, 0.0, 0.0]);
        let b = amo(1.0, 0.0).build_box(0, 1).unwrap();
        assert!((b.at(0) - 2.0).abs() < 1e-15);
        assert!((b.at(1) - 2.0 * (2.0 * PI * GOLDEN).cos()).abs() < 1e-14);
        assert_eq!(amo(1.0, 0.0).build_box(3, 2), Err(LatticeError::EmptyInterval(3, 2)));
    }

    #[test]
    fn rejects_non_real_coefficients() {
        let modes = vec![
            FourierMode::new(vec![1], Complex64::new(1.0, 0.5)),
            FourierMode::new(vec![-1], Complex64::new(1.0, 0.5)),
        ];
        let err = PotentialSpec::new(modes, vec![GOLDEN], vec![0.0], 1.0).unwrap_err();
        assert!(matches!(err, LatticeError::NotRealSymmetric { .. }));
        let ok = vec![
            FourierMode::new(vec![1], Complex64::new(1.0, 0.5)),
            FourierMode::new(vec![-1], Complex64::new(1.0, -0.5)),
        ];
        assert!(PotentialSpec::new(ok, vec![GOLDEN], vec![0.0], 1.0).is_ok());
    }

    #[test]
    fn rejects_bad_alpha_and_dims() {
        assert_eq!(
            PotentialSpec::new(vec![], vec![1.2], vec![0.0], 1.0),
            Err(LatticeError::AlphaOutOfRange(1.2))
        );
        assert_eq!(
            PotentialSpec::new(vec![], vec![], vec![], 1.0),
            Err(LatticeError::EmptyFrequency)
        );
        let m = vec![FourierMode::new(vec![1, 0], Complex64::new(1.0, 0.0))];
        assert!(PotentialSpec::new(m, vec![0.3], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn orbit_phase_is_accurate_at_large_n() {
        // n·α for α = 2^-3 + 2^-40 is exact in binary; compare.
        let alpha = 0.125 + 2f64.powi(-40);
        let n: i64 = 9_999_999;
        let exact = frac(n as f64 * 0.125) + frac(n as f64 * 2f64.powi(-40));
        assert!((orbit_phase(0.0, alpha, n) - frac(exact)).abs() < 1e-15);
    }

    #[test]
    fn exponential_first_moment_matches_direct_sum() {
        for &s in &[0.3, 1.0, 2.5] {
            let g = PerturbationSpec::exponential(1.7, s).unwrap();
            let m = (50.0 / s).ceil() as i64;
            let direct: f64 = (-m..=m).map(|n| n.abs() as f64 * g.value(n)).sum();
            let closed = g.first_moment().unwrap();
            assert!(((closed - direct) / closed).abs() < 1e-10, "s={s}");
        }
    }

    #[test]
    fn power_law_moment_and_flag() {
        let g = PerturbationSpec::power_law(1.0, 3.0).unwrap();
        assert!(g.in_l11());
        // Σ_{m≥2}(m-1)m^{-3} = ζ(2) - ζ(3)
        let expected = 2.0 * (PI * PI / 6.0 - 1.202_056_903_159_594_3);
        assert!((g.first_moment().unwrap() - expected).abs() < 1e-9);
        let h = PerturbationSpec::power_law(1.0, 0.8).unwrap();
        assert!(!h.in_l11());
        assert_eq!(h.first_moment(), None);
        assert!(PerturbationSpec::exponential(1.0, 0.0).is_err());
    }

    #[test]
    fn power_law_convention_at_origin() {
        let g = PerturbationSpec::power_law(2.0, 1.5).unwrap();
        assert_eq!(g.value(0), 2.0);
        assert!((g.value(-3) - 2.0 * 4f64.powf(-1.5)).abs() < 1e-15);
    }
}
