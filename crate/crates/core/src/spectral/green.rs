use super::determinant::{sturm_count, DeterminantSequence};
use super::SpectralError;
use crate::lattice::{BoxOperator, OperatorSpec};
use crate::linalg::solve_tridiagonal;
use serde::{Deserialize, Serialize};

/// Boxes up to this length use the determinant formula by default.
pub const CRAMER_MAX_LEN: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenSample {
    pub interval: (i64, i64),
    pub energy: f64,
    pub entry: (i64, i64),
    pub value: f64,
    pub log_magnitude: f64,
}

/// Resolvent `(H_box − E)^{-1}` through leading and trailing block
/// determinants. For `n1 ≤ n2`
/// `G(n1, n2) = −P_{n1−N1}(N1)·P_{N2−n2}(n2+1) / P_N(N1)`.
#[derive(Clone, Debug)]
pub struct GreenTable {
    n1: i64,
    n2: i64,
    energy: f64,
    forward: DeterminantSequence,
    backward: DeterminantSequence,
}

fn singular_check(b: &BoxOperator, energy: f64) -> Result<(), SpectralError> {
    let delta = 1e-13 * b.norm_bound().max(1.0);
    if sturm_count(b, energy - delta) != sturm_count(b, energy + delta) {
        return Err(SpectralError::SingularBox { energy });
    }
    Ok(())
}

impl GreenTable {
    pub fn new(b: &BoxOperator, energy: f64) -> Result<Self, SpectralError> {
        singular_check(b, energy)?;
        let forward = DeterminantSequence::from_diagonal(b.n1(), b.diagonal(), energy);
        let rev: Vec<f64> = b.diagonal().iter().rev().copied().collect();
        let backward = DeterminantSequence::from_diagonal(b.n2(), &rev, energy);
        if forward.sign(b.len() as isize) == 0.0 {
            return Err(SpectralError::SingularBox { energy });
        }
        Ok(Self {
            n1: b.n1(),
            n2: b.n2(),
            energy,
            forward,
            backward,
        })
    }

    /// `(sign, log|G(n1, n2)|)`.
    pub fn signed_log(&self, n1: i64, n2: i64) -> (f64, f64) {
        let (i, j) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
        assert!(self.n1 <= i && j <= self.n2, "entry outside the box");
        let left = (i - self.n1) as isize;
        let right = (self.n2 - j) as isize;
        let (s1, l1) = self.forward.get(left);
        let (s2, l2) = self.backward.get(right);
        let (s3, l3) = self.forward.get((self.n2 - self.n1 + 1) as isize);
        (-s1 * s2 * s3, l1 + l2 - l3)
    }

    pub fn entry(&self, n1: i64, n2: i64) -> GreenSample {
        let (s, l) = self.signed_log(n1, n2);
        GreenSample {
            interval: (self.n1, self.n2),
            energy: self.energy,
            entry: (n1, n2),
            value: s * l.exp(),
            log_magnitude: l,
        }
    }
}

/// `G(n1, n2)` by the determinant formula for boxes up to
/// [`CRAMER_MAX_LEN`] sites and by a pivoted tridiagonal solve beyond.
pub fn green_entry(b: &BoxOperator, energy: f64, n1: i64, n2: i64) -> Result<GreenSample, SpectralError> {
    if b.len() <= CRAMER_MAX_LEN {
        green_entry_cramer(b, energy, n1, n2)
    } else {
        green_entry_solve(b, energy, n1, n2)
    }
}

pub fn green_entry_cramer(b: &BoxOperator, energy: f64, n1: i64, n2: i64) -> Result<GreenSample, SpectralError> {
    check_sites(b, n1, n2)?;
    Ok(GreenTable::new(b, energy)?.entry(n1, n2))
}

/// Column `n2` of `(H_box − E)^{-1}` from a tridiagonal solve.
pub fn green_entry_solve(b: &BoxOperator, energy: f64, n1: i64, n2: i64) -> Result<GreenSample, SpectralError> {
    check_sites(b, n1, n2)?;
    singular_check(b, energy)?;
    let col = green_column(b, energy, n2);
    let value = col[(n1 - b.n1()) as usize];
    Ok(GreenSample {
        interval: (b.n1(), b.n2()),
        energy,
        entry: (n1, n2),
        value,
        log_magnitude: value.abs().ln(),
    })
}

/// `(H_box − E)^{-1} e_{n}`.
pub fn green_column(b: &BoxOperator, energy: f64, n: i64) -> Vec<f64> {
    let shifted: Vec<f64> = b.diagonal().iter().map(|v| v - energy).collect();
    let mut rhs = vec![0.0; b.len()];
    rhs[(n - b.n1()) as usize] = 1.0;
    solve_tridiagonal(&shifted, 1.0, &rhs, f64::MIN_POSITIVE)
}

fn check_sites(b: &BoxOperator, n1: i64, n2: i64) -> Result<(), SpectralError> {
    if b.contains(n1) && b.contains(n2) {
        Ok(())
    } else {
        Err(SpectralError::BadParameter(format!(
            "sites ({n1}, {n2}) outside [{}, {}]",
            b.n1(),
            b.n2()
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub interval: (i64, i64),
    /// `max log|G(n1,n2)| + target·|n1−n2| − slack·N`; `None` for a singular window.
    pub score: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScanReport {
    pub right: Vec<WindowResult>,
    pub left: Vec<WindowResult>,
    /// Index of the best (lowest-score) window on each side.
    pub best_right: Option<usize>,
    pub best_left: Option<usize>,
    pub right_pass: bool,
    pub left_pass: bool,
}

impl WindowScanReport {
    pub fn any_pass(&self) -> bool {
        self.right_pass || self.left_pass
    }
}

/// The four right windows `[1,N]+N′, [1,N−1]+N′, [2,N]+N′, [2,N−1]+N′` and
/// their mirror images on the left.
pub fn scan_windows(n: i64, n_prime: i64) -> (Vec<(i64, i64)>, Vec<(i64, i64)>) {
    let right = vec![
        (1 + n_prime, n + n_prime),
        (1 + n_prime, n - 1 + n_prime),
        (2 + n_prime, n + n_prime),
        (2 + n_prime, n - 1 + n_prime),
    ];
    let left = vec![
        (-n - n_prime, -1 - n_prime),
        (-n + 1 - n_prime, -1 - n_prime),
        (-n - n_prime, -2 - n_prime),
        (-n + 1 - n_prime, -2 - n_prime),
    ];
    (right, left)
}

pub fn window_scan(
    op: &OperatorSpec,
    energy: f64,
    n: i64,
    n_prime: i64,
    decay_rate_target: f64,
    slack: f64,
) -> Result<WindowScanReport, SpectralError> {
    if n < 4 {
        return Err(SpectralError::BadParameter("window scan needs N >= 4".into()));
    }
    let (right, left) = scan_windows(n, n_prime);
    let eval = |w: &(i64, i64)| -> Result<WindowResult, SpectralError> {
        let b = op.build_box(w.0, w.1)?;
        let score = match GreenTable::new(&b, energy) {
            Ok(t) => {
                let mut worst = f64::NEG_INFINITY;
                for i in w.0..=w.1 {
                    for j in i..=w.1 {
                        let (_, l) = t.signed_log(i, j);
                        worst = worst.max(l + decay_rate_target * (j - i) as f64);
                    }
                }
                Some(worst - slack * n as f64)
            }
            Err(SpectralError::SingularBox { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(WindowResult {
            interval: *w,
            score,
            pass: score.is_some_and(|s| s <= 0.0),
        })
    };
    let right: Vec<WindowResult> = right.iter().map(eval).collect::<Result<_, _>>()?;
    let left: Vec<WindowResult> = left.iter().map(eval).collect::<Result<_, _>>()?;
    let best = |ws: &[WindowResult]| {
        ws.iter()
            .enumerate()
            .filter_map(|(i, w)| w.score.map(|s| (i, s)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    };
    Ok(WindowScanReport {
        best_right: best(&right),
        best_left: best(&left),
        right_pass: right.iter().any(|w| w.pass),
        left_pass: left.iter().any(|w| w.pass),
        right,
        left,
    })
}
