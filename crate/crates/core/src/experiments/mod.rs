//! Scenario runners that combine the lattice, cocycle, spectral and
//! oscillation layers into reproducible checks, and the report format they
//! emit.
//!
//! A [`Scenario`] is a plain serializable value. Running it yields a
//! [`RunReport`] whose numeric content depends only on the scenario, so two
//! runs of the same scenario serialize identically apart from the `timing`
//! field.

mod scenarios;

pub use scenarios::{
    run_appendix_example, run_gap_edge_scenario, run_ldt_measurement, run_localization_scenario,
    run_subcritical_ac_indicators,
};

use crate::cocycle::CocycleError;
use crate::lattice::{frequencies::GOLDEN, LatticeError, OperatorSpec, PerturbationSpec, PotentialSpec};
use crate::oscillation::OscillationError;
use crate::spectral::SpectralError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Oscillation(#[from] OscillationError),
    #[error("spectrum edge not found: {0}")]
    EdgeNotFound(String),
    #[error("{0}")]
    BadParameter(String),
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
}

/// How a measured value is compared with its expected value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `|measured − expected| ≤ tolerance`
    Within,
    /// `measured ≤ expected + tolerance`
    AtMost,
    /// `measured ≥ expected − tolerance`
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    #[serde(with = "nullable")]
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub check: Check,
    pub pass: bool,
}

impl Assertion {
    pub fn new(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64, check: Check) -> Self {
        Self {
            name: name.into(),
            measured,
            expected,
            tolerance,
            check,
            pass: Self::evaluate(check, measured, expected, tolerance),
        }
    }

    /// NaN never passes.
    pub fn evaluate(check: Check, measured: f64, expected: f64, tolerance: f64) -> bool {
        match check {
            Check::Within => (measured - expected).abs() <= tolerance,
            Check::AtMost => measured <= expected + tolerance,
            Check::AtLeast => measured >= expected - tolerance,
        }
    }

    /// A yes/no outcome as `measured ∈ {0, 1}` against `expected = 1`.
    pub fn flag(name: impl Into<String>, holds: bool) -> Self {
        Self::new(name, if holds { 1.0 } else { 0.0 }, 1.0, 0.0, Check::Within)
    }
}

/// A numeric table written as CSV next to the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(with = "nullable::rows")]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub operator: OperatorSpec,
    pub parameters: ScenarioParams,
    pub assertions: Vec<Assertion>,
    /// Measurements reported without a pass/fail judgement.
    #[serde(with = "nullable::map")]
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub tables: Vec<Table>,
    pub artifacts: Vec<String>,
    pub pass: bool,
    /// Excluded from [`RunReport::comparable_json`].
    pub timing: Timing,
}

impl RunReport {
    fn new(scenario: &Scenario) -> Self {
        Self {
            scenario: scenario.params.name().into(),
            config_hash: scenario.config_hash(),
            seed: scenario.seed,
            operator: scenario.operator.clone(),
            parameters: scenario.params.clone(),
            assertions: Vec::new(),
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            tables: Vec::new(),
            artifacts: Vec::new(),
            pass: true,
            timing: Timing::default(),
        }
    }

    pub fn assert(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    fn finish(mut self, started: Instant) -> Self {
        self.pass = self.assertions.iter().all(|a| a.pass);
        self.timing.wall_seconds = started.elapsed().as_secs_f64();
        self
    }

    /// The report with `timing` zeroed, serialized.
    pub fn comparable_json(&self) -> Result<String, serde_json::Error> {
        let mut r = self.clone();
        r.timing = Timing::default();
        serde_json::to_string_pretty(&r)
    }

    /// Directory name `<scenario>-<first 12 hex digits of the config hash>`.
    pub fn run_dir_name(&self) -> String {
        format!("{}-{}", self.scenario, &self.config_hash[..12])
    }

    /// Write `report.json` and one CSV per table under
    /// `root/<run_dir_name>`, recording the file names in `artifacts`.
    pub fn write_artifacts(&mut self, root: &Path) -> Result<PathBuf, ExperimentError> {
        let dir = root.join(self.run_dir_name());
        std::fs::create_dir_all(&dir)?;
        self.artifacts.clear();
        for t in &self.tables {
            let file = format!("{}.csv", t.name);
            std::fs::write(dir.join(&file), t.to_csv())?;
            self.artifacts.push(file);
        }
        let report = dir.join("report.json");
        self.artifacts.push("report.json".into());
        std::fs::write(&report, serde_json::to_string_pretty(self)?)?;
        Ok(report)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} [{}]", self.scenario, if self.pass { "PASS" } else { "FAIL" });
        for a in &self.assertions {
            let _ = writeln!(
                s,
                "  {:<4} {}: measured {:.6e}, expected {:.6e} ({:?}, tol {:.1e})",
                if a.pass { "ok" } else { "FAIL" },
                a.name,
                a.measured,
                a.expected,
                a.check,
                a.tolerance
            );
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixParams {
    /// Residual and `sup n²|V|` are checked for `3 ≤ |n| ≤ extent`.
    pub extent: i64,
    /// Weyl horizon for the threshold and gap-count checks.
    pub horizon: i64,
    /// Half-width of the window around `E = 2`.
    pub delta: f64,
}

impl Default for AppendixParams {
    fn default() -> Self {
        Self {
            extent: 1_000_000,
            horizon: 200_000,
            delta: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubcriticalParams {
    pub energies: usize,
    pub k_max: u64,
    pub growth_cap: f64,
    pub gaps: usize,
    pub horizon: i64,
    pub ids_box: usize,
    pub grid_points: usize,
}

impl Default for SubcriticalParams {
    fn default() -> Self {
        Self {
            energies: 8,
            k_max: 100_000,
            growth_cap: 1.1,
            gaps: 3,
            horizon: 1000,
            ids_box: 4000,
            grid_points: 800,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationParams {
    /// The box is `[−half_width, half_width − 1]`.
    pub half_width: i64,
    pub vectors: usize,
    /// Relative band around the Lyapunov exponent.
    pub band: f64,
    pub min_pass: usize,
    pub ids_low: f64,
    pub ids_high: f64,
    pub lyapunov_k: usize,
    pub theta_grid: usize,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            half_width: 1000,
            vectors: 20,
            band: 0.2,
            min_pass: 18,
            ids_low: 0.4,
            ids_high: 0.6,
            lyapunov_k: 10_000,
            theta_grid: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdtParams {
    pub energy: f64,
    /// Base length; the measurement uses `n`, `2n` and `4n`.
    pub n: usize,
    pub eps: f64,
    pub theta_samples: usize,
    /// θ samples for the window-scan statistic (`0` disables it).
    pub window_samples: usize,
}

impl Default for LdtParams {
    fn default() -> Self {
        Self {
            energy: 0.0,
            n: 100,
            eps: 0.1,
            theta_samples: 1000,
            window_samples: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapEdgeParams {
    pub horizon: i64,
    /// Sites of the box used to locate the spectrum edges.
    pub edge_box: usize,
    pub ids_box: usize,
    pub grid_points: usize,
    pub iterates: usize,
    pub tolerance: f64,
    pub label_k_max: i64,
    pub label_tolerance: f64,
}

impl Default for GapEdgeParams {
    fn default() -> Self {
        Self {
            horizon: 1000,
            edge_box: 8000,
            ids_box: 4000,
            grid_points: 400,
            iterates: 10_000,
            tolerance: 5e-3,
            label_k_max: 30,
            label_tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ScenarioParams {
    Appendix(AppendixParams),
    SubcriticalAc(SubcriticalParams),
    Localization(LocalizationParams),
    Ldt(LdtParams),
    GapEdge(GapEdgeParams),
}

impl ScenarioParams {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Appendix(_) => "appendix",
            Self::SubcriticalAc(_) => "subcritical_ac",
            Self::Localization(_) => "localization",
            Self::Ldt(_) => "ldt",
            Self::GapEdge(_) => "gap_edge",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Ignored by the appendix scenario, which builds its own operator.
    pub operator: OperatorSpec,
    pub params: ScenarioParams,
    pub seed: u64,
}

impl Scenario {
    pub fn new(operator: OperatorSpec, params: ScenarioParams) -> Self {
        Self {
            operator,
            params,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn appendix() -> Self {
        Self::new(
            OperatorSpec::free(PerturbationSpec::Zero),
            ScenarioParams::Appendix(AppendixParams::default()),
        )
    }

    pub fn gap_edge() -> Self {
        Self::new(
            OperatorSpec::unperturbed(PotentialSpec::almost_mathieu(0.2, GOLDEN, 0.0)),
            ScenarioParams::GapEdge(GapEdgeParams::default()),
        )
    }

    /// SHA-256 of the scenario's JSON serialization, in hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenarios serialize");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunReport, ExperimentError> {
    let started = Instant::now();
    let mut report = RunReport::new(scenario);
    let op = &scenario.operator;
    match &scenario.params {
        ScenarioParams::Appendix(p) => scenarios::appendix(p, &mut report)?,
        ScenarioParams::SubcriticalAc(p) => scenarios::subcritical(op, p, &mut report)?,
        ScenarioParams::Localization(p) => scenarios::localization(op, p, &mut report)?,
        ScenarioParams::Ldt(p) => scenarios::ldt(op, p, scenario.seed, &mut report)?,
        ScenarioParams::GapEdge(p) => scenarios::gap_edge(op, p, &mut report)?,
    }
    Ok(report.finish(started))
}

/// Non-finite floats as JSON `null`, read back as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    fn wrap(x: f64) -> Option<f64> {
        x.is_finite().then_some(x)
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        wrap(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod rows {
        use super::*;

        pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            let v: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|x| wrap(*x)).collect()).collect();
            v.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let v = Vec::<Vec<Option<f64>>>::deserialize(d)?;
            Ok(v.into_iter()
                .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
                .collect())
        }
    }

    pub mod map {
        use super::*;
        use std::collections::BTreeMap;

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            let v: BTreeMap<&String, Option<f64>> = m.iter().map(|(k, x)| (k, wrap(*x))).collect();
            v.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            let v = BTreeMap::<String, Option<f64>>::deserialize(d)?;
            Ok(v.into_iter().map(|(k, x)| (k, x.unwrap_or(f64::NAN))).collect())
        }
    }
}
