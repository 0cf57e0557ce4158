//! TOML run configuration: `[potential]`, `[perturbation]`, `[scenario]`
//! and `[numerics]` sections. Unknown keys anywhere are errors.

use crate::experiments::{Scenario, ScenarioParams};
use crate::lattice::frequencies::{GOLDEN, SQRT2_MINUS_1};
use crate::lattice::{
    threshold_example_table, FourierMode, OperatorSpec, PerturbationSpec, PotentialSpec, TableValues,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("[{section}] (line {line}): {message}")]
    Invalid {
        section: String,
        line: usize,
        message: String,
    },
}

/// A frequency component as written: a number, a decimal string, `p/q`,
/// or one of `golden`, `sqrt2m1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frequency {
    Number(f64),
    Text(String),
}

/// A resolved frequency and whether it is rational.
fn resolve_frequency(f: &Frequency) -> Result<(f64, bool), String> {
    let text = match f {
        Frequency::Number(x) => return Ok((*x, false)),
        Frequency::Text(t) => t.trim(),
    };
    match text {
        "golden" => Ok((GOLDEN, false)),
        "sqrt2m1" => Ok((SQRT2_MINUS_1, false)),
        _ => {
            if let Some((p, q)) = text.split_once('/') {
                let p: i64 = p
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad rational frequency {text:?}"))?;
                let q: i64 = q
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad rational frequency {text:?}"))?;
                if q == 0 {
                    return Err(format!("zero denominator in {text:?}"));
                }
                Ok((p as f64 / q as f64, true))
            } else {
                text.parse::<f64>()
                    .map(|x| (x, false))
                    .map_err(|_| format!("frequency {text:?} is not a number, p/q, golden or sqrt2m1"))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub k: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `2λ cos(2π(θ + nα))`
    AlmostMathieu {
        lambda: f64,
        alpha: Frequency,
        #[serde(default)]
        theta: f64,
    },
    Fourier {
        lambda: f64,
        alpha: Vec<Frequency>,
        #[serde(default)]
        theta: Vec<f64>,
        modes: Vec<ModeConfig>,
    },
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    Zero,
    Exponential {
        c: f64,
        s: f64,
    },
    PowerLaw {
        c: f64,
        gamma: f64,
    },
    Table {
        start: i64,
        values: Vec<f64>,
    },
    /// `V(n) = −2/(n²−1)` for `2 ≤ |n| ≤ extent`, completed at `|n| ≤ 1`.
    ThresholdExample {
        extent: i64,
    },
}

/// Run-level settings and defaults for the ad-hoc subcommands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub seed: u64,
    /// `0` keeps the rayon default.
    pub threads: usize,
    pub out: Option<String>,
    pub energy: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub points: Option<usize>,
    pub horizon: Option<i64>,
    pub box_size: Option<usize>,
    pub theta_grid: Option<usize>,
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioParams>,
    #[serde(default)]
    pub numerics: Numerics,
}

/// A validated configuration with its operator built.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub operator: OperatorSpec,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl Resolved {
    pub fn scenario(&self) -> Option<Scenario> {
        let params = self.config.scenario.clone()?;
        Some(Scenario::new(self.operator.clone(), params).with_seed(self.config.numerics.seed))
    }
}

fn section_line(text: &str, section: &str) -> usize {
    let header = format!("[{section}]");
    text.lines()
        .position(|l| l.trim_start().starts_with(&header))
        .map_or(0, |i| i + 1)
}

impl RunConfig {
    /// Fails for seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Syntax(e.to_string()))
    }
}

pub fn parse_config(text: &str) -> Result<Resolved, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let invalid = |section: &str, message: String| ConfigError::Invalid {
        section: section.into(),
        line: section_line(text, section),
        message,
    };
    let mut warnings = Vec::new();
    let mut notes = Vec::new();
    let mut freq = |f: &Frequency| -> Result<f64, ConfigError> {
        let (a, rational) = resolve_frequency(f).map_err(|m| invalid("potential", m))?;
        if rational {
            warnings.push(format!(
                "alpha = {a} is rational: (1, alpha) is rationally dependent and the quasi-periodic theory does not apply"
            ));
        }
        Ok(a)
    };
    let potential = match &config.potential {
        PotentialConfig::AlmostMathieu { lambda, alpha, theta } => PotentialSpec::new(
            vec![
                FourierMode::new(vec![1], Complex64::new(1.0, 0.0)),
                FourierMode::new(vec![-1], Complex64::new(1.0, 0.0)),
            ],
            vec![freq(alpha)?],
            vec![*theta],
            *lambda,
        ),
        PotentialConfig::Fourier {
            lambda,
            alpha,
            theta,
            modes,
        } => {
            let alpha = alpha.iter().map(&mut freq).collect::<Result<Vec<_>, _>>()?;
            let theta = if theta.is_empty() {
                vec![0.0; alpha.len()]
            } else {
                theta.clone()
            };
            let modes = modes
                .iter()
                .map(|m| FourierMode::new(m.k.clone(), Complex64::new(m.re, m.im)))
                .collect();
            PotentialSpec::new(modes, alpha, theta, *lambda)
        }
        PotentialConfig::Zero => Ok(PotentialSpec::zero()),
    }
    .map_err(|e| invalid("potential", e.to_string()))?;

    let perturbation = match &config.perturbation {
        None => {
            notes.push("no [perturbation] block; using the zero perturbation".into());
            PerturbationSpec::Zero
        }
        Some(PerturbationConfig::Zero) => PerturbationSpec::Zero,
        Some(PerturbationConfig::Exponential { c, s }) => {
            PerturbationSpec::exponential(*c, *s).map_err(|e| invalid("perturbation", e.to_string()))?
        }
        Some(PerturbationConfig::PowerLaw { c, gamma }) => {
            PerturbationSpec::power_law(*c, *gamma).map_err(|e| invalid("perturbation", e.to_string()))?
        }
        Some(PerturbationConfig::Table { start, values }) => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("perturbation", "table values must be finite".into()));
            }
            PerturbationSpec::Table(TableValues {
                start: *start,
                values: values.clone(),
            })
        }
        Some(PerturbationConfig::ThresholdExample { extent }) => {
            if *extent < 2 {
                return Err(invalid("perturbation", "threshold_example needs extent >= 2".into()));
            }
            PerturbationSpec::Table(threshold_example_table(*extent))
        }
    };
    Ok(Resolved {
        operator: OperatorSpec::new(potential, perturbation),
        config,
        warnings,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::LocalizationParams;

    const AMO: &str = r#"
[potential]
kind = "almost_mathieu"
lambda = 3.0
alpha = "golden"

[perturbation]
kind = "exponential"
c = 1.0
s = 1.0

[scenario]
name = "localization"
vectors = 10

[numerics]
seed = 7
"#;

    #[test]
    fn golden_and_sqrt2() {
        assert_eq!(
            resolve_frequency(&Frequency::Text("golden".into())).unwrap(),
            (0.6180339887498949, false)
        );
        assert!((resolve_frequency(&Frequency::Text("sqrt2m1".into())).unwrap().0 - (2f64.sqrt() - 1.0)).abs() < 1e-16);
        assert_eq!(
            resolve_frequency(&Frequency::Text("0.25".into())).unwrap(),
            (0.25, false)
        );
        assert!(resolve_frequency(&Frequency::Text("1/0".into())).is_err());
        assert!(resolve_frequency(&Frequency::Text("gold".into())).is_err());
    }

    #[test]
    fn parses_a_full_config() {
        let r = parse_config(AMO).unwrap();
        assert!(r.warnings.is_empty() && r.notes.is_empty());
        assert_eq!(r.operator.eval_site(0), 6.0 + 1.0);
        let s = r.scenario().unwrap();
        assert_eq!(s.seed, 7);
        assert!(matches!(
            s.params,
            ScenarioParams::Localization(LocalizationParams {
                vectors: 10,
                min_pass: 18,
                ..
            })
        ));
    }

    #[test]
    fn round_trips_through_toml() {
        let r = parse_config(AMO).unwrap();
        let again = parse_config(&r.config.to_toml().unwrap()).unwrap();
        assert_eq!(again.config, r.config);
        assert_eq!(again.operator, r.operator);
    }

    #[test]
    fn rational_alpha_warns() {
        let r = parse_config("[potential]\nkind = \"almost_mathieu\"\nlambda = 1.0\nalpha = \"1/3\"\n").unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!((r.operator.potential.alpha()[0] - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(r.notes.len(), 1, "missing perturbation is noted");
        assert_eq!(r.operator.perturbation, PerturbationSpec::Zero);
    }

    #[test]
    fn unknown_keys_are_errors_with_lines() {
        let typo = AMO.replace("seed = 7", "sead = 7");
        let e = parse_config(&typo).unwrap_err().to_string();
        assert!(e.contains("sead") && e.contains("line"), "{e}");
        let typo = AMO.replace("vectors = 10", "vector = 10");
        assert!(parse_config(&typo).is_err());
        let typo = AMO.replace("lambda = 3.0", "lambda = 3.0\nlamda = 2.0");
        assert!(parse_config(&typo).is_err());
    }

    #[test]
    fn rejects_non_real_fourier_blocks() {
        let text = r#"
[potential]
kind = "fourier"
lambda = 1.0
alpha = ["golden"]
modes = [{ k = [1], re = 1.0, im = 0.5 }, { k = [-1], re = 1.0, im = 0.5 }]
"#;
        let e = parse_config(text).unwrap_err();
        assert!(
            matches!(e, ConfigError::Invalid { ref section, line: 2, .. } if section == "potential"),
            "{e}"
        );
        let ok = text.replace("{ k = [-1], re = 1.0, im = 0.5 }", "{ k = [-1], re = 1.0, im = -0.5 }");
        assert!(parse_config(&ok).is_ok());
    }

    #[test]
    fn threshold_example_block() {
        let r =
            parse_config("[potential]\nkind = \"zero\"\n[perturbation]\nkind = \"threshold_example\"\nextent = 10\n")
                .unwrap();
        assert!((r.operator.eval_site(2) + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.operator.eval_site(11), 0.0);
    }
}
