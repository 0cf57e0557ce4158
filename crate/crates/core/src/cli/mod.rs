//! Command-line front end. Exit codes: 0 when every check passes, 1 when an
//! asserted check fails, 2 for configuration errors and rejected inputs.

pub mod config;

pub use config::{parse_config, ConfigError, Numerics, PerturbationConfig, PotentialConfig, Resolved, RunConfig};

use crate::cocycle::{lyapunov, telescoping_residuals};
use crate::experiments::{run_scenario, RunReport, Table};
use crate::oscillation::gap_eigenvalue_count;
use crate::spectral::{find_gaps, gap_label, green_entry_cramer, green_entry_solve, ids, ids_curve, uniform_grid};
use crate::OperatorSpec;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Largest relative Cramer/dense mismatch accepted by `green`.
const GREEN_TOLERANCE: f64 = 1e-8;
/// Largest telescoping residual accepted by `check-identities`.
const IDENTITY_TOLERANCE: f64 = 1e-9;
const IDENTITY_KS: [usize; 4] = [1, 10, 100, 1000];
/// Box used to attach IDS values and gap labels to reported energies.
const LABEL_BOX: usize = 2000;

#[derive(Debug, Parser)]
#[command(
    name = "qpspec",
    version,
    about = "Quasi-periodic Schrödinger operators with decaying perturbations"
)]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Overrides `numerics.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact root; overrides `numerics.out` (default `runs`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Size of the global worker pool; overrides `numerics.threads`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Scan {
    pub config: PathBuf,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub theta_grid: Option<usize>,
    /// Whitespace-separated columns instead of CSV.
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the `[scenario]` of a config and write its artifacts.
    Run { config: PathBuf },
    /// Integrated density of states on an energy grid, with detected gaps.
    #[command(allow_negative_numbers = true)]
    ScanIds {
        #[command(flatten)]
        scan: Scan,
        #[arg(long)]
        box_size: Option<usize>,
    },
    /// Finite-k Lyapunov exponent on an energy grid.
    #[command(allow_negative_numbers = true)]
    ScanLyapunov {
        #[command(flatten)]
        scan: Scan,
        #[arg(long)]
        k: Option<usize>,
    },
    /// One Green's function entry by the determinant formula and by a dense solve.
    #[command(allow_negative_numbers = true)]
    Green {
        config: PathBuf,
        #[arg(long)]
        energy: Option<f64>,
        /// Box `[0, box_size − 1]`.
        #[arg(long)]
        box_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        row: i64,
        /// Defaults to the last site of the box.
        #[arg(long)]
        col: Option<i64>,
    },
    /// Eigenvalues of the perturbed operator in `(e1, e2)` inside a gap.
    #[command(allow_negative_numbers = true)]
    GapCount {
        config: PathBuf,
        #[arg(long)]
        e1: Option<f64>,
        #[arg(long)]
        e2: Option<f64>,
        #[arg(long)]
        horizon: Option<i64>,
    },
    /// Residuals of the four telescoping identities at k = 1, 10, 100, 1000.
    #[command(allow_negative_numbers = true)]
    CheckIdentities {
        config: PathBuf,
        #[arg(long)]
        energy: Option<f64>,
        #[arg(long, default_value_t = 0)]
        site: i64,
    },
    /// Summarize a `report.json`, or compare two of them ignoring timing.
    Report {
        path: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Parse `argv` (including the program name) and run, writing to the given
/// streams. Returns the process exit code.
pub fn main_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_PASS;
        }
    };
    let json = cli.json;
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(Failure(message)) => {
            if json {
                let _ = writeln!(out, "{}", json!({ "error": message }));
            }
            let _ = writeln!(err, "error: {message}");
            EXIT_CONFIG
        }
    }
}

fn load(path: &Path, cli: &Cli, err: &mut dyn Write) -> Result<Resolved, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let mut resolved = parse_config(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    for w in &resolved.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    if let Some(seed) = cli.seed {
        resolved.config.numerics.seed = seed;
    }
    let threads = cli.threads.unwrap_or(resolved.config.numerics.threads);
    if threads > 0 {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(resolved)
}

/// IDS of the unperturbed family at `E` and, for one frequency, its gap
/// label when the value sits on one.
fn locate(op: &OperatorSpec, energy: f64) -> (f64, Option<i64>) {
    let bare = op.potential_only();
    let n = ids(&bare, energy, LABEL_BOX, 1).unwrap_or(f64::NAN);
    let label = match bare.potential.alpha() {
        [alpha] if n.is_finite() && !bare.potential.is_zero() => gap_label(n, *alpha, 30, 1e-3).ok(),
        _ => None,
    };
    (n, label)
}

fn label_value(label: Option<i64>) -> f64 {
    label.map_or(f64::NAN, |k| k as f64)
}

fn emit_table(out: &mut dyn Write, table: &Table, gnuplot: bool) -> std::io::Result<()> {
    if gnuplot {
        writeln!(out, "# {}", table.columns.join(" "))?;
        for row in &table.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            writeln!(out, "{}", cells.join(" "))?;
        }
        Ok(())
    } else {
        write!(out, "{}", table.to_csv())
    }
}

fn energy_range(scan: &Scan, numerics: &Numerics, op: &OperatorSpec) -> (f64, f64, usize) {
    let bound = op.potential_only().norm_bound() + 0.1;
    (
        scan.from.or(numerics.from).unwrap_or(-bound),
        scan.to.or(numerics.to).unwrap_or(bound),
        scan.points.or(numerics.points).unwrap_or(200),
    )
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Run { config } => {
            let resolved = load(config, cli, err)?;
            let scenario = resolved
                .scenario()
                .ok_or_else(|| Failure(format!("{}: no [scenario] section", config.display())))?;
            let mut report = run_scenario(&scenario)?;
            report.notes.extend(resolved.notes.iter().cloned());
            report
                .notes
                .extend(resolved.warnings.iter().map(|w| format!("warning: {w}")));
            let root = cli
                .out
                .clone()
                .or_else(|| resolved.config.numerics.out.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs"));
            let path = report.write_artifacts(&root)?;
            if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", report.summary())?;
                writeln!(out, "report: {}", path.display())?;
            }
            Ok(if report.pass { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::ScanIds { scan, box_size } => {
            let r = load(&scan.config, cli, err)?;
            let n = &r.config.numerics;
            let op = r.operator.potential_only();
            let (lo, hi, points) = energy_range(scan, n, &op);
            let box_size = box_size.or(n.box_size).unwrap_or(LABEL_BOX);
            let theta_grid = scan.theta_grid.or(n.theta_grid).unwrap_or(1);
            let curve = ids_curve(&op, &uniform_grid(lo, hi, points), box_size, theta_grid)?;
            let alpha = match op.potential.alpha() {
                [a] if !op.potential.is_zero() => Some(*a),
                _ => None,
            };
            let label_of = |v: f64| alpha.and_then(|a| gap_label(v, a, 30, 1e-3).ok());
            let tol = 0.5 / (box_size * theta_grid.max(1)) as f64;
            let gaps = find_gaps(&curve, tol, 2.0 * (hi - lo) / points.max(2) as f64);
            let mut table = Table::new("ids", &["energy", "ids", "gap_label"]);
            for (&e, &v) in curve.energies.iter().zip(&curve.values) {
                let inside = gaps.iter().any(|g| g.lower <= e && e <= g.upper);
                table.push(vec![e, v, if inside { label_value(label_of(v)) } else { f64::NAN }]);
            }
            if cli.json {
                let gaps: Vec<Value> = gaps
                    .iter()
                    .map(|g| json!({ "lower": g.lower, "upper": g.upper, "ids": g.ids, "label": label_of(g.ids) }))
                    .collect();
                writeln!(out, "{}", json!({ "table": table, "gaps": gaps, "box_size": box_size }))?;
            } else {
                emit_table(out, &table, scan.gnuplot)?;
                for g in &gaps {
                    writeln!(
                        err,
                        "gap [{:.6}, {:.6}] ids {:.6} label {:?}",
                        g.lower,
                        g.upper,
                        g.ids,
                        label_of(g.ids)
                    )?;
                }
            }
            Ok(EXIT_PASS)
        }
        Command::ScanLyapunov { scan, k } => {
            let r = load(&scan.config, cli, err)?;
            let n = &r.config.numerics;
            let op = r.operator.potential_only();
            let (lo, hi, points) = energy_range(scan, n, &op);
            let k = k.or(n.k).unwrap_or(1000);
            let theta_grid = scan.theta_grid.or(n.theta_grid).unwrap_or(16);
            let mut table = Table::new("lyapunov", &["energy", "lyapunov", "ids", "gap_label"]);
            for e in uniform_grid(lo, hi, points) {
                let l = lyapunov(&op, e, k, theta_grid)?;
                let (v, label) = locate(&op, e);
                table.push(vec![e, l, v, label_value(label)]);
            }
            if cli.json {
                writeln!(out, "{}", json!({ "table": table, "k": k, "theta_grid": theta_grid }))?;
            } else {
                emit_table(out, &table, scan.gnuplot)?;
            }
            Ok(EXIT_PASS)
        }
        Command::Green {
            config,
            energy,
            box_size,
            row,
            col,
        } => {
            let r = load(config, cli, err)?;
            let n = &r.config.numerics;
            let size = box_size.or(n.box_size).unwrap_or(100);
            if size == 0 {
                return Err(Failure("box_size must be positive".into()));
            }
            let energy = energy.or(n.energy).unwrap_or(0.0);
            let col = col.unwrap_or(size as i64 - 1);
            let b = r.operator.build_box(0, size as i64 - 1)?;
            let cramer = green_entry_cramer(&b, energy, *row, col)?;
            let dense = green_entry_solve(&b, energy, *row, col)?;
            let mismatch = (cramer.value - dense.value).abs() / dense.value.abs().max(f64::MIN_POSITIVE);
            let pass = mismatch <= GREEN_TOLERANCE;
            let (v, label) = locate(&r.operator, energy);
            if cli.json {
                writeln!(
                    out,
                    "{}",
                    json!({
                        "energy": energy, "ids": v, "gap_label": label, "box": [0, size - 1], "entry": [row, col],
                        "cramer": cramer.value, "dense": dense.value, "log_magnitude": cramer.log_magnitude,
                        "relative_mismatch": mismatch, "pass": pass,
                    })
                )?;
            } else {
                writeln!(out, "G({row}, {col}) at E = {energy} (ids {v:.6}, label {label:?})")?;
                writeln!(out, "  cramer {:.15e}\n  dense  {:.15e}", cramer.value, dense.value)?;
                writeln!(
                    out,
                    "  relative mismatch {mismatch:.3e} [{}]",
                    if pass { "ok" } else { "FAIL" }
                )?;
            }
            Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::GapCount {
            config,
            e1,
            e2,
            horizon,
        } => {
            let r = load(config, cli, err)?;
            let n = &r.config.numerics;
            let (Some(e1), Some(e2)) = (e1.or(n.e1), e2.or(n.e2)) else {
                return Err(Failure(
                    "gap-count needs --e1 and --e2 (or numerics.e1, numerics.e2)".into(),
                ));
            };
            let horizon = horizon.or(n.horizon).unwrap_or(1000);
            let count = gap_eigenvalue_count(&r.operator, e1, e2, horizon)?;
            let (v1, l1) = locate(&r.operator, e1);
            let (v2, l2) = locate(&r.operator, e2);
            if cli.json {
                writeln!(
                    out,
                    "{}",
                    json!({ "count": count, "ids": [v1, v2], "gap_label": [l1, l2] })
                )?;
            } else {
                writeln!(
                    out,
                    "{} eigenvalue(s) in ({e1}, {e2}); horizon {} gives {}, half horizon {}",
                    count.count, count.horizon, count.count, count.half_horizon_count
                )?;
                writeln!(out, "  ids {v1:.6} .. {v2:.6}, label {l1:?}")?;
            }
            Ok(EXIT_PASS)
        }
        Command::CheckIdentities { config, energy, site } => {
            let r = load(config, cli, err)?;
            let energy = energy.or(r.config.numerics.energy).unwrap_or(0.0);
            let mut table = Table::new(
                "telescoping",
                &["k", "forward_left", "forward_right", "inverse_right", "inverse_left"],
            );
            let mut worst = 0.0f64;
            for k in IDENTITY_KS {
                let res = telescoping_residuals(&r.operator, energy, *site, k);
                worst = worst.max(res.max());
                let mut row = vec![k as f64];
                row.extend(res.as_array());
                table.push(row);
            }
            let pass = worst <= IDENTITY_TOLERANCE;
            if cli.json {
                writeln!(
                    out,
                    "{}",
                    json!({ "energy": energy, "site": site, "table": table, "max": worst, "pass": pass })
                )?;
            } else {
                write!(out, "{}", table.to_csv())?;
                writeln!(out, "max residual {worst:.3e} [{}]", if pass { "ok" } else { "FAIL" })?;
            }
            Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Report { path, compare } => {
            let read = |p: &Path| -> Result<RunReport, Failure> {
                let text = std::fs::read_to_string(p).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Failure(format!("{}: {e}", p.display())))
            };
            let report = read(path)?;
            match compare {
                None => {
                    if cli.json {
                        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
                    } else {
                        write!(out, "{}", report.summary())?;
                    }
                    Ok(if report.pass { EXIT_PASS } else { EXIT_FAIL })
                }
                Some(other) => {
                    let other = read(other)?;
                    let same = report.comparable_json()? == other.comparable_json()?;
                    let differing: Vec<&String> = report
                        .metrics
                        .iter()
                        .filter(|(k, v)| other.metrics.get(*k).is_none_or(|w| w.to_bits() != v.to_bits()))
                        .map(|(k, _)| k)
                        .collect();
                    if cli.json {
                        writeln!(out, "{}", json!({ "identical": same, "differing_metrics": differing }))?;
                    } else if same {
                        writeln!(out, "identical (timing excluded)")?;
                    } else {
                        writeln!(out, "reports differ; metrics: {differing:?}")?;
                    }
                    Ok(if same { EXIT_PASS } else { EXIT_FAIL })
                }
            }
        }
    }
}
