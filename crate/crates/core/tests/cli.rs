use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qpspec"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qpspec-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn schema() -> jsonschema::JSONSchema {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json")).unwrap();
    jsonschema::JSONSchema::options()
        .with_draft(jsonschema::Draft::Draft202012)
        .compile(&serde_json::from_str(&text).unwrap())
        .expect("schema compiles")
}

#[test]
fn appendix_run_passes_and_validates() {
    let out = scratch("appendix");
    let o = run(&[
        "--json",
        "--out",
        out.to_str().unwrap(),
        "run",
        config("appendix.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    let sup = report["assertions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["name"] == "sup_n2_abs_v")
        .unwrap();
    assert!((sup["measured"].as_f64().unwrap() - 8.0 / 3.0).abs() <= 1e-12);
    let validator = schema();
    assert!(validator.is_valid(&report));
    let run_dir = out.join(format!("appendix-{}", &report["config_hash"].as_str().unwrap()[..12]));
    assert_eq!(report["artifacts"].as_array().unwrap().last().unwrap(), "report.json");
    let written: Value = serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert!(validator.is_valid(&written));
}

#[test]
fn schema_rejects_malformed_reports() {
    let validator = schema();
    let report = qpspec::experiments::run_scenario(&qpspec::experiments::Scenario::gap_edge()).unwrap();
    let mut v = serde_json::to_value(&report).unwrap();
    assert!(validator.is_valid(&v));
    v["assertions"][0]["check"] = Value::from("roughly");
    assert!(!validator.is_valid(&v));
    let mut v = serde_json::to_value(&report).unwrap();
    v["surprise"] = Value::from(1);
    assert!(!validator.is_valid(&v));
}

#[test]
fn equal_seeds_give_identical_reports() {
    let a = scratch("seed-a");
    let b = scratch("seed-b");
    for dir in [&a, &b] {
        let o = run(&[
            "--seed",
            "9",
            "--out",
            dir.to_str().unwrap(),
            "run",
            config("ldt.toml").to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let find = |d: &Path| {
        let run_dir = std::fs::read_dir(d).unwrap().next().unwrap().unwrap().path();
        run_dir.join("report.json")
    };
    let (ra, rb) = (find(&a), find(&b));
    assert_eq!(ra.parent().unwrap().file_name(), rb.parent().unwrap().file_name());
    let o = run(&["report", ra.to_str().unwrap(), "--compare", rb.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));

    let c = scratch("seed-c");
    let o = run(&[
        "--seed",
        "10",
        "--out",
        c.to_str().unwrap(),
        "run",
        config("ldt.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["report", ra.to_str().unwrap(), "--compare", find(&c).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_identities_exits_zero() {
    for name in ["amo_gap.toml", "appendix.toml", "localization.toml"] {
        let o = run(&[
            "--json",
            "check-identities",
            config(name).to_str().unwrap(),
            "--energy",
            "0.7",
            "--site",
            "-20",
        ]);
        assert_eq!(o.status.code(), Some(0), "{name}");
        let v = stdout_json(&o);
        assert!(v["max"].as_f64().unwrap() <= 1e-9);
        assert_eq!(v["table"]["rows"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn gap_count_in_spectrum_exits_two() {
    let o = run(&[
        "gap-count",
        config("amo_gap.toml").to_str().unwrap(),
        "--e1",
        "0.0",
        "--e2",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not in a gap"));
    let o = run(&["--json", "gap-count", config("amo_gap.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["count"]["count"], 0);
    assert_eq!(v["ids"][0], 1.0);
}

#[test]
fn green_agrees_with_dense_solve() {
    let o = run(&[
        "--json",
        "green",
        config("amo_gap.toml").to_str().unwrap(),
        "--energy",
        "0.3",
        "--box-size",
        "150",
        "--row",
        "3",
        "--col",
        "140",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert!(v["relative_mismatch"].as_f64().unwrap() <= 1e-8);
    assert!(v["ids"].as_f64().unwrap() > 0.0);
}

#[test]
fn scans_carry_ids_and_labels() {
    let o = run(&[
        "scan-ids",
        config("amo_gap.toml").to_str().unwrap(),
        "--points",
        "60",
        "--box-size",
        "1000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("energy,ids,gap_label"));
    assert_eq!(text.lines().count(), 61);
    assert!(String::from_utf8_lossy(&o.stderr).contains("label Some(1)"));

    let o = run(&[
        "--json",
        "scan-lyapunov",
        config("amo_gap.toml").to_str().unwrap(),
        "--points",
        "3",
        "--k",
        "2000",
        "--theta-grid",
        "8",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(
        v["table"]["columns"],
        serde_json::json!(["energy", "lyapunov", "ids", "gap_label"])
    );
    let mid = &v["table"]["rows"][1];
    assert!((mid[1].as_f64().unwrap() - 3f64.ln()).abs() < 0.05);

    let o = run(&[
        "scan-ids",
        config("amo_gap.toml").to_str().unwrap(),
        "--points",
        "5",
        "--gnuplot",
    ]);
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .starts_with("# energy ids gap_label"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = scratch("bad");
    let typo = dir.join("typo.toml");
    std::fs::write(&typo, "[potential]\nkind = \"zero\"\n\n[numerics]\nsed = 3\n").unwrap();
    let o = run(&["check-identities", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("sed") && msg.contains("line 5"), "{msg}");

    let o = run(&["run", config("amo_gap.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "no scenario section");

    let o = run(&["run", dir.join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rational_frequency_warns() {
    let dir = scratch("rational");
    let p = dir.join("rational.toml");
    std::fs::write(
        &p,
        "[potential]\nkind = \"almost_mathieu\"\nlambda = 1.0\nalpha = \"1/3\"\n",
    )
    .unwrap();
    let o = run(&["check-identities", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rational"));
}
