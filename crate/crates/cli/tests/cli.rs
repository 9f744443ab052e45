use std::path::Path;
use std::process::{Command, Output};

use override_lab::experiment::scenarios::canonical_source;
use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_override-lab"))
        .args(args)
        .env_remove("OVERRIDE_LAB_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(scenario: &str, out: &Path) {
    let o = lab(&["simulate", "--scenario", scenario, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--dataset", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lab(&args)
}

#[test]
fn missing_seed_is_a_validation_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = canonical_source("fig1")
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("seed"))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = dir.path().join("noseed.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = lab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn simulate_twice_gives_identical_digests() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate("fig1", &a);
    simulate("fig1", &b);
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    let names: Vec<&str> = ma["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    for f in ["dataset.csv", "ground_truth.json", "clinicians.csv", "config.toml"] {
        assert!(names.contains(&f), "{f} missing from manifest");
    }
    let clinicians = json(&a.join("ground_truth.json"))["clinicians"].as_array().unwrap().len();
    assert_eq!(clinicians, 50);
}

#[test]
fn manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    simulate("stacking", dir.path());
    let m = json(&dir.path().join("manifest.json"));
    for f in m["outputs"].as_array().unwrap() {
        let bytes = std::fs::read(dir.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(
            f["sha256"].as_str().unwrap(),
            override_lab::experiment::manifest::sha256_hex(&bytes)
        );
    }
}

#[test]
fn zero_rounds_keeps_the_cold_start() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate("fig1", &data);
    let out = dir.path().join("train");
    let o = train(&data, &out, &["--rounds", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["status"], "not_run");
    assert_eq!(s["iterations"], 0);
    assert!(s["anchor"].is_null());
    assert!(s["theta"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
}

#[test]
fn naive_and_kappa_weighting_disagree_on_the_margin_sign() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate("fig1", &data);
    let margin = |weighting: &str| {
        let out = dir.path().join(weighting);
        let o = train(&data, &out, &["--weighting", weighting]);
        // The suppression-biased naive model may also fail the outcome anchor.
        assert!(matches!(o.status.code(), Some(0 | 3)), "{}", stderr(&o));
        let s = json(&out.join("summary.json"));
        s["margins"]
            .as_array()
            .unwrap()
            .iter()
            .find(|m| m["first"] == "sglt2i" && m["second"] == "referral")
            .unwrap()["margin"]
            .as_f64()
            .unwrap()
    };
    let (naive, kappa) = (margin("naive"), margin("kappa"));
    assert!(naive < 0.0 && kappa > 0.0, "naive {naive}, kappa {kappa}");
}

#[test]
fn amplification_anchor_failure_exits_three_and_records_reinit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate("amplification", &data);
    let out = dir.path().join("train");
    let o = train(&data, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l.ends_with(",reinit")), "{trace}");
    assert_eq!(json(&out.join("summary.json"))["reinitialized"], true);
}

#[test]
fn empty_dataset_audit_reports_no_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.csv");
    std::fs::write(&data, "").unwrap();
    let out = dir.path().join("audit");
    let o = lab(&[
        "audit",
        "--scenario",
        "fig1",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("no data"));
    let report = json(&out.join("monitor_report.json"));
    assert!(report["note"].as_str().unwrap().contains("no data"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn audit_without_outcome_columns_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate("fig1", &data);
    let text = std::fs::read_to_string(data.join("dataset.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !header[i].starts_with("outcome_"))
        .collect();
    let mut w = csv::Writer::from_path(dir.path().join("stripped.csv")).unwrap();
    w.write_record(keep.iter().map(|&i| &header[i])).unwrap();
    for r in rows.records().take(50) {
        let r = r.unwrap();
        w.write_record(keep.iter().map(|&i| &r[i])).unwrap();
    }
    w.flush().unwrap();
    let o = lab(&[
        "audit",
        "--scenario",
        "fig1",
        "--dataset",
        dir.path().join("stripped.csv").to_str().unwrap(),
        "--out",
        dir.path().join("audit").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outcome"), "{}", stderr(&o));
}

#[test]
fn flywheel_audit_writes_gap_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate("flywheel", &data);
    let out = dir.path().join("audit");
    let o = lab(&["audit", "--dataset", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let gaps = std::fs::read_to_string(out.join("gaps.csv")).unwrap();
    assert_eq!(gaps.lines().count(), 1 + 4, "{gaps}");
    assert_eq!(json(&out.join("monitor_report.json"))["kappa_source"], "ground_truth_initial");
}

#[test]
fn unknown_scenario_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = lab(&["reproduce", "--scenario", "no_such_thing", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_thing"));
    let o = lab(&["simulate", "--scenario", "no_such_thing", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_override-lab"))
        .args(["simulate", "--scenario", "stacking"])
        .env("OVERRIDE_LAB_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("dataset.csv").exists());
}

#[test]
fn reproduce_writes_a_passing_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["reproduce", "--scenario", "fig1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("fig1/verdict.json"));
    assert_eq!(v["pass"], true);
}
