use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfair_core::domains::{CapInstance, TapInstance};
use tempfair_core::experiments::{running_cap, running_history};
use tempfair_core::fairness::entity_names;

fn tempfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempfair"))
        .args(args)
        .env_remove("TEMPFAIR_SEED")
        .env_remove("TEMPFAIR_OUT_DIR")
        .env_remove("TEMPFAIR_THREADS")
        .env_remove("TEMPFAIR_TAP_NODE_LIMIT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("report is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Running example instance and its four-semester history.
fn running_files(dir: &Path) -> (String, String) {
    let inst = dir.join("running.cap");
    std::fs::write(&inst, running_cap(1).to_text()).unwrap();
    let hist = dir.join("history.json");
    std::fs::write(&hist, serde_json::to_string(&running_history()).unwrap()).unwrap();
    (s(&inst).to_string(), s(&hist).to_string())
}

#[test]
fn solve_running_example_hfop_picks_the_unfair_step() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, hist) = running_files(dir.path());
    let r = json(&tempfair(&["solve", &inst, "--history", &hist, "--formulation", "hfop", "--beta", "100"]));
    assert_eq!(r["per_step_utilities"][0]["values"], serde_json::json!([0.0, 3.0]));
    assert_eq!(r["formulation"]["kind"], "Hfop");
    assert_eq!(r["diagnostics"]["proven_optimal"], true);
    let fop = json(&tempfair(&["solve", &inst, "--history", &hist, "--formulation", "fop", "--beta", "100"]));
    assert_eq!(fop["per_step_utilities"][0]["values"], serde_json::json!([1.5, 1.5]));
}

#[test]
fn op_ignores_beta() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, hist) = running_files(dir.path());
    let a = json(&tempfair(&["solve", &inst, "--history", &hist, "--formulation", "op", "--beta", "0"]));
    let b = json(&tempfair(&["solve", &inst, "--history", &hist, "--formulation", "op", "--beta", "7"]));
    for key in ["plan", "total", "quality_term", "fairness_term", "formulation"] {
        assert_eq!(a[key], b[key], "{key}");
    }
    assert_eq!(b["formulation"]["beta"], 0.0);
}

#[test]
fn solve_appends_to_a_log_and_reads_it_back() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, hist) = running_files(dir.path());
    let log = dir.path().join("run.log");
    let _ = json(&tempfair(&["solve", &inst, "--history", &hist, "--append-log", s(&log)]));
    // the log holds one balanced-looking step; the next solve uses it as history
    let r = json(&tempfair(&["solve", &inst, "--history", s(&log), "--append-log", s(&log)]));
    assert!(r["total"].is_number());
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].contains("\"timestep\":1"));
}

#[test]
fn solve_reports_to_file_and_dumps_lp() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("t.tap");
    let gen = tempfair(&["gen", "tap", "--n", "6", "--seed", "3", "--out", s(&inst)]);
    assert_eq!(code(&gen), 0);
    let out = dir.path().join("report.json");
    let lp = dir.path().join("model.lp");
    let o = tempfair(&["solve", s(&inst), "--formulation", "fop", "--beta", "2", "--out", s(&out), "--lp-dump", s(&lp)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["diagnostics"]["backend"], "milp");
    let model = std::fs::read_to_string(&lp).unwrap();
    assert!(model.starts_with("Minimize") && model.contains("Subject To") && model.trim_end().ends_with("End"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tempfair(&["solve", s(&dir.path().join("missing.cap"))])), 2);
    assert_eq!(code(&tempfair(&["frobnicate"])), 2);
    assert_eq!(code(&tempfair(&["--help"])), 0);
    let (inst, _) = running_files(dir.path());
    assert_eq!(code(&tempfair(&["solve", &inst, "--formulation", "nope"])), 2);
    assert_eq!(code(&tempfair(&["solve", &inst, "--formulation", "hfop", "--horizon", "2"])), 2);
    assert_eq!(code(&tempfair(&["solve", &inst, "--beta", "-1"])), 2);

    // no lecturer is available in the only semester
    let blocked = CapInstance::new(entity_names("l", 2), entity_names("c", 1), vec![vec![1.0]; 2], 1.0, vec![vec![0, 1]]).unwrap();
    let path = dir.path().join("blocked.cap");
    std::fs::write(&path, blocked.to_text()).unwrap();
    let o = tempfair(&["solve", s(&path)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_is_deterministic_and_follows_the_recipe() {
    let a = tempfair(&["gen", "tap", "--n", "40", "--seed", "7"]);
    let b = tempfair(&["gen", "tap", "--n", "40", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let inst = TapInstance::parse(std::str::from_utf8(&a.stdout).unwrap()).unwrap();
    for row in &inst.cost {
        let mut r = row.clone();
        r.sort_by(f64::total_cmp);
        assert_eq!(&r[..4], &[5.0, 20.0, 20.0, 20.0]);
        assert!(r[4..].iter().all(|&c| c == 30.0));
    }
    assert_ne!(a.stdout, tempfair(&["gen", "tap", "--n", "40", "--seed", "8"]).stdout);
    assert_eq!(code(&tempfair(&["gen", "vrp", "--grid", "3", "--points", "9"])), 2);
    assert_eq!(code(&tempfair(&["gen", "vrp", "--grid", "3", "--points", "8", "--vehicles", "2"])), 0);
}

#[test]
fn gen_writes_history_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.json");
    let inst = dir.path().join("v.vrp");
    let o = tempfair(&[
        "gen", "vrp", "--grid", "7", "--points", "6", "--vehicles", "2", "--history-steps", "2", "--history-out", s(&hist),
        "--out", s(&inst),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let h: Value = serde_json::from_str(&std::fs::read_to_string(&hist).unwrap()).unwrap();
    assert_eq!(h["steps"].as_array().unwrap().len(), 2);
    let r = json(&tempfair(&["solve", s(&inst), "--history", s(&hist), "--backend", "enumeration"]));
    assert_eq!(r["per_step_utilities"][0]["values"].as_array().unwrap().len(), 2);

    let nsp_dir = dir.path().join("nsp");
    let o = tempfair(&["gen", "nsp", "--histories-out", s(&nsp_dir), "--out", s(&dir.path().join("n.nsp"))]);
    assert_eq!(code(&o), 0);
    assert!(nsp_dir.join("H1.json").exists() && nsp_dir.join("H2.json").exists());
}

#[test]
fn reproduce_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&tempfair(&["reproduce", "forecast", "--out-dir", s(&a)])), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_tempfair"))
        .args(["reproduce", "forecast"])
        .env("TEMPFAIR_OUT_DIR", &b)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let csv_a = std::fs::read_to_string(a.join("forecast.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(b.join("forecast.csv")).unwrap());
    assert!(csv_a.starts_with("formulation,step_loads,sum_Q,F\n"));
    assert!(csv_a.contains("\nmsdhfop,2;0 2;0 0;2 0;2,12,1\n"));
    assert_eq!(code(&tempfair(&["reproduce", "no-such-table", "--out-dir", s(&a)])), 2);
}

#[test]
fn bench_rows_and_errors() {
    let o = tempfair(&["bench", "vrp", "--repeat", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "formulation,mean_time_s,median_time_s,repeats");
    let kinds: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds, ["op", "fop", "hfop"]);
    assert_eq!(code(&tempfair(&["bench", "vrp", "--repeat", "0"])), 2);
    assert_eq!(code(&tempfair(&["bench", "nsp"])), 2);
}
