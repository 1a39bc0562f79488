mod common;

use common::{bin, run, scratch, snapshot};
use serde_json::Value;

fn code(args: &[&str]) -> Option<i32> {
    bin().args(args).output().unwrap().status.code()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["diagnose"]), Some(2));
    assert_eq!(code(&["diagnose", "--model", "nope"]), Some(2));
    assert_eq!(code(&["diagnose", "--model", "normal-location", "--pair", "simple-reg-2obs"]), Some(2));
    assert_eq!(code(&["diagnose", "--model", "simple-reg-2obs"]), Some(2));
    assert_eq!(code(&["diagnose", "--model", "normal-location", "--budget", "lavish"]), Some(2));
    assert_eq!(code(&["diagnose", "--model", "normal-location", "--hp", "sigma_p=-1"]), Some(2));
    assert_eq!(code(&["ppc", "--model", "normal-location", "--stat", "bogus"]), Some(2));
    assert_eq!(code(&["ppc", "--model", "normal-location", "--projection", "param:9"]), Some(2));
    assert_eq!(code(&["bootstrap"]), Some(2));
    assert_eq!(code(&["expand-compare", "--model", "normal-location"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
}

#[test]
fn successful_run_writes_tagged_artifacts() {
    let out = scratch("tagged");
    let r = run(&["diagnose", "--model", "normal-location", "--y", "0.5", "--budget", "quick", "--seed", "7"], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let files = snapshot(&out);
    assert!(files.contains_key("config.json"));
    let cfg: Value = serde_json::from_slice(&files["config.json"]).unwrap();
    assert_eq!(cfg["config"]["seed"], 7);
    for (name, body) in &files {
        let text = String::from_utf8_lossy(body);
        if name.ends_with(".csv") || name.ends_with(".txt") {
            assert!(text.starts_with("# modelexp artifact v1 config="), "{name}");
            assert!(text.lines().next().unwrap().ends_with("seed=7"), "{name}");
        }
        if name.ends_with(".json") && name != "config.json" {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["meta"]["seed"], 7, "{name}");
        }
    }
}

#[test]
fn format_flag_limits_outputs() {
    let out = scratch("only-json");
    let r = run(&["diagnose", "--model", "flat", "--budget", "quick", "--format", "json"], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(snapshot(&out).keys().all(|k| k.ends_with(".json")));
}

fn scatter_ps(path: &std::path::Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn constant_statistic_gives_flat_scatter_at_one() {
    let out = scratch("ppc-constant");
    let r = run(&["ppc", "--model", "normal-location", "--y", "0.2", "--stat", "constant", "--budget", "quick"], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let ps = scatter_ps(&out.join("scatter-constant-param_0.csv"));
    assert!(!ps.is_empty());
    assert!(ps.iter().all(|&p| p == 1.0));
    assert!(out.join("scatter-constant-param_0.svg").exists());
}

#[test]
fn student_t_check_reports_both_statistics() {
    let out = scratch("ppc-student");
    let r = run(&["ppc", "--model", "student-t-outlier", "--budget", "quick", "--format", "json"], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(out.join("ppc.json")).unwrap()).unwrap();
    let stats = v["result"].as_array().unwrap();
    assert_eq!(stats.len(), 2);
    for s in stats {
        let p = s["marginal_p"].as_f64().unwrap();
        assert!(p > 0.05 && p < 0.4, "{p}");
    }
}

#[test]
fn grouped_between_group_check_tracks_group_scale() {
    let out = scratch("ppc-grouped");
    let r = run(
        &["ppc", "--model", "grouped-expanded", "--stat", "group-mean-sd", "--projection", "exp:1", "--budget", "quick", "--format", "json"],
        &out,
    );
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(out.join("ppc.json")).unwrap()).unwrap();
    let rho = v["result"][0]["projections"][0]["rank_correlation"].as_f64().unwrap();
    assert!(rho > 0.0, "{rho}");
}

#[test]
fn bootstrap_rejects_ungrouped_data() {
    let dir = scratch("ungrouped");
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("y.csv");
    std::fs::write(&f, "group,obs_index,value\n0,0,1.0\n0,1,2.0\n").unwrap();
    assert_eq!(code(&["bootstrap", "--data", f.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]), Some(2));
}

#[test]
fn examples_exit_code_follows_verdict() {
    let out = scratch("examples-pass");
    let r = run(&["examples", "--only", "1"], &out);
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("PASS"));
    assert!(out.join("examples.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (scratch("rerun-a"), scratch("rerun-b"));
    let args = ["expand-compare", "--pair", "simple-reg-2obs", "--budget", "quick", "--seed", "3"];
    run(&args, &a);
    run(&args, &b);
    assert_eq!(snapshot(&a), snapshot(&b));
    // a different seed changes the Monte Carlo parts
    let c = scratch("rerun-c");
    run(&["expand-compare", "--pair", "simple-reg-2obs", "--budget", "quick", "--seed", "4"], &c);
    assert_ne!(snapshot(&a).get("terms.csv"), snapshot(&c).get("terms.csv"));
}
