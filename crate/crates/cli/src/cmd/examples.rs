use std::time::Instant;

use modelexp::suite::{self, Criterion};
use serde_json::json;

use crate::artifact::{csv_row, num, Artifacts};
use crate::config::RunConfig;
use crate::Failure;

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else {
        format!("{x:.6}")
    }
}

pub fn table(criteria: &[Criterion]) -> String {
    let mut s = String::new();
    for c in criteria {
        s += &format!("[{}] {} {}\n", if c.pass() { "PASS" } else { "FAIL" }, c.id, c.title);
        if let Some(e) = &c.error {
            s += &format!("    error: {e}\n");
        }
        for k in &c.checks {
            let mark = match (k.pass, k.informational) {
                (_, true) => "info",
                (true, false) => "ok",
                (false, false) => "FAIL",
            };
            s += &format!(
                "    {mark:<4}  {:<58}  ref {:>12}  est {:>12}  {}\n",
                k.name,
                fmt(k.reference),
                fmt(k.estimate),
                k.tolerance
            );
        }
    }
    let failed: Vec<String> = criteria.iter().filter(|c| !c.pass()).map(|c| c.id.to_string()).collect();
    s += &if failed.is_empty() {
        format!("all {} criteria pass\n", criteria.len())
    } else {
        format!("{} of {} criteria fail: {}\n", failed.len(), criteria.len(), failed.join(", "))
    };
    s
}

pub fn run(cfg: &RunConfig, only: Option<&str>) -> Result<(), Failure> {
    let mut ids = Vec::new();
    for part in only.unwrap_or("").split(',').map(str::trim).filter(|p| !p.is_empty()) {
        ids.extend(suite::select(Some(part))?);
    }
    if ids.is_empty() {
        ids = suite::select(None)?;
    }
    ids.sort_unstable();
    ids.dedup();

    let mut criteria = Vec::new();
    for id in ids {
        let t = Instant::now();
        let c = suite::run(id, cfg.seed);
        // timing goes to stderr only so the artifacts stay reproducible
        eprintln!("criterion {id}: {} in {:.1}s", if c.pass() { "pass" } else { "fail" }, t.elapsed().as_secs_f64());
        criteria.push(c);
    }

    let text = table(&criteria);
    print!("{text}");
    let mut out = Artifacts::new(cfg)?;
    out.txt("examples", &text)?;
    let mut csv = String::from("criterion,check,reference,estimate,tolerance,pass,informational\n");
    for c in &criteria {
        for k in &c.checks {
            csv += &csv_row(&[
                c.id.to_string(),
                k.name.clone(),
                k.reference.to_string(),
                k.estimate.to_string(),
                k.tolerance.clone(),
                k.pass.to_string(),
                k.informational.to_string(),
            ]);
        }
    }
    out.csv("examples", &csv)?;
    let body: Vec<_> = criteria
        .iter()
        .map(|c| {
            json!({
                "id": c.id,
                "title": c.title,
                "pass": c.pass(),
                "error": c.error,
                "checks": c.checks.iter().map(|k| json!({
                    "name": k.name,
                    "reference": num(k.reference),
                    "estimate": num(k.estimate),
                    "tolerance": k.tolerance,
                    "pass": k.pass,
                    "informational": k.informational,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    out.json("examples", json!({ "criteria": body }))?;

    let failed = criteria.iter().filter(|c| !c.pass()).count();
    if failed > 0 {
        return Err(Failure::checks(format!("{failed} criteria failed")));
    }
    Ok(())
}
