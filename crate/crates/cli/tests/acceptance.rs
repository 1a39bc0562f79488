//! Acceptance gate: one line per criterion, then the checks behind it.
//! Runs without the libtest harness so the lines always show.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use modelexp::suite::{self, Criterion};

const SEED: u64 = 20240601;

fn line(c: &Criterion, secs: f64) -> String {
    let verdict = if c.pass() { "PASS" } else { "FAIL" };
    format!("criterion {:>2} {verdict} {} ({secs:.1}s)", c.id, c.title)
}

fn main() -> ExitCode {
    let mut failed = Vec::new();
    let mut details = String::new();
    for id in 1..=9u8 {
        let t = Instant::now();
        let c = suite::run(id, SEED);
        println!("{}", line(&c, t.elapsed().as_secs_f64()));
        if let Some(e) = &c.error {
            details += &format!("  [{id}] error: {e}\n");
        }
        for ch in &c.checks {
            let tag = match (ch.informational, ch.pass) {
                (true, _) => "info",
                (false, true) => "ok",
                (false, false) => "FAIL",
            };
            details += &format!(
                "  [{id}] {tag:<4} {}: estimate {:.6} reference {:.6} ({})\n",
                ch.name, ch.estimate, ch.reference, ch.tolerance
            );
        }
        if !c.pass() {
            failed.push(id);
        }
    }

    let t = Instant::now();
    let bad = common::determinism_mismatches();
    let verdict = if bad.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "criterion 10 {verdict} every command re-run with identical flags and seed gives byte-identical files ({:.1}s)",
        t.elapsed().as_secs_f64()
    );
    for b in &bad {
        details += &format!("  [10] FAIL {b}\n");
    }
    if !bad.is_empty() {
        failed.push(10);
    }

    print!("{details}");
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
