#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modelexp"))
}

pub fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

pub fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

/// One cheap invocation of every subcommand.
pub const COMMANDS: &[(&str, &[&str])] = &[
    ("examples", &["examples", "--only", "1,6"]),
    ("diagnose", &["diagnose", "--model", "normal-location", "--y", "0.3", "--budget", "quick"]),
    ("diagnose-t", &["diagnose", "--model", "student-t-outlier", "--y=-10,10", "--budget", "quick"]),
    ("expand", &["expand-compare", "--pair", "simple-reg-2obs", "--budget", "quick"]),
    ("ppc", &["ppc", "--model", "student-t-outlier", "--budget", "quick"]),
    ("bootstrap", &["bootstrap", "--generate", "--budget", "quick,boot_r=5,boot_s=300"]),
];

/// Runs each command twice into separate directories; returns a mismatch
/// description per differing command.
pub fn determinism_mismatches() -> Vec<String> {
    let mut bad = Vec::new();
    for (name, args) in COMMANDS {
        let (a, b) = (scratch(&format!("det-{name}-a")), scratch(&format!("det-{name}-b")));
        let (ra, rb) = (run(args, &a), run(args, &b));
        if ra.status.code() != rb.status.code() || ra.stdout != rb.stdout {
            bad.push(format!("{name}: exit status or stdout differ"));
            continue;
        }
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        if sa.is_empty() {
            bad.push(format!("{name}: no files written (exit {:?})", ra.status.code()));
        } else if sa.keys().ne(sb.keys()) {
            bad.push(format!("{name}: file sets differ"));
        } else {
            for (k, v) in &sa {
                if sb[k] != *v {
                    bad.push(format!("{name}: {k} differs"));
                }
            }
        }
    }
    bad
}
