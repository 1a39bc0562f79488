//! Output files. Every artifact carries the config hash, seed and artifact
//! version, and nothing time- or host-dependent, so reruns are
//! byte-identical.

use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};

use crate::config::{Format, RunConfig, ARTIFACT_VERSION};
use crate::svg::Svg;
use crate::Failure;

pub struct Artifacts<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    hash: String,
    pub written: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, Failure> {
        let dir = cfg.out_dir();
        fs::create_dir_all(&dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
        let mut a = Self { cfg, hash: cfg.hash(), dir, written: Vec::new() };
        a.put("config.json", pretty(&json!({ "meta": a.meta(), "config": cfg.to_json() })))?;
        Ok(a)
    }

    pub fn meta(&self) -> Value {
        json!({
            "artifact_version": ARTIFACT_VERSION,
            "config_hash": self.hash,
            "seed": self.cfg.seed,
            "command": self.cfg.command,
        })
    }

    fn put(&mut self, name: &str, body: String) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn header(&self, comment: &str) -> String {
        format!("{comment} modelexp artifact v{ARTIFACT_VERSION} config={} seed={}\n", self.hash, self.cfg.seed)
    }

    pub fn json(&mut self, name: &str, result: Value) -> Result<(), Failure> {
        if !self.cfg.wants(Format::Json) {
            return Ok(());
        }
        let body = pretty(&json!({ "meta": self.meta(), "result": result }));
        self.put(&format!("{name}.json"), body)
    }

    /// `body` must start with its header row.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        if !self.cfg.wants(Format::Csv) {
            return Ok(());
        }
        let body = self.header("#") + body;
        self.put(&format!("{name}.csv"), body)
    }

    pub fn txt(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        if !self.cfg.wants(Format::Txt) {
            return Ok(());
        }
        let body = self.header("#") + body;
        self.put(&format!("{name}.txt"), body)
    }

    pub fn svg(&mut self, name: &str, svg: &Svg) -> Result<(), Failure> {
        if !self.cfg.wants(Format::Svg) {
            return Ok(());
        }
        let tag = self.header("").trim().to_string();
        self.put(&format!("{name}.svg"), svg.render(&tag))
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

/// Non-finite floats become strings so they survive JSON.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn csv_row(fields: &[String]) -> String {
    let mut s = fields
        .iter()
        .map(|f| if f.contains([',', '"', '\n']) { format!("\"{}\"", f.replace('"', "\"\"")) } else { f.clone() })
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_row(&["a".into(), "b,c".into(), "say \"x\"".into()]), "a,\"b,c\",\"say \"\"x\"\"\"\n");
    }

    #[test]
    fn non_finite_numbers() {
        assert_eq!(num(1.5), json!(1.5));
        assert_eq!(num(f64::NAN), json!("NaN"));
        assert_eq!(num(f64::INFINITY), json!("inf"));
    }
}
