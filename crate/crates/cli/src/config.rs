use std::collections::BTreeMap;
use std::path::PathBuf;

use modelexp::fisher::FisherBudget;
use modelexp::info::{CmiConfig, PsdConfig};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const ARTIFACT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Json,
    Csv,
    Svg,
    Txt,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Svg => "svg",
            Format::Txt => "txt",
        }
    }
}

pub fn parse_formats(s: &str) -> Result<Vec<Format>, Failure> {
    let mut out = Vec::new();
    for f in s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
        out.push(match f {
            "json" => Format::Json,
            "csv" => Format::Csv,
            "svg" => Format::Svg,
            "txt" => Format::Txt,
            _ => return Err(Failure::usage(format!("unknown format `{f}` (json, csv, svg, txt)"))),
        });
    }
    if out.is_empty() {
        return Err(Failure::usage("--format needs at least one of json, csv, svg, txt"));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Monte Carlo sizes shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub fisher: FisherBudget,
    pub cmi: CmiConfig,
    pub psd: PsdConfig,
    /// Replicates per draw for conditional checks.
    pub ppc_inner: usize,
    /// Posterior draws for samplers that take a size.
    pub draws: usize,
    /// Prior-predictive datasets for the cmi trace term.
    pub trace_n_y: usize,
    pub boot_r: usize,
    pub boot_s: usize,
}

impl Budget {
    fn preset(name: &str) -> Option<Self> {
        let d = Budget {
            fisher: FisherBudget::default(),
            cmi: CmiConfig::default(),
            psd: PsdConfig::default(),
            ppc_inner: 500,
            draws: 2000,
            trace_n_y: 40,
            boot_r: 500,
            boot_s: 2000,
        };
        Some(match name {
            "default" => d,
            "quick" => Budget {
                fisher: FisherBudget { n_prior: 50, n_mc: 4, n_lambda: 200 },
                cmi: CmiConfig { n_y: 50, s_outer: 100, n_draws: 500, ..d.cmi },
                psd: PsdConfig { s_outer: 200, n_inner: 2, n_rep: None },
                ppc_inner: 100,
                draws: 500,
                trace_n_y: 20,
                boot_r: 20,
                boot_s: 1000,
            },
            "thorough" => Budget {
                fisher: FisherBudget { n_prior: 800, n_mc: 32, n_lambda: 800 },
                cmi: CmiConfig { n_y: 500, s_outer: 500, n_draws: 2000, ..d.cmi },
                psd: PsdConfig { s_outer: 1000, n_inner: 8, n_rep: None },
                ppc_inner: 1000,
                draws: 5000,
                trace_n_y: 100,
                boot_r: 500,
                boot_s: 4000,
            },
            _ => return None,
        })
    }

    /// `PRESET` or `[PRESET,]key=value,...`; keys override the preset.
    pub fn parse(s: &str) -> Result<Self, Failure> {
        let mut parts = s.split(',').map(str::trim).filter(|p| !p.is_empty()).peekable();
        let mut b = match parts.peek() {
            Some(p) if !p.contains('=') => {
                let name = parts.next().unwrap_or_default();
                Self::preset(name)
                    .ok_or_else(|| Failure::usage(format!("unknown budget preset `{name}` (quick, default, thorough)")))?
            }
            _ => Self::preset("default").expect("default preset"),
        };
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| Failure::usage(format!("budget entry `{p}` is not key=value")))?;
            let v: usize = v
                .parse()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Failure::usage(format!("budget `{k}` needs a positive integer, got `{v}`")))?;
            match k {
                "n_prior" => b.fisher.n_prior = v,
                "n_mc" => b.fisher.n_mc = v,
                "n_lambda" => b.fisher.n_lambda = v,
                "n_y" => b.cmi.n_y = v,
                "s_outer" => b.cmi.s_outer = v,
                "n_inner" => b.cmi.n_inner = v,
                "n_draws" => b.cmi.n_draws = v,
                "psd_outer" => b.psd.s_outer = v,
                "psd_inner" => b.psd.n_inner = v,
                "ppc_inner" => b.ppc_inner = v,
                "draws" => b.draws = v,
                "trace_n_y" => b.trace_n_y = v,
                "boot_r" => b.boot_r = v,
                "boot_s" => b.boot_s = v,
                _ => return Err(Failure::usage(format!("unknown budget key `{k}`"))),
            }
        }
        Ok(b)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n_prior": self.fisher.n_prior,
            "n_mc": self.fisher.n_mc,
            "n_lambda": self.fisher.n_lambda,
            "n_y": self.cmi.n_y,
            "s_outer": self.cmi.s_outer,
            "n_inner": self.cmi.n_inner,
            "n_draws": self.cmi.n_draws,
            "psd_outer": self.psd.s_outer,
            "psd_inner": self.psd.n_inner,
            "ppc_inner": self.ppc_inner,
            "draws": self.draws,
            "trace_n_y": self.trace_n_y,
            "boot_r": self.boot_r,
            "boot_s": self.boot_s,
        })
    }
}

/// Everything that determines a command's output. `--out` is excluded so
/// the same run written to two places hashes the same.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: String,
    pub model: Option<String>,
    pub pair: Option<String>,
    pub hp: BTreeMap<String, f64>,
    pub seed: u64,
    pub budget: Budget,
    pub formats: Vec<Format>,
    /// Command-specific options, already normalized.
    pub options: BTreeMap<String, Value>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "model": self.model,
            "pair": self.pair,
            "hp": self.hp,
            "seed": self.seed,
            "budget": self.budget.to_json(),
            "formats": self.formats.iter().map(|f| f.name()).collect::<Vec<_>>(),
            "options": self.options,
            "artifact_version": ARTIFACT_VERSION,
        })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out").join(format!("{}-{}", self.command, self.hash())))
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig {
            command: "diagnose".into(),
            model: Some("normal-location".into()),
            pair: None,
            hp: BTreeMap::new(),
            seed: 7,
            budget: Budget::parse("quick").unwrap(),
            formats: parse_formats("json,csv").unwrap(),
            options: BTreeMap::new(),
            out: None,
        }
    }

    #[test]
    fn hash_tracks_content_not_out_dir() {
        let a = cfg();
        let mut b = cfg();
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
        assert!(a.out_dir().ends_with(format!("diagnose-{}", a.hash())));
    }

    #[test]
    fn budget_overrides() {
        let b = Budget::parse("quick,n_mc=9,draws=77").unwrap();
        assert_eq!(b.fisher.n_mc, 9);
        assert_eq!(b.draws, 77);
        assert_eq!(b.fisher.n_prior, 50);
        assert_eq!(Budget::parse("n_prior=3").unwrap().fisher.n_prior, 3);
        assert!(Budget::parse("huge").is_err());
        assert!(Budget::parse("n_mc=0").is_err());
        assert!(Budget::parse("bogus=1").is_err());
    }

    #[test]
    fn formats_are_normalized() {
        assert_eq!(parse_formats("svg,json,svg").unwrap(), vec![Format::Json, Format::Svg]);
        assert!(parse_formats("pdf").is_err());
        assert!(parse_formats("").is_err());
    }
}
