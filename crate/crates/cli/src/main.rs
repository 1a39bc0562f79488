mod artifact;
mod cmd;
mod config;
mod svg;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use modelexp::model::{builtin, parse_hp, Builtin, DataSet};
use modelexp::Error;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use config::{parse_formats, Budget, RunConfig};

/// Exit status with a message; 1 check failure, 2 usage, 3 numerical or
/// capability.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
    pub hint: Option<String>,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into(), hint: None }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { code: 3, msg: msg.into(), hint: None }
    }

    pub fn checks(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into(), hint: None }
    }
}

pub fn hint(e: &Error) -> Option<&'static str> {
    Some(match e {
        Error::Unsupported(_) => "the model lacks a closed form this quantity needs; pick a linear-Gaussian builtin or a quantity with a Monte Carlo route",
        Error::Reliability(_) => "raise the Monte Carlo budget (--budget thorough, or e.g. --budget n_mc=32)",
        Error::Numerical(_) => "raise the budget or check the hyperparameters for extreme scales",
        Error::Degenerate(_) => "the data or prior leave nothing to estimate; check the inputs",
        Error::UnknownModel(_) => "list builtins with `modelexp diagnose --help`",
        Error::Hyperparam { .. } => "pass hyperparameters as --hp key=value,...",
        _ => return None,
    })
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownModel(_) | Error::Hyperparam { .. } | Error::Domain(_) | Error::Structural(_) => 2,
            _ => 3,
        };
        Self { code, hint: hint(&e).map(String::from), msg: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "modelexp", version, about = "Identifiability and falsifiability diagnostics for Bayesian model expansion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Builtin model name.
    #[arg(long)]
    model: Option<String>,
    /// Builtin expansion pair name.
    #[arg(long)]
    pair: Option<String>,
    /// Hyperparameters, key=value,...
    #[arg(long, default_value = "")]
    hp: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// quick | default | thorough, optionally followed by key=value overrides.
    #[arg(long, default_value = "default")]
    budget: String,
    /// Output directory [default: out/<command>-<confighash>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Subset of json,csv,svg,txt.
    #[arg(long, default_value = "json,csv,svg,txt")]
    format: String,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Observed data inline, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// Observed data as a CSV with columns group,obs_index,value.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the regression suite against closed forms and oracles.
    Examples {
        /// Topics (cmi, ppc, fisher, properties, bootstrap) or criterion numbers, comma separated.
        #[arg(long)]
        only: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Information estimates, Fisher bounds and spectra for one model and dataset.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        /// Threshold for ε-weak identification, in nats.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Identifiability/falsifiability tradeoff between a base and an expanded model.
    ExpandCompare {
        /// Number of replicated datasets in the cmi term.
        #[arg(long, default_value_t = 1)]
        r: usize,
        /// Skewness-condition δ in (0, 2^-1/2).
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Marginal and conditional posterior predictive checks with scatter plots.
    Ppc {
        #[command(flatten)]
        data: DataArgs,
        /// Test statistic: mean | constant | neg-first | coord:K | window-sd:K | group-mean-sd, optionally @left|@right|@two. Repeatable [default: mean].
        #[arg(long)]
        stat: Vec<String>,
        /// Scatter projection: param:K or exp:K (e^θ_K). Repeatable; default every parameter.
        #[arg(long)]
        projection: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare same- and new-subpopulation sampling by posterior bootstrap.
    Bootstrap {
        /// Grouped dataset CSV.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Regenerate the three simulated grouped datasets instead.
        #[arg(long)]
        generate: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Common {
    fn config(&self, command: &str, options: BTreeMap<String, Value>) -> Result<RunConfig, Failure> {
        Ok(RunConfig {
            command: command.into(),
            model: self.model.clone(),
            pair: self.pair.clone(),
            hp: parse_hp(&self.hp)?.into_iter().collect(),
            seed: self.seed,
            budget: Budget::parse(&self.budget)?,
            formats: parse_formats(&self.format)?,
            options,
            out: self.out.clone(),
        })
    }
}

impl DataArgs {
    /// The dataset, if given, and its normalized description for the config.
    fn load(&self) -> Result<(Option<DataSet>, Value), Failure> {
        match (&self.y, &self.data) {
            (Some(_), Some(_)) => Err(Failure::usage("give either --y or --data, not both")),
            (Some(y), None) => {
                let v = y
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::usage(format!("--y: `{s}` is not a number"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let d = DataSet::new(v)?;
                Ok((Some(d.clone()), json!({ "y": d.values })))
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
                let d = DataSet::from_csv(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
                Ok((Some(d), json!({ "data_sha256": digest_hex(text.as_bytes()) })))
            }
            (None, None) => Ok((None, Value::Null)),
        }
    }
}

/// A builtin by `--model` or `--pair`; exactly one must be given.
pub fn resolve(cfg: &RunConfig) -> Result<Builtin, Failure> {
    let hp = cfg.hp.clone().into_iter().collect();
    match (&cfg.model, &cfg.pair) {
        (Some(m), None) => match builtin(m, &hp)? {
            b @ Builtin::Model(_) => Ok(b),
            Builtin::Pair(_) => Err(Failure::usage(format!("`{m}` is an expansion pair; use --pair {m}"))),
        },
        (None, Some(p)) => match builtin(p, &hp)? {
            b @ Builtin::Pair(_) => Ok(b),
            Builtin::Model(_) => Err(Failure::usage(format!("`{p}` is a single model; use --model {p}"))),
        },
        (Some(_), Some(_)) => Err(Failure::usage("give either --model or --pair, not both")),
        (None, None) => Err(Failure::usage("one of --model or --pair is required")),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Examples { only, common } => {
            let mut opts = BTreeMap::new();
            opts.insert("only".to_string(), json!(only));
            cmd::examples::run(&common.config("examples", opts)?, only.as_deref())
        }
        Cmd::Diagnose { data, epsilon, common } => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Failure::usage("--epsilon must be positive"));
            }
            let (y, desc) = data.load()?;
            let mut opts = BTreeMap::new();
            opts.insert("data".to_string(), desc);
            opts.insert("epsilon".to_string(), json!(epsilon));
            cmd::diagnose::run(&common.config("diagnose", opts)?, y, epsilon)
        }
        Cmd::ExpandCompare { r, delta, common } => {
            if r == 0 {
                return Err(Failure::usage("--r must be at least 1"));
            }
            let mut opts = BTreeMap::new();
            opts.insert("r".to_string(), json!(r));
            opts.insert("delta".to_string(), json!(delta));
            cmd::expand::run(&common.config("expand-compare", opts)?, r, delta)
        }
        Cmd::Ppc { data, stat, projection, common } => {
            let (y, desc) = data.load()?;
            let mut opts = BTreeMap::new();
            opts.insert("data".to_string(), desc);
            opts.insert("stat".to_string(), json!(stat));
            opts.insert("projection".to_string(), json!(projection));
            cmd::ppc::run(&common.config("ppc", opts)?, y, &stat, &projection)
        }
        Cmd::Bootstrap { data, generate, common } => {
            let desc = match (&data, generate) {
                (Some(_), true) => return Err(Failure::usage("give either --data or --generate, not both")),
                (None, false) => return Err(Failure::usage("bootstrap needs --data FILE or --generate")),
                (Some(p), false) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Failure::usage(format!("cannot read {}: {e}", p.display())))?;
                    let d = DataSet::from_csv(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
                    (Some((d, p.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned()))), json!({ "data_sha256": digest_hex(text.as_bytes()) }))
                }
                (None, true) => (None, json!("generate")),
            };
            let mut opts = BTreeMap::new();
            opts.insert("data".to_string(), desc.1);
            cmd::bootstrap::run(&common.config("bootstrap", opts)?, desc.0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            if let Some(h) = &f.hint {
                eprintln!("hint: {h}");
            }
            ExitCode::from(f.code)
        }
    }
}
