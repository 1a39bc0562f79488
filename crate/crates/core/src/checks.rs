//! Posterior predictive p-values, conditional on each posterior draw and
//! averaged over the posterior.
//!
//! Right tail counts T(y_rep) ≥ T(y) (ties count). There is no standard
//! two-tailed ppp-v; here it is 2·min(left, right), capped at 1.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataSet, Model};
use crate::rng;
use crate::samplers::PosteriorDraws;

pub const DEFAULT_N_INNER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Right,
    Left,
    Two,
}

type StatFn = Arc<dyn Fn(&DataSet) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TestStatistic {
    pub name: String,
    pub tail: Tail,
    eval: StatFn,
}

impl fmt::Debug for TestStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestStatistic({}, {:?})", self.name, self.tail)
    }
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

impl TestStatistic {
    pub fn new(name: impl Into<String>, tail: Tail, eval: impl Fn(&DataSet) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), tail, eval: Arc::new(eval) }
    }

    pub fn eval(&self, y: &DataSet) -> f64 {
        (self.eval)(y)
    }

    pub fn with_tail(mut self, tail: Tail) -> Self {
        self.tail = tail;
        self
    }

    pub fn mean() -> Self {
        Self::new("mean", Tail::Right, |y| y.mean())
    }

    /// −y₁.
    pub fn neg_first() -> Self {
        Self::new("neg-first", Tail::Right, |y| -y.values.first().copied().unwrap_or(f64::NAN))
    }

    /// y_k, zero-based.
    pub fn coord(k: usize) -> Self {
        Self::new(format!("coord:{k}"), Tail::Right, move |y| y.values.get(k).copied().unwrap_or(f64::NAN))
    }

    /// Sample sd of the last `k` observations.
    pub fn window_sd(k: usize) -> Self {
        Self::new(format!("window-sd:{k}"), Tail::Right, move |y| {
            let v = &y.values;
            sd(&v[v.len().saturating_sub(k)..])
        })
    }

    /// Ignores the data; every p-value is 1 under the ties-count convention.
    pub fn constant() -> Self {
        Self::new("constant", Tail::Right, |_| 0.0)
    }

    /// Sample sd of the group means (NaN without group labels).
    pub fn group_mean_sd() -> Self {
        Self::new("group-mean-sd", Tail::Right, |y| {
            let Some(g) = &y.groups else { return f64::NAN };
            let l = y.n_groups();
            let mut sum = vec![0.0; l];
            let mut cnt = vec![0.0; l];
            for (&v, &k) in y.values.iter().zip(g) {
                sum[k] += v;
                cnt[k] += 1.0;
            }
            let means: Vec<f64> = sum.iter().zip(&cnt).map(|(s, c)| s / c).collect();
            sd(&means)
        })
    }

    /// Parses `mean`, `constant`, `neg-first`, `coord:K`, `window-sd:K`, `group-mean-sd`,
    /// optionally suffixed `@left`, `@right` or `@two`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (body, tail) = match spec.split_once('@') {
            Some((b, "left")) => (b, Tail::Left),
            Some((b, "right")) => (b, Tail::Right),
            Some((b, "two")) => (b, Tail::Two),
            Some((_, t)) => return Err(Error::Domain(format!("unknown tail `{t}`"))),
            None => (spec, Tail::Right),
        };
        let arg = |s: &str| s.parse::<usize>().map_err(|_| Error::Domain(format!("bad statistic argument `{s}`")));
        let stat = match body.split_once(':') {
            None if body == "mean" => Self::mean(),
            None if body == "neg-first" => Self::neg_first(),
            None if body == "constant" => Self::constant(),
            None if body == "group-mean-sd" => Self::group_mean_sd(),
            Some(("coord", k)) => Self::coord(arg(k)?),
            Some(("window-sd", k)) => Self::window_sd(arg(k)?),
            _ => return Err(Error::Domain(format!("unknown statistic `{body}`"))),
        };
        Ok(stat.with_tail(tail))
    }
}

/// Tail fraction of replicated statistics relative to the observed one.
pub fn tail_p(t_rep: &[f64], t_obs: f64, tail: Tail) -> f64 {
    let n = t_rep.len() as f64;
    let right = t_rep.iter().filter(|&&t| t >= t_obs).count() as f64 / n;
    let left = t_rep.iter().filter(|&&t| t <= t_obs).count() as f64 / n;
    match tail {
        Tail::Right => right,
        Tail::Left => left,
        Tail::Two => (2.0 * right.min(left)).min(1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub stat_name: String,
    pub tail: Tail,
    pub t_obs: f64,
    pub marginal_p: f64,
    /// p_T(θ_s), aligned with the draws.
    pub conditional_p: Vec<f64>,
    /// Posterior weight of each draw.
    pub weights: Vec<f64>,
    pub n_inner: usize,
    /// Seed of the posterior draws and of the replicate streams.
    pub draws_seed: u64,
    pub seed: u64,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

impl CheckResult {
    /// Posterior mass of draws with p_T(θ) below `alpha`.
    pub fn mass_below(&self, alpha: f64) -> f64 {
        self.conditional_p.iter().zip(&self.weights).filter(|(p, _)| **p < alpha).map(|(_, w)| w).sum()
    }
}

pub fn conditional_pppv(
    model: &dyn Model,
    y: &DataSet,
    draws: &PosteriorDraws,
    stat: &TestStatistic,
    n_inner: usize,
    seed: u64,
) -> Result<CheckResult> {
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    if n_inner < 100 {
        return Err(Error::Domain(format!("n_inner = {n_inner}; need at least 100 replicates per draw")));
    }
    if draws.d != model.d_total() {
        return Err(Error::Structural(format!("draws have {} columns, model has {}", draws.d, model.d_total())));
    }
    let t_obs = stat.eval(y);
    if !t_obs.is_finite() {
        return Err(Error::Domain(format!("{} is not finite on the observed data", stat.name)));
    }
    let n = y.n();
    let per: Vec<(f64, usize)> = (0..draws.len())
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(seed, s as u64);
            let t: Vec<f64> = (0..n_inner)
                .map(|_| stat.eval(&model.sample_data(draws.row(s), n, &mut r)))
                .filter(|t| t.is_finite())
                .collect();
            let dropped = n_inner - t.len();
            (if t.is_empty() { f64::NAN } else { tail_p(&t, t_obs, stat.tail) }, dropped)
        })
        .collect();
    let dropped: usize = per.iter().map(|p| p.1).sum();
    let total = draws.len() * n_inner;
    if dropped as f64 > 0.01 * total as f64 {
        return Err(Error::Reliability(format!("{dropped} of {total} replicated statistics were not finite")));
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} non-finite replicated statistics"));
    }
    let conditional_p: Vec<f64> = per.into_iter().map(|p| p.0).collect();
    let weights: Vec<f64> = (0..draws.len()).map(|i| draws.weight(i)).collect();
    let marginal_p = conditional_p.iter().zip(&weights).map(|(p, w)| p * w).sum();
    Ok(CheckResult {
        stat_name: stat.name.clone(),
        tail: stat.tail,
        t_obs,
        marginal_p,
        conditional_p,
        weights,
        n_inner,
        draws_seed: draws.seed,
        seed,
        dropped,
        warnings,
    })
}

pub fn marginal_pppv(
    model: &dyn Model,
    y: &DataSet,
    draws: &PosteriorDraws,
    stat: &TestStatistic,
    n_inner: usize,
    seed: u64,
) -> Result<f64> {
    Ok(conditional_pppv(model, y, draws, stat, n_inner, seed)?.marginal_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub draw_index: usize,
    pub projection: f64,
    pub conditional_p: f64,
    pub weight: f64,
}

/// The joint table {(projection(θ_s), p_T(θ_s))} in draw order.
pub fn check_scatter(result: &CheckResult, draws: &PosteriorDraws, projection: &dyn Fn(&[f64]) -> f64) -> Result<Vec<ScatterPoint>> {
    if draws.len() != result.conditional_p.len() {
        return Err(Error::Structural(format!(
            "{} draws but {} conditional p-values",
            draws.len(),
            result.conditional_p.len()
        )));
    }
    Ok(draws
        .rows()
        .zip(&result.conditional_p)
        .enumerate()
        .map(|(i, (r, &p))| ScatterPoint { draw_index: i, projection: projection(r), conditional_p: p, weight: result.weights[i] })
        .collect())
}
