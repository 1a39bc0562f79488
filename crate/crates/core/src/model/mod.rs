//! Joint models p(y, θ, λ), the expansion relation between a base model and
//! a larger one, and the built-in example registry.
//!
//! Parameter vectors are laid out shared-first: `[θ_1..θ_d, λ_1..λ_k]`.
//! Positive quantities are always carried on the log scale.

mod counts;
mod grouped;
mod linear;
mod linreg;
mod normal_gamma;
mod registry;
mod student;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use counts::{NegBin, Poisson};
pub use grouped::{simulate_grouped_data, variance_ratio, GroupedBase, GroupedExpanded, GroupedSummary};
pub use linear::LinearGaussian;
pub use linreg::LinRegAddPred;
pub use normal_gamma::NormalGamma;
pub use registry::{builtin, builtin_names, parse_hp, Builtin, Hyper};
pub use student::StudentT;

/// A parameter vector together with its shared/extra split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    values: Vec<f64>,
    d_shared: usize,
    d_extra: usize,
}

impl ParamPoint {
    pub fn new(values: Vec<f64>, d_shared: usize, d_extra: usize) -> Result<Self> {
        if values.len() != d_shared + d_extra {
            return Err(Error::Structural(format!(
                "parameter length {} != {d_shared} + {d_extra}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("parameter entries must be finite".into()));
        }
        Ok(Self { values, d_shared, d_extra })
    }

    pub fn for_model(model: &dyn Model, values: Vec<f64>) -> Result<Self> {
        Self::new(values, model.d_shared(), model.d_extra())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn shared(&self) -> &[f64] {
        &self.values[..self.d_shared]
    }
    pub fn extra(&self) -> &[f64] {
        &self.values[self.d_shared..]
    }
    pub fn layout(&self) -> (usize, usize) {
        (self.d_shared, self.d_extra)
    }
}

/// Observations (n rows × `dim` columns, row-major) with optional group labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub values: Vec<f64>,
    pub dim: usize,
    pub groups: Option<Vec<usize>>,
    pub name: String,
    pub seed: Option<u64>,
}

impl DataSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("a dataset needs at least one observation".into()));
        }
        Ok(Self::from_vec(values))
    }

    /// No observations at all; every log-likelihood is identically zero.
    pub fn empty() -> Self {
        Self::from_vec(Vec::new())
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Self { values, dim: 1, groups: None, name: String::new(), seed: None }
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.n() {
            return Err(Error::Structural(format!(
                "{} group labels for {} observations",
                groups.len(),
                self.n()
            )));
        }
        let l = groups.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; l];
        for &g in &groups {
            seen[g] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Domain("group labels must cover 0..L with no empty group".into()));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn named(mut self, name: impl Into<String>, seed: Option<u64>) -> Self {
        self.name = name.into();
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.as_ref().map_or(0, |g| g.iter().max().map_or(0, |m| m + 1))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Concatenate two datasets; group labels must be present on both or neither.
    pub fn concat(&self, other: &DataSet) -> Result<DataSet> {
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        let mut out = DataSet::from_vec(values);
        out.name = self.name.clone();
        out.seed = self.seed;
        match (&self.groups, &other.groups) {
            (Some(a), Some(b)) => {
                let mut g = a.clone();
                g.extend_from_slice(b);
                out.with_groups(g)
            }
            (None, None) => Ok(out),
            _ => Err(Error::Structural("cannot mix grouped and ungrouped data".into())),
        }
    }

    /// `group,obs_index,value` with a header row; ungrouped data use group 0.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,obs_index,value\n");
        let mut counters = vec![0usize; self.n_groups().max(1)];
        for (i, v) in self.values.iter().enumerate() {
            let g = self.groups.as_ref().map_or(0, |g| g[i]);
            let k = counters[g];
            counters[g] += 1;
            s.push_str(&format!("{g},{k},{v:?}\n"));
        }
        s
    }

    /// Blank lines and `#` comment lines are skipped.
    pub fn from_csv(text: &str) -> Result<DataSet> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Io("empty csv".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["group", "obs_index", "value"] {
            return Err(Error::Io(format!("unexpected csv header `{header}`")));
        }
        let mut groups = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(Error::Io(format!("line {}: expected 3 fields", lineno + 2)));
            }
            let bad = |what: &str| Error::Io(format!("line {}: bad {what}", lineno + 2));
            groups.push(f[0].parse::<usize>().map_err(|_| bad("group"))?);
            values.push(f[2].parse::<f64>().map_err(|_| bad("value"))?);
        }
        let ds = DataSet::new(values)?;
        if groups.iter().any(|&g| g != 0) {
            ds.with_groups(groups)
        } else {
            Ok(ds)
        }
    }
}

/// A joint model p(y, θ, λ) = p(θ) p(λ | θ) p(y | θ, λ).
///
/// Implementations must return −∞ (never NaN) off support.
pub trait Model: Send + Sync {
    fn name(&self) -> String;
    fn d_shared(&self) -> usize;
    fn d_extra(&self) -> usize {
        0
    }
    fn d_total(&self) -> usize {
        self.d_shared() + self.d_extra()
    }
    /// Default number of observations in one dataset.
    fn n_obs(&self) -> usize;

    /// log p(θ), the marginal prior of the shared block.
    fn log_prior_shared(&self, theta: &[f64]) -> f64;
    /// log p(λ | θ); zero when there is no extra block.
    fn log_prior_extra(&self, _p: &[f64]) -> f64 {
        0.0
    }
    fn log_prior(&self, p: &[f64]) -> f64 {
        let a = self.log_prior_shared(&p[..self.d_shared()]);
        if a == f64::NEG_INFINITY {
            return a;
        }
        a + self.log_prior_extra(p)
    }
    /// Whether p(θ, λ) = p(θ) p(λ).
    fn prior_independent(&self) -> bool {
        true
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64;

    /// Evaluate `log_lik(y, ·)` at many parameter vectors. Models override
    /// this with sufficient statistics computed once per dataset.
    fn log_lik_batch(&self, y: &DataSet, params: &[f64], out: &mut [f64]) {
        let d = self.d_total();
        for (o, p) in out.iter_mut().zip(params.chunks_exact(d)) {
            *o = self.log_lik(y, p);
        }
    }

    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn sample_extra(&self, _theta: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        Vec::new()
    }
    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut p = self.sample_shared(rng);
        let e = self.sample_extra(&p, rng);
        p.extend(e);
        p
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet;

    /// Does log p(y|θ) split into a sum over observations?
    fn pointwise(&self) -> bool {
        true
    }
    /// Declared, not verified.
    fn log_concave_prior(&self) -> bool;

    /// Closed-form expected Fisher information at `p` (full d_total block).
    fn fisher(&self, _p: &[f64], _n: usize) -> Option<DMatrix<f64>> {
        None
    }
    /// Closed-form prior covariance of the full parameter vector.
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        None
    }
    fn linear_gaussian(&self) -> Option<&LinearGaussian> {
        None
    }
    /// Exact posterior draws, row-major S × d_total.
    fn sample_posterior_exact(
        &self,
        _y: &DataSet,
        _s: usize,
        _rng: &mut dyn RngCore,
    ) -> Option<Vec<f64>> {
        None
    }
    /// Box for grid integration when the model has a bounded or natural range.
    fn grid_bounds(&self) -> Option<Vec<(f64, f64)>> {
        None
    }
}

impl fmt::Debug for dyn Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Model({}, d={}+{})", self.name(), self.d_shared(), self.d_extra())
    }
}

/// An element of [−∞, ∞].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }
    /// Value at magnitude `k` of the limit ladder.
    pub fn at(&self, k: f64) -> f64 {
        match *self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => k,
            ExtReal::NegInf => -k,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "+inf"),
            ExtReal::NegInf => write!(f, "-inf"),
        }
    }
}

/// Discrepancies this small are summation-order noise, not model mismatch.
const ROUNDOFF: f64 = 1e-12;

/// Magnitudes at which infinite λ₀ entries are approached.
pub const LIMIT_LADDER: [f64; 4] = [1e1, 1e2, 1e3, 1e4];

/// A base model and an expansion recovering it at λ = λ₀.
#[derive(Clone)]
pub struct ExpansionPair {
    pub name: String,
    pub base: Arc<dyn Model>,
    pub expanded: Arc<dyn Model>,
    pub lambda0: Vec<ExtReal>,
    pub d_shared: usize,
}

impl fmt::Debug for ExpansionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpansionPair")
            .field("name", &self.name)
            .field("base", &self.base)
            .field("expanded", &self.expanded)
            .field("lambda0", &self.lambda0)
            .finish()
    }
}

impl ExpansionPair {
    pub fn new(
        name: impl Into<String>,
        base: Arc<dyn Model>,
        expanded: Arc<dyn Model>,
        lambda0: Vec<ExtReal>,
    ) -> Result<Self> {
        if base.d_extra() != 0 {
            return Err(Error::Structural("base model must not carry extra parameters".into()));
        }
        if expanded.d_shared() != base.d_shared() {
            return Err(Error::Structural(format!(
                "shared block mismatch: base has {}, expanded has {}",
                base.d_shared(),
                expanded.d_shared()
            )));
        }
        if lambda0.len() != expanded.d_extra() {
            return Err(Error::Structural(format!(
                "λ₀ has {} entries but the expansion adds {}",
                lambda0.len(),
                expanded.d_extra()
            )));
        }
        let d_shared = base.d_shared();
        Ok(Self { name: name.into(), base, expanded, lambda0, d_shared })
    }

    pub fn lambda0_is_finite(&self) -> bool {
        self.lambda0.iter().all(ExtReal::is_finite)
    }

    /// λ₀ itself when finite, otherwise the ladder point at magnitude `k`.
    pub fn lambda_at(&self, k: f64) -> Vec<f64> {
        self.lambda0.iter().map(|l| l.at(k)).collect()
    }

    pub fn default_tolerance(&self) -> f64 {
        if self.lambda0_is_finite() {
            1e-6
        } else {
            1e-3
        }
    }
}

/// One (y, θ) point at which base and conditioned expansion are compared.
#[derive(Debug, Clone)]
pub struct Probe {
    pub y: DataSet,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Max |Δ log density| over probes, one entry per ladder step
    /// (a single entry when λ₀ is finite).
    pub ladder_discrepancy: Vec<f64>,
    /// Per-probe discrepancy at the last evaluated λ.
    pub per_probe: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

/// 5 prior θ × 5 datasets each, plus θ = 0 with one dataset.
pub fn default_probes(pair: &ExpansionPair, seed: u64) -> Vec<Probe> {
    let mut rng = crate::rng::stream(seed, 0xB0B);
    let base = &pair.base;
    let n = base.n_obs();
    let mut out = Vec::with_capacity(26);
    for _ in 0..5 {
        let theta = base.sample_prior(&mut rng);
        for _ in 0..5 {
            out.push(Probe { y: base.sample_data(&theta, n, &mut rng), theta: theta.clone() });
        }
    }
    let origin = vec![0.0; base.d_shared()];
    out.push(Probe { y: base.sample_data(&origin, n, &mut rng), theta: origin });
    out
}

fn probe_discrepancy(pair: &ExpansionPair, probe: &Probe, lambda: &[f64]) -> f64 {
    let b = pair.base.log_prior(&probe.theta) + pair.base.log_lik(&probe.y, &probe.theta);
    let mut p = probe.theta.clone();
    p.extend_from_slice(lambda);
    let e = pair.expanded.log_prior_shared(&probe.theta) + pair.expanded.log_lik(&probe.y, &p);
    if b == e {
        0.0
    } else {
        (b - e).abs()
    }
}

/// Checks p_b(y, θ) = p(y, θ | λ₀) on the probes.
///
/// Infinite λ₀ entries are approached along [`LIMIT_LADDER`]; the
/// discrepancy must shrink strictly at every step until it reaches round-off,
/// and the last step must be within `tol`.
pub fn validate_expansion(pair: &ExpansionPair, probes: &[Probe], tol: f64) -> Result<ValidationReport> {
    if pair.base.d_shared() != pair.expanded.d_shared() {
        return Err(Error::Structural("shared block dimensions differ".into()));
    }
    if !pair.expanded.prior_independent() {
        return Err(Error::Unsupported(
            "λ₀-conditioning needs p(θ | λ); only independent priors are supported".into(),
        ));
    }
    for pr in probes {
        if pr.theta.len() != pair.d_shared {
            return Err(Error::Structural("probe θ has the wrong length".into()));
        }
    }
    let steps: Vec<f64> = if pair.lambda0_is_finite() { vec![0.0] } else { LIMIT_LADDER.to_vec() };
    let mut ladder = Vec::with_capacity(steps.len());
    let mut per_probe = Vec::new();
    for &k in &steps {
        let lam = pair.lambda_at(k);
        per_probe = probes.iter().map(|pr| probe_discrepancy(pair, pr, &lam)).collect();
        ladder.push(per_probe.iter().copied().fold(0.0, f64::max));
    }
    let last = *ladder.last().unwrap_or(&f64::INFINITY);
    // once both sides agree to round-off the sequence can only stall
    let shrinking = ladder.windows(2).all(|w| w[1] < w[0] || w[1] <= ROUNDOFF);
    let pass = last.is_finite() && last <= tol && shrinking;
    Ok(ValidationReport { ladder_discrepancy: ladder, per_probe, tol, pass })
}

/// Base model with an independent standard-normal λ that the likelihood ignores.
pub struct IndependentExtension {
    pub base: Arc<dyn Model>,
    pub k: usize,
}

impl Model for IndependentExtension {
    fn name(&self) -> String {
        format!("{}+independent", self.base.name())
    }
    fn d_shared(&self) -> usize {
        self.base.d_shared()
    }
    fn d_extra(&self) -> usize {
        self.k
    }
    fn n_obs(&self) -> usize {
        self.base.n_obs()
    }
    fn log_prior_shared(&self, theta: &[f64]) -> f64 {
        self.base.log_prior_shared(theta)
    }
    fn log_prior_extra(&self, p: &[f64]) -> f64 {
        p[self.d_shared()..].iter().map(|&l| crate::dist::normal_lpdf(l, 0.0, 1.0)).sum()
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        self.base.log_lik(y, &p[..self.d_shared()])
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.sample_prior(rng)
    }
    fn sample_extra(&self, _theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.k).map(|_| crate::dist::std_normal(rng)).collect()
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        self.base.sample_data(&p[..self.d_shared()], n, rng)
    }
    fn log_concave_prior(&self) -> bool {
        self.base.log_concave_prior()
    }
    fn fisher(&self, p: &[f64], n: usize) -> Option<DMatrix<f64>> {
        let fb = self.base.fisher(&p[..self.d_shared()], n)?;
        let d = self.d_total();
        let mut f = DMatrix::zeros(d, d);
        f.view_mut((0, 0), (fb.nrows(), fb.ncols())).copy_from(&fb);
        Some(f)
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        let cb = self.base.prior_covariance()?;
        let d = self.d_total();
        let mut c = DMatrix::identity(d, d);
        c.view_mut((0, 0), (cb.nrows(), cb.ncols())).copy_from(&cb);
        Some(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_point_checks_layout() {
        assert!(ParamPoint::new(vec![1.0, 2.0], 1, 1).is_ok());
        assert!(matches!(ParamPoint::new(vec![1.0], 1, 1), Err(Error::Structural(_))));
        assert!(matches!(ParamPoint::new(vec![f64::NAN], 1, 0), Err(Error::Domain(_))));
        let p = ParamPoint::new(vec![1.0, 2.0, 3.0], 1, 2).unwrap();
        assert_eq!(p.shared(), &[1.0]);
        assert_eq!(p.extra(), &[2.0, 3.0]);
    }

    #[test]
    fn dataset_groups_must_be_dense() {
        let d = DataSet::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(d.clone().with_groups(vec![0, 2, 2]).is_err());
        assert!(d.clone().with_groups(vec![0, 1]).is_err());
        let g = d.with_groups(vec![1, 0, 1]).unwrap();
        assert_eq!(g.n_groups(), 2);
        assert!(DataSet::new(vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = DataSet::new(vec![0.1, -2.5, 3.0, 1e-9]).unwrap().with_groups(vec![0, 0, 1, 1]).unwrap();
        let back = DataSet::from_csv(&d.to_csv()).unwrap();
        assert_eq!(back.values, d.values);
        assert_eq!(back.groups, d.groups);
        assert!(DataSet::from_csv("a,b,c\n0,0,1").is_err());
        let commented = format!("# note\n{}", d.to_csv());
        assert_eq!(DataSet::from_csv(&commented).unwrap().values, d.values);
    }

    #[test]
    fn ext_real_ladder() {
        assert_eq!(ExtReal::PosInf.at(100.0), 100.0);
        assert_eq!(ExtReal::NegInf.at(10.0), -10.0);
        assert_eq!(ExtReal::Finite(0.5).at(1e4), 0.5);
    }
}
