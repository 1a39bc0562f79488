//! Parametric bootstrap of future data for the grouped model: sample more
//! points from the existing groups, or sample new groups, refit, and compare
//! the posterior sd of μ with that given the observed data alone.
//!
//! Fits integrate the group means and μ analytically and put (log τ, log σ)
//! on an adaptive 2-d grid, so each refit is deterministic given its seed.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{simulate_grouped_data, variance_ratio, DataSet, GroupedExpanded, GroupedSummary};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    SameSubpops,
    NewSubpops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Posterior,
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootConfig {
    pub r: usize,
    /// New points per existing group (same-subpops).
    pub m_new: usize,
    /// New groups (new-subpops), each with `m` points.
    pub l_new: usize,
    pub m: usize,
    /// Posterior draws per fit.
    pub s: usize,
    pub seed: u64,
    pub bins: usize,
}

impl Default for BootConfig {
    fn default() -> Self {
        Self { r: 500, m_new: 8, l_new: 20, m: 2, s: 2000, seed: 0, bins: 20 }
    }
}

impl BootConfig {
    /// A new-group sample costs four existing-group samples.
    pub fn equal_cost(&self, l: usize) -> bool {
        4 * self.l_new * self.m == self.m_new * l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub source: Source,
    /// σ^(r) / σ_obs for the successful replications.
    pub rho: Vec<f64>,
    pub rho_bar: f64,
    pub rho_se: f64,
    pub rho_sd: f64,
    pub sigma_obs: f64,
    pub failed: usize,
    pub config: BootConfig,
}

const PILOT: usize = 48;
const FINE: usize = 64;
/// Grid nodes below max − CUTOFF (log scale) are treated as empty.
const CUTOFF: f64 = 30.0;

/// Posterior of (μ, τ, σ) given grouped data: a grid over (log τ, log σ)
/// with μ | τ, σ normal.
struct Fit<'a> {
    model: &'a GroupedExpanded,
    summary: GroupedSummary,
    u: (f64, f64),
    w: (f64, f64),
    cum: Vec<f64>,
}

impl<'a> Fit<'a> {
    fn new(model: &'a GroupedExpanded, y: &DataSet) -> Result<Self> {
        let summary = GroupedSummary::new(y).ok_or_else(|| Error::Structural("bootstrap needs group labels".into()))?;
        let sd = {
            let m = y.mean();
            (y.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.n() as f64).sqrt().max(1e-3)
        };
        let c = sd.ln();
        let pilot = Self::grid(model, &summary, (c - 8.0, c + 3.0), (c - 8.0, c + 2.0), PILOT)?;
        let (u, w) = pilot.support();
        Self::grid(model, &summary, u, w, FINE)
    }

    fn log_post(model: &GroupedExpanded, s: &GroupedSummary, u: f64, w: f64) -> f64 {
        s.loglik_scales(u.exp(), w.exp(), model.mu_sd) + model.log_prior_scales(u, w)
    }

    /// Cell-centred grid with `k` nodes per axis.
    fn grid(model: &'a GroupedExpanded, s: &GroupedSummary, u: (f64, f64), w: (f64, f64), k: usize) -> Result<Self> {
        let (hu, hw) = ((u.1 - u.0) / k as f64, (w.1 - w.0) / k as f64);
        let lp: Vec<f64> = (0..k * k)
            .map(|i| Self::log_post(model, s, u.0 + (i / k) as f64 * hu + 0.5 * hu, w.0 + (i % k) as f64 * hw + 0.5 * hw))
            .collect();
        let top = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Numerical("grouped posterior is not finite anywhere on the grid".into()));
        }
        let mut cum = Vec::with_capacity(lp.len());
        let mut acc = 0.0;
        for v in &lp {
            acc += if v.is_nan() { 0.0 } else { (v - top).exp() };
            cum.push(acc);
        }
        Ok(Self { model, summary: s.clone(), u, w, cum })
    }

    fn k(&self) -> usize {
        (self.cum.len() as f64).sqrt().round() as usize
    }

    fn weight(&self, i: usize) -> f64 {
        self.cum[i] - if i == 0 { 0.0 } else { self.cum[i - 1] }
    }

    /// Box of nodes within CUTOFF of the mode, padded by one cell.
    fn support(&self) -> ((f64, f64), (f64, f64)) {
        let k = self.k();
        let top = (0..self.cum.len()).map(|i| self.weight(i)).fold(0.0, f64::max);
        let (mut iu, mut iw) = ((k, 0), (k, 0));
        for i in 0..self.cum.len() {
            if self.weight(i) > top * (-CUTOFF).exp() {
                iu = (iu.0.min(i / k), iu.1.max(i / k));
                iw = (iw.0.min(i % k), iw.1.max(i % k));
            }
        }
        let (hu, hw) = ((self.u.1 - self.u.0) / k as f64, (self.w.1 - self.w.0) / k as f64);
        let span = |lo: f64, h: f64, (a, b): (usize, usize)| (lo + a.saturating_sub(1) as f64 * h, lo + (b + 2).min(k) as f64 * h);
        (span(self.u.0, hu, iu), span(self.w.0, hw, iw))
    }

    /// (log τ, log σ) from the grid, spread uniformly over the chosen cell.
    fn draw_scales(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        let k = self.k();
        let total = *self.cum.last().expect("nonempty grid");
        let t = dist::uniform(rng) * total;
        let i = self.cum.partition_point(|&c| c <= t).min(self.cum.len() - 1);
        let (hu, hw) = ((self.u.1 - self.u.0) / k as f64, (self.w.1 - self.w.0) / k as f64);
        (self.u.0 + ((i / k) as f64 + dist::uniform(rng)) * hu, self.w.0 + ((i % k) as f64 + dist::uniform(rng)) * hw)
    }

    /// (μ, τ, σ) from the posterior.
    fn draw(&self, rng: &mut dyn RngCore) -> (f64, f64, f64) {
        let (u, w) = self.draw_scales(rng);
        let (tau, sigma) = (u.exp(), w.exp());
        let (m, v) = self.summary.mu_conditional(tau, sigma, self.model.mu_sd);
        (dist::normal(rng, m, v.sqrt()), tau, sigma)
    }

    /// (θ_1..θ_L, σ) from the posterior.
    fn draw_groups(&self, rng: &mut dyn RngCore) -> (Vec<f64>, f64) {
        let (mu, tau, sigma) = self.draw(rng);
        let th = self.summary.theta_conditional(mu, tau, sigma).into_iter().map(|(m, v)| dist::normal(rng, m, v.sqrt())).collect();
        (th, sigma)
    }

    /// sd of `s` posterior draws of μ.
    fn mu_sd(&self, s: usize, rng: &mut dyn RngCore) -> f64 {
        let xs: Vec<f64> = (0..s).map(|_| self.draw(rng).0).collect();
        let n = s as f64;
        let m = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }
}

fn prior_draw(model: &GroupedExpanded, rng: &mut dyn RngCore) -> (f64, f64, f64) {
    let mu = dist::normal(rng, 0.0, model.mu_sd);
    let (tau, sigma) = model.sample_scales(rng);
    (mu, tau, sigma)
}

/// y plus `per_group` new points in each group of `theta`, labelled from `first`.
fn extend(y: &DataSet, theta: &[f64], sigma: f64, per_group: usize, first: usize, rng: &mut dyn RngCore) -> Result<DataSet> {
    let mut values = y.values.clone();
    let mut groups = y.groups.clone().unwrap_or_default();
    for (l, &t) in theta.iter().enumerate() {
        for _ in 0..per_group {
            values.push(dist::normal(rng, t, sigma));
            groups.push(first + l);
        }
    }
    DataSet::new(values)?.with_groups(groups)
}

fn one_replication(
    model: &GroupedExpanded,
    y: &DataSet,
    fit: &Fit,
    scheme: Scheme,
    source: Source,
    cfg: &BootConfig,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let l = y.n_groups();
    let y_rep = match scheme {
        Scheme::SameSubpops => {
            let (theta, sigma) = match source {
                Source::Posterior => fit.draw_groups(rng),
                Source::Prior => {
                    let (mu, tau, sigma) = prior_draw(model, rng);
                    ((0..l).map(|_| dist::normal(rng, mu, tau)).collect(), sigma)
                }
            };
            extend(y, &theta, sigma, cfg.m_new, 0, rng)?
        }
        Scheme::NewSubpops => {
            let (mu, tau, sigma) = match source {
                Source::Posterior => fit.draw(rng),
                Source::Prior => prior_draw(model, rng),
            };
            let theta: Vec<f64> = (0..cfg.l_new).map(|_| dist::normal(rng, mu, tau)).collect();
            extend(y, &theta, sigma, cfg.m, l, rng)?
        }
    };
    let refit = Fit::new(model, &y_rep)?;
    let s = refit.mu_sd(cfg.s, rng);
    if s.is_finite() && s > 0.0 {
        Ok(s)
    } else {
        Err(Error::Numerical(format!("refit posterior sd {s}")))
    }
}

fn check_config(y: &DataSet, cfg: &BootConfig) -> Result<()> {
    if cfg.r < 2 || cfg.s < 2 {
        return Err(Error::Domain("need R ≥ 2 and S ≥ 2".into()));
    }
    if y.groups.is_none() {
        return Err(Error::Structural("bootstrap needs group labels".into()));
    }
    Ok(())
}

fn sigma_obs(model: &GroupedExpanded, y: &DataSet, cfg: &BootConfig) -> Result<f64> {
    Ok(Fit::new(model, y)?.mu_sd(cfg.s, &mut rng::stream(cfg.seed, u64::MAX)))
}

fn run(model: &GroupedExpanded, y: &DataSet, scheme: Scheme, source: Source, cfg: &BootConfig) -> Result<SchemeResult> {
    check_config(y, cfg)?;
    let fit = Fit::new(model, y)?;
    let sigma_obs = sigma_obs(model, y, cfg)?;
    let tag = match (scheme, source) {
        (Scheme::SameSubpops, Source::Posterior) => 1,
        (Scheme::NewSubpops, Source::Posterior) => 2,
        (Scheme::SameSubpops, Source::Prior) => 3,
        (Scheme::NewSubpops, Source::Prior) => 4,
    };
    let seed = rng::derive(cfg.seed, tag);
    let out: Vec<Result<f64>> = (0..cfg.r)
        .into_par_iter()
        .map(|i| one_replication(model, y, &fit, scheme, source, cfg, &mut rng::stream(seed, i as u64)))
        .collect();
    let rho: Vec<f64> = out.iter().filter_map(|r| r.as_ref().ok()).map(|s| s / sigma_obs).collect();
    let failed = cfg.r - rho.len();
    if failed as f64 > 0.05 * cfg.r as f64 {
        return Err(Error::Reliability(format!("{failed} of {} bootstrap refits failed", cfg.r)));
    }
    let n = rho.len() as f64;
    let rho_bar = rho.iter().sum::<f64>() / n;
    let rho_sd = (rho.iter().map(|x| (x - rho_bar).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(SchemeResult { scheme, source, rho, rho_bar, rho_se: rho_sd / n.sqrt(), rho_sd, sigma_obs, failed, config: cfg.clone() })
}

/// Same-subpopulation design: more points from the existing groups.
pub fn boot_same_subpops(y: &DataSet, model: &GroupedExpanded, cfg: &BootConfig) -> Result<SchemeResult> {
    run(model, y, Scheme::SameSubpops, Source::Posterior, cfg)
}

/// New-subpopulation design: points from new groups.
pub fn boot_new_subpops(y: &DataSet, model: &GroupedExpanded, cfg: &BootConfig) -> Result<SchemeResult> {
    run(model, y, Scheme::NewSubpops, Source::Posterior, cfg)
}

/// Either design with prior draws in place of the initial posterior
/// draws; refits still condition on the combined data.
pub fn boot_prior_variant(y: &DataSet, model: &GroupedExpanded, scheme: Scheme, cfg: &BootConfig) -> Result<SchemeResult> {
    run(model, y, scheme, Source::Prior, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub scheme: Scheme,
    pub source: Source,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub dataset: String,
    pub variance_ratio: Option<f64>,
    pub equal_cost: bool,
    /// same/posterior, new/posterior, same/prior, new/prior.
    pub cells: Vec<SchemeResult>,
    pub histograms: Vec<Histogram>,
}

impl Comparison {
    pub fn cell(&self, scheme: Scheme, source: Source) -> &SchemeResult {
        self.cells.iter().find(|c| c.scheme == scheme && c.source == source).expect("all four cells present")
    }
}

/// Shared edges over all cells so the histograms are comparable.
fn histograms(cells: &[SchemeResult], bins: usize) -> Vec<Histogram> {
    let bins = bins.max(1);
    let all = cells.iter().flat_map(|c| c.rho.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let h = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * h).collect();
    cells
        .iter()
        .map(|c| {
            let mut counts = vec![0; bins];
            for &x in &c.rho {
                counts[(((x - lo) / h) as usize).min(bins - 1)] += 1;
            }
            Histogram { scheme: c.scheme, source: c.source, edges: edges.clone(), counts }
        })
        .collect()
}

pub fn compare_schemes(y: &DataSet, model: &GroupedExpanded, cfg: &BootConfig) -> Result<Comparison> {
    check_config(y, cfg)?;
    let cells = [
        (Scheme::SameSubpops, Source::Posterior),
        (Scheme::NewSubpops, Source::Posterior),
        (Scheme::SameSubpops, Source::Prior),
        (Scheme::NewSubpops, Source::Prior),
    ]
    .iter()
    .map(|&(sc, so)| run(model, y, sc, so, cfg))
    .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        dataset: y.name.clone(),
        variance_ratio: variance_ratio(y),
        equal_cost: cfg.equal_cost(y.n_groups()),
        histograms: histograms(&cells, cfg.bins),
        cells,
    })
}

/// Three datasets with σ* = 2τ*, τ*, τ*/2 (μ* = 0, τ* = 1, M = 2, L = 20),
/// spanning low to high between-group variance share.
pub fn regenerate_datasets(seed: u64) -> Result<Vec<DataSet>> {
    [2.0, 1.0, 0.5]
        .iter()
        .enumerate()
        .map(|(i, &s)| Ok(simulate_grouped_data(2, 20, s, 0.0, 1.0, rng::derive(seed, i as u64))?.named(format!("dataset-{}", i + 1), Some(seed))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GroupedExpanded {
        GroupedExpanded::new(20, 2, 2.0, 1.0, 1.0)
    }

    fn small(r: usize) -> BootConfig {
        BootConfig { r, s: 1000, seed: 9, ..Default::default() }
    }

    /// Exact posterior sd of μ by brute-force 3-d quadrature of the
    /// unmarginalised likelihood in (μ, log τ, log σ).
    fn brute_mu_sd(m: &GroupedExpanded, y: &DataSet) -> f64 {
        let s = GroupedSummary::new(y).unwrap();
        let k = 90;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        let mut lps = Vec::new();
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    let mu = -4.0 + 8.0 * (a as f64 + 0.5) / k as f64;
                    let u = -6.0 + 7.0 * (b as f64 + 0.5) / k as f64;
                    let w = -3.0 + 4.0 * (c as f64 + 0.5) / k as f64;
                    let lp = s.loglik(mu, u.exp(), w.exp()) + dist::normal_lpdf(mu, 0.0, m.mu_sd) + m.log_prior_scales(u, w);
                    lps.push((mu, lp));
                }
            }
        }
        let top = lps.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        for (mu, lp) in lps {
            let w = (lp - top).exp();
            z += w;
            m1 += w * mu;
            m2 += w * mu * mu;
        }
        (m2 / z - (m1 / z).powi(2)).sqrt()
    }

    #[test]
    fn grid_fit_matches_brute_force_quadrature() {
        let y = simulate_grouped_data(2, 20, 1.0, 0.3, 1.0, 4).unwrap();
        let m = model();
        let fit = Fit::new(&m, &y).unwrap();
        let got = fit.mu_sd(40_000, &mut rng::seeded(1));
        let want = brute_mu_sd(&m, &y);
        assert!((got / want - 1.0).abs() < 0.02, "{got} {want}");
    }

    #[test]
    fn cost_accounting() {
        let c = BootConfig::default();
        assert!(c.equal_cost(20));
        assert_eq!(4 * c.l_new * c.m, 160);
        assert!(!BootConfig { l_new: 10, ..c }.equal_cost(20));
    }

    #[test]
    fn no_new_data_leaves_ratio_at_one() {
        let y = simulate_grouped_data(2, 20, 1.0, 0.0, 1.0, 2).unwrap();
        let m = model();
        for r in [
            boot_same_subpops(&y, &m, &BootConfig { m_new: 0, ..small(20) }).unwrap(),
            boot_new_subpops(&y, &m, &BootConfig { l_new: 0, ..small(20) }).unwrap(),
        ] {
            assert!(r.rho.iter().all(|&x| (x - 1.0).abs() < 0.12), "{:?}", r.rho);
            assert!((r.rho_bar - 1.0).abs() < 0.05);
            assert!((r.rho_bar - r.rho.iter().sum::<f64>() / r.rho.len() as f64).abs() <= 1e-12);
            assert_eq!(r.failed, 0);
        }
    }

    #[test]
    fn tight_groups_gain_little_from_resampling_them() {
        // σ* ≪ τ*: the group means are already pinned down
        let y = simulate_grouped_data(2, 20, 0.1, 0.0, 1.0, 3).unwrap();
        let m = GroupedExpanded::new(20, 2, 2.0, 0.1, 1.0);
        let same = boot_same_subpops(&y, &m, &small(30)).unwrap();
        let new = boot_new_subpops(&y, &m, &small(30)).unwrap();
        assert!(same.rho_bar > new.rho_bar + 3.0 * same.rho_se.hypot(new.rho_se), "{} {}", same.rho_bar, new.rho_bar);
        assert!(same.rho.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn reproducible_and_complete_comparison() {
        let y = simulate_grouped_data(2, 20, 1.0, 0.0, 1.0, 5).unwrap();
        let cfg = BootConfig { r: 10, s: 200, bins: 5, ..Default::default() };
        let a = compare_schemes(&y, &model(), &cfg).unwrap();
        assert_eq!(a, compare_schemes(&y, &model(), &cfg).unwrap());
        assert_eq!(a.cells.len(), 4);
        assert!(a.equal_cost);
        for h in &a.histograms {
            assert_eq!(h.counts.iter().sum::<usize>(), 10);
            assert_eq!(h.edges.len(), 6);
        }
        assert_eq!(a.cell(Scheme::NewSubpops, Source::Prior).source, Source::Prior);
    }

    #[test]
    fn rejects_ungrouped_data() {
        let y = DataSet::new(vec![1.0, 2.0]).unwrap();
        assert!(boot_same_subpops(&y, &model(), &small(5)).is_err());
    }

    #[test]
    fn regenerated_datasets_span_variance_shares() {
        let ds = regenerate_datasets(1).unwrap();
        let v: Vec<f64> = ds.iter().map(|d| variance_ratio(d).unwrap()).collect();
        assert!(v[0] < v[2], "{v:?}");
        assert!(ds.iter().all(|d| d.n() == 40 && d.n_groups() == 20));
    }
}
