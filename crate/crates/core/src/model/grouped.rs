//! Grouped measurements y_ml, m < M, l < L.
//!
//! Base: y_ml ~ normal(μ, σ*) with σ* fixed.
//! Expanded: y_ml ~ normal(θ_l, σ), θ_l ~ normal(μ, τ), with gamma priors on
//! σ and τ. The θ_l are integrated out analytically, so the expanded
//! parameter vector is (μ, log τ, log σ); the base model is recovered at
//! log τ = −∞, log σ = log σ*.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{DataSet, Model};
use crate::dist::{self, LN_2PI};
use crate::error::{Error, Result};
use crate::rng;

/// Per-group count, mean and within-group sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSummary {
    pub count: Vec<f64>,
    pub mean: Vec<f64>,
    pub ss: Vec<f64>,
}

impl GroupedSummary {
    pub fn new(y: &DataSet) -> Option<Self> {
        let g = y.groups.as_ref()?;
        let l = y.n_groups();
        let mut count = vec![0.0; l];
        let mut sum = vec![0.0; l];
        for (&gi, &v) in g.iter().zip(&y.values) {
            count[gi] += 1.0;
            sum[gi] += v;
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| s / c).collect();
        let mut ss = vec![0.0; l];
        for (&gi, &v) in g.iter().zip(&y.values) {
            ss[gi] += (v - mean[gi]).powi(2);
        }
        Some(Self { count, mean, ss })
    }

    pub fn n(&self) -> f64 {
        self.count.iter().sum()
    }

    /// log p(y | μ, τ, σ) with the group means integrated out.
    pub fn loglik(&self, mu: f64, tau: f64, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        let t2 = tau * tau;
        let mut acc = 0.0;
        for ((&c, &m), &ss) in self.count.iter().zip(&self.mean).zip(&self.ss) {
            let v = t2 + s2 / c;
            acc += -0.5 * (c - 1.0) * (LN_2PI + s2.ln()) - 0.5 * c.ln() - ss / (2.0 * s2)
                - 0.5 * (LN_2PI + v.ln())
                - (m - mu).powi(2) / (2.0 * v);
        }
        acc
    }

    /// μ | τ, σ, y under μ ~ normal(0, s0): (mean, variance).
    pub fn mu_conditional(&self, tau: f64, sigma: f64, s0: f64) -> (f64, f64) {
        let mut prec = 1.0 / (s0 * s0);
        let mut lin = 0.0;
        for (&c, &m) in self.count.iter().zip(&self.mean) {
            let v = tau * tau + sigma * sigma / c;
            prec += 1.0 / v;
            lin += m / v;
        }
        (lin / prec, 1.0 / prec)
    }

    /// log p(y | τ, σ) with μ integrated out too.
    pub fn loglik_scales(&self, tau: f64, sigma: f64, s0: f64) -> f64 {
        let (m, v) = self.mu_conditional(tau, sigma, s0);
        // Chib's identity at the conditional mean
        self.loglik(m, tau, sigma) + dist::normal_lpdf(m, 0.0, s0) + 0.5 * (LN_2PI + v.ln())
    }

    /// θ_l | μ, τ, σ, y: (mean, variance) per group.
    pub fn theta_conditional(&self, mu: f64, tau: f64, sigma: f64) -> Vec<(f64, f64)> {
        self.count
            .iter()
            .zip(&self.mean)
            .map(|(&c, &m)| {
                let prec = 1.0 / (tau * tau) + c / (sigma * sigma);
                ((mu / (tau * tau) + c * m / (sigma * sigma)) / prec, 1.0 / prec)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GroupedBase {
    pub l: usize,
    pub m: usize,
    pub sigma_star: f64,
    pub mu_sd: f64,
}

#[derive(Debug, Clone)]
pub struct GroupedExpanded {
    pub l: usize,
    pub m: usize,
    pub mu_sd: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_tau: f64,
    pub b_tau: f64,
}

impl GroupedExpanded {
    /// Shape-2 gamma priors: σ with mode `sigma_star`, τ with mode `tau_mode`.
    pub fn new(l: usize, m: usize, mu_sd: f64, sigma_star: f64, tau_mode: f64) -> Self {
        Self { l, m, mu_sd, a_sigma: 2.0, b_sigma: 1.0 / sigma_star, a_tau: 2.0, b_tau: 1.0 / tau_mode }
    }

    pub fn log_prior_scales(&self, log_tau: f64, log_sigma: f64) -> f64 {
        dist::log_gamma_lpdf(log_tau, self.a_tau, self.b_tau)
            + dist::log_gamma_lpdf(log_sigma, self.a_sigma, self.b_sigma)
    }

    pub fn sample_scales(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        (dist::gamma(rng, self.a_tau, self.b_tau), dist::gamma(rng, self.a_sigma, self.b_sigma))
    }
}

fn labels(n: usize, m: usize) -> Vec<usize> {
    (0..n).map(|i| i / m.max(1)).collect()
}

impl Model for GroupedBase {
    fn name(&self) -> String {
        "grouped-base".into()
    }
    fn d_shared(&self) -> usize {
        1
    }
    fn n_obs(&self) -> usize {
        self.l * self.m
    }
    fn log_prior_shared(&self, t: &[f64]) -> f64 {
        dist::normal_lpdf(t[0], 0.0, self.mu_sd)
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        y.values.iter().map(|&v| dist::normal_lpdf(v, p[0], self.sigma_star)).sum()
    }
    fn log_lik_batch(&self, y: &DataSet, params: &[f64], out: &mut [f64]) {
        let n = y.n() as f64;
        let s1: f64 = y.values.iter().sum();
        let s2: f64 = y.values.iter().map(|v| v * v).sum();
        let sd = self.sigma_star;
        for (o, &mu) in out.iter_mut().zip(params) {
            *o = -0.5 * n * LN_2PI - n * sd.ln() - (s2 - 2.0 * mu * s1 + n * mu * mu).max(0.0) / (2.0 * sd * sd);
        }
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![dist::normal(rng, 0.0, self.mu_sd)]
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        let v = (0..n).map(|_| dist::normal(rng, p[0], self.sigma_star)).collect();
        DataSet::from_vec(v).with_groups(labels(n, self.m)).expect("dense labels")
    }
    fn log_concave_prior(&self) -> bool {
        true
    }
    fn fisher(&self, _p: &[f64], n: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, n as f64 / self.sigma_star.powi(2)))
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.mu_sd * self.mu_sd))
    }
    fn sample_posterior_exact(&self, y: &DataSet, s: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let n = y.n() as f64;
        let prec = 1.0 / self.mu_sd.powi(2) + n / self.sigma_star.powi(2);
        let mean = y.values.iter().sum::<f64>() / self.sigma_star.powi(2) / prec;
        let sd = prec.recip().sqrt();
        Some((0..s).map(|_| dist::normal(rng, mean, sd)).collect())
    }
}

impl Model for GroupedExpanded {
    fn name(&self) -> String {
        "grouped-expanded".into()
    }
    fn d_shared(&self) -> usize {
        1
    }
    fn d_extra(&self) -> usize {
        2
    }
    fn n_obs(&self) -> usize {
        self.l * self.m
    }
    fn log_prior_shared(&self, t: &[f64]) -> f64 {
        dist::normal_lpdf(t[0], 0.0, self.mu_sd)
    }
    fn log_prior_extra(&self, p: &[f64]) -> f64 {
        self.log_prior_scales(p[1], p[2])
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        match GroupedSummary::new(y) {
            Some(s) => s.loglik(p[0], p[1].exp(), p[2].exp()),
            None => f64::NEG_INFINITY,
        }
    }
    fn log_lik_batch(&self, y: &DataSet, params: &[f64], out: &mut [f64]) {
        let s = GroupedSummary::new(y);
        for (o, p) in out.iter_mut().zip(params.chunks_exact(3)) {
            *o = s.as_ref().map_or(f64::NEG_INFINITY, |s| s.loglik(p[0], p[1].exp(), p[2].exp()));
        }
    }
    fn pointwise(&self) -> bool {
        false
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![dist::normal(rng, 0.0, self.mu_sd)]
    }
    fn sample_extra(&self, _t: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let (t, s) = self.sample_scales(rng);
        vec![t.ln(), s.ln()]
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        let (mu, tau, sigma) = (p[0], p[1].exp(), p[2].exp());
        let lab = labels(n, self.m);
        let groups = lab.last().map_or(0, |g| g + 1);
        let theta: Vec<f64> = (0..groups).map(|_| dist::normal(rng, mu, tau)).collect();
        let v = lab.iter().map(|&g| dist::normal(rng, theta[g], sigma)).collect();
        DataSet::from_vec(v).with_groups(lab).expect("dense labels")
    }
    fn log_concave_prior(&self) -> bool {
        true
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.mu_sd * self.mu_sd,
            dist::trigamma(self.a_tau),
            dist::trigamma(self.a_sigma),
        ])))
    }
}

/// L groups of M measurements: θ_l ~ normal(μ*, τ*), y_ml ~ normal(θ_l, σ*).
pub fn simulate_grouped_data(m: usize, l: usize, sigma_star: f64, mu_star: f64, tau_star: f64, seed: u64) -> Result<DataSet> {
    if m == 0 || l == 0 {
        return Err(Error::Domain("need at least one group and one measurement".into()));
    }
    if !(sigma_star > 0.0 && tau_star > 0.0) || !mu_star.is_finite() {
        return Err(Error::Domain("scales must be positive and finite".into()));
    }
    let mut r = rng::seeded(seed);
    let theta: Vec<f64> = (0..l).map(|_| dist::normal(&mut r, mu_star, tau_star)).collect();
    let mut values = Vec::with_capacity(l * m);
    let mut groups = Vec::with_capacity(l * m);
    for (g, &t) in theta.iter().enumerate() {
        for _ in 0..m {
            values.push(dist::normal(&mut r, t, sigma_star));
            groups.push(g);
        }
    }
    Ok(DataSet::from_vec(values)
        .with_groups(groups)?
        .named(format!("grouped-M{m}-L{l}-sigma{sigma_star}"), Some(seed)))
}

/// Sample variance of the group means over the overall sample variance.
pub fn variance_ratio(y: &DataSet) -> Option<f64> {
    let s = GroupedSummary::new(y)?;
    let var = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    };
    if s.mean.len() < 2 || y.n() < 2 {
        return None;
    }
    Some(var(&s.mean) / var(&y.values))
}
