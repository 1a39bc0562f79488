//! Normal observations with unknown mean θ₁ and precision θ₂ under a
//! normal-gamma prior NG(μ₀, κ, α, β). The extra coordinate is ℓ = log θ₂.

use nalgebra::DMatrix;
use rand::RngCore;
use super::{DataSet, Model};
use crate::dist::{self, LN_2PI};

#[derive(Debug, Clone)]
pub struct NormalGamma {
    pub n: usize,
    pub mu0: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NormalGamma {
    /// NG(0, v, 2, v): θ₁ has prior variance 1 and θ₂⁻¹ has prior mean v.
    pub fn with_mean_variance(n: usize, v: f64) -> Self {
        Self { n, mu0: 0.0, kappa: v, alpha: 2.0, beta: v }
    }

    /// Posterior hyperparameters after observing `y`.
    pub fn update(&self, y: &DataSet) -> (f64, f64, f64, f64) {
        let n = y.n() as f64;
        if n == 0.0 {
            return (self.mu0, self.kappa, self.alpha, self.beta);
        }
        let ybar = y.mean();
        let ss: f64 = y.values.iter().map(|v| (v - ybar) * (v - ybar)).sum();
        let kn = self.kappa + n;
        let mn = (self.kappa * self.mu0 + n * ybar) / kn;
        let an = self.alpha + 0.5 * n;
        let bn = self.beta + 0.5 * ss + self.kappa * n * (ybar - self.mu0).powi(2) / (2.0 * kn);
        (mn, kn, an, bn)
    }
}

impl Model for NormalGamma {
    fn name(&self) -> String {
        "normal-gamma".into()
    }
    fn d_shared(&self) -> usize {
        1
    }
    fn d_extra(&self) -> usize {
        1
    }
    fn n_obs(&self) -> usize {
        self.n
    }
    fn log_prior_shared(&self, t: &[f64]) -> f64 {
        // marginal of θ₁ is t_{2α}(μ₀, sqrt(β/(ακ)))
        let scale = (self.beta / (self.alpha * self.kappa)).sqrt();
        dist::student_t_lpdf(t[0], self.mu0, scale, 2.0 * self.alpha)
    }
    fn log_prior_extra(&self, p: &[f64]) -> f64 {
        let a = self.alpha + 0.5;
        let b = self.beta + 0.5 * self.kappa * (p[0] - self.mu0).powi(2);
        dist::log_gamma_lpdf(p[1], a, b)
    }
    fn prior_independent(&self) -> bool {
        false
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        let mut o = [0.0];
        self.log_lik_batch(y, p, &mut o);
        o[0]
    }
    fn log_lik_batch(&self, y: &DataSet, params: &[f64], out: &mut [f64]) {
        let n = y.n() as f64;
        let s1: f64 = y.values.iter().sum();
        let s2: f64 = y.values.iter().map(|v| v * v).sum();
        for (o, p) in out.iter_mut().zip(params.chunks_exact(2)) {
            let (m, l) = (p[0], p[1]);
            let q = (s2 - 2.0 * m * s1 + n * m * m).max(0.0);
            *o = 0.5 * n * (l - LN_2PI) - 0.5 * l.exp() * q;
        }
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let prec = dist::gamma(rng, self.alpha, self.beta);
        vec![dist::normal(rng, self.mu0, 1.0 / (self.kappa * prec).sqrt())]
    }
    fn sample_extra(&self, t: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let b = self.beta + 0.5 * self.kappa * (t[0] - self.mu0).powi(2);
        vec![dist::gamma(rng, self.alpha + 0.5, b).ln()]
    }
    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let prec = dist::gamma(rng, self.alpha, self.beta);
        vec![dist::normal(rng, self.mu0, 1.0 / (self.kappa * prec).sqrt()), prec.ln()]
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        let sd = (-0.5 * p[1]).exp();
        DataSet::from_vec((0..n).map(|_| dist::normal(rng, p[0], sd)).collect())
    }
    fn log_concave_prior(&self) -> bool {
        false
    }
    fn fisher(&self, p: &[f64], n: usize) -> Option<DMatrix<f64>> {
        let n = n as f64;
        Some(DMatrix::from_row_slice(2, 2, &[n * p[1].exp(), 0.0, 0.0, 0.5 * n]))
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        // Var θ₁ = β/(κ(α−1)); ℓ = log θ₂ has variance trigamma(α); uncorrelated by symmetry
        let v1 = self.beta / (self.kappa * (self.alpha - 1.0));
        let v2 = dist::trigamma(self.alpha);
        Some(DMatrix::from_row_slice(2, 2, &[v1, 0.0, 0.0, v2]))
    }
    fn sample_posterior_exact(&self, y: &DataSet, s: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let (mn, kn, an, bn) = self.update(y);
        let mut out = Vec::with_capacity(2 * s);
        for _ in 0..s {
            let prec = dist::gamma(rng, an, bn);
            out.push(dist::normal(rng, mn, 1.0 / (kn * prec).sqrt()));
            out.push(prec.ln());
        }
        Some(out)
    }
}
