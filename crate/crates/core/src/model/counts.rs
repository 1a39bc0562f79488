//! Exchangeable count models on the log-rate scale: Poisson, and its
//! negative-binomial expansion with log-size λ (Poisson as λ → ∞).

use nalgebra::DMatrix;
use rand::RngCore;

use super::{DataSet, Model};
use crate::dist;

#[derive(Debug, Clone)]
pub struct Poisson {
    pub n: usize,
    pub mu_mean: f64,
    pub mu_sd: f64,
}

fn count_stats(y: &DataSet) -> Option<(f64, f64)> {
    let mut s = 0.0;
    let mut lf = 0.0;
    for &v in &y.values {
        if v < 0.0 || v.fract() != 0.0 {
            return None;
        }
        s += v;
        lf += dist::ln_factorial(v);
    }
    Some((s, lf))
}

impl Model for Poisson {
    fn name(&self) -> String {
        "poisson".into()
    }
    fn d_shared(&self) -> usize {
        1
    }
    fn n_obs(&self) -> usize {
        self.n
    }
    fn log_prior_shared(&self, t: &[f64]) -> f64 {
        dist::normal_lpdf(t[0], self.mu_mean, self.mu_sd)
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        match count_stats(y) {
            Some((s, lf)) => s * p[0] - y.n() as f64 * p[0].exp() - lf,
            None => f64::NEG_INFINITY,
        }
    }
    fn log_lik_batch(&self, y: &DataSet, params: &[f64], out: &mut [f64]) {
        let st = count_stats(y);
        let n = y.n() as f64;
        for (o, &mu) in out.iter_mut().zip(params) {
            *o = match st {
                Some((s, lf)) => s * mu - n * mu.exp() - lf,
                None => f64::NEG_INFINITY,
            };
        }
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![dist::normal(rng, self.mu_mean, self.mu_sd)]
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        let r = p[0].exp();
        DataSet::from_vec((0..n).map(|_| dist::poisson(rng, r)).collect())
    }
    fn log_concave_prior(&self) -> bool {
        true
    }
    fn fisher(&self, p: &[f64], n: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, n as f64 * p[0].exp()))
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.mu_sd * self.mu_sd))
    }
    fn grid_bounds(&self) -> Option<Vec<(f64, f64)>> {
        Some(vec![(self.mu_mean - 8.0 * self.mu_sd, self.mu_mean + 8.0 * self.mu_sd)])
    }
}

/// Negative binomial with mean e^μ and size e^λ.
#[derive(Debug, Clone)]
pub struct NegBin {
    pub n: usize,
    pub mu_mean: f64,
    pub mu_sd: f64,
    pub lambda_mean: f64,
    pub lambda_sd: f64,
}

/// log NB(y | mean e^μ, size e^λ), arranged so that λ → ∞ (even past
/// overflow of e^λ) reduces to the Poisson log-pmf without cancellation.
pub fn negbin_lpmf(y: f64, mu: f64, lambda: f64) -> f64 {
    if y < 0.0 || y.fract() != 0.0 {
        return f64::NEG_INFINITY;
    }
    let m = mu.exp();
    let inv_r = (-lambda).exp();
    let x = (mu - lambda).exp();
    let mut acc = 0.0;
    let k_max = y as u64;
    for k in 0..k_max {
        acc += (k as f64 * inv_r).ln_1p();
    }
    let l1p = x.ln_1p();
    // r·log1p(m/r) = m·log1p(x)/x, → m as x → 0
    let r_term = if x < 1e-300 { m } else { m * l1p / x };
    acc + y * mu - y * l1p - r_term - dist::ln_factorial(y)
}

impl Model for NegBin {
    fn name(&self) -> String {
        "negbin".into()
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
        dist::normal_lpdf(t[0], self.mu_mean, self.mu_sd)
    }
    fn log_prior_extra(&self, p: &[f64]) -> f64 {
        dist::normal_lpdf(p[1], self.lambda_mean, self.lambda_sd)
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        y.values.iter().map(|&v| negbin_lpmf(v, p[0], p[1])).sum()
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![dist::normal(rng, self.mu_mean, self.mu_sd)]
    }
    fn sample_extra(&self, _t: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![dist::normal(rng, self.lambda_mean, self.lambda_sd)]
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        let m = p[0].exp();
        let r = p[1].exp();
        let v = (0..n)
            .map(|_| {
                let rate = if r.is_finite() && r < 1e12 { dist::gamma(rng, r, r / m) } else { m };
                dist::poisson(rng, rate)
            })
            .collect();
        DataSet::from_vec(v)
    }
    fn log_concave_prior(&self) -> bool {
        true
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            self.mu_sd * self.mu_sd,
            self.lambda_sd * self.lambda_sd,
        ])))
    }
    fn grid_bounds(&self) -> Option<Vec<(f64, f64)>> {
        Some(vec![
            (self.mu_mean - 8.0 * self.mu_sd, self.mu_mean + 8.0 * self.mu_sd),
            (self.lambda_mean - 8.0 * self.lambda_sd, self.lambda_mean + 8.0 * self.lambda_sd),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    fn naive(y: f64, mu: f64, lambda: f64) -> f64 {
        let (m, r) = (mu.exp(), lambda.exp());
        ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0) + y * (m / (m + r)).ln() + r * (r / (m + r)).ln()
    }

    #[test]
    fn stable_pmf_agrees_with_textbook_form() {
        for &(y, mu, l) in &[(0.0, 0.0, 0.0), (3.0, 0.5, -1.0), (7.0, 1.2, 2.0), (12.0, 2.0, 0.3)] {
            assert!((negbin_lpmf(y, mu, l) - naive(y, mu, l)).abs() < 1e-10, "{y} {mu} {l}");
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        let s: f64 = (0..400).map(|k| negbin_lpmf(k as f64, 1.0, -0.5).exp()).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn poisson_limit_is_exact_past_overflow() {
        let p = Poisson { n: 1, mu_mean: 0.0, mu_sd: 1.0 };
        let y = DataSet::new(vec![4.0]).unwrap();
        assert_eq!(negbin_lpmf(4.0, 0.3, 1e4), p.log_lik(&y, &[0.3]));
    }
}
