//! log ∫ p(y|φ) p(φ) dφ by importance sampling from a defensive mixture of
//! a Laplace-centred multivariate t and the prior. Prior-only mixtures are
//! badly biased once the likelihood is much narrower than the prior.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use statrs::function::gamma::ln_gamma;

use crate::dist;
use crate::numdiff;

const DF: f64 = 4.0;
const INFLATE: f64 = 1.2;

struct MvT {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    chol_inv: DMatrix<f64>,
    log_norm: f64,
}

impl MvT {
    fn new(mean: &[f64], cov: DMatrix<f64>) -> Option<Self> {
        let d = mean.len() as f64;
        let l = cov.cholesky()?.l();
        let chol_inv = l.clone().try_inverse()?;
        let logdet_l: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
        let log_norm = ln_gamma(0.5 * (DF + d)) - ln_gamma(0.5 * DF) - 0.5 * d * (DF * std::f64::consts::PI).ln() - logdet_l;
        Some(Self { mean: DVector::from_column_slice(mean), chol: l, chol_inv, log_norm })
    }

    fn lpdf(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let z = &self.chol_inv * (DVector::from_column_slice(x) - &self.mean);
        self.log_norm - 0.5 * (DF + d) * (1.0 + z.norm_squared() / DF).ln()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| dist::std_normal(rng));
        let w = (DF / dist::gamma(rng, 0.5 * DF, 0.5)).sqrt();
        (&self.mean + &self.chol * z * w).as_slice().to_vec()
    }
}

/// Fixed importance draws with their proposal log-densities. Reusing one
/// plan across nearby targets keeps the estimate smooth in them, which
/// finite differences rely on.
pub(crate) struct IsPlan {
    pub draws: Vec<f64>,
    pub log_q: Vec<f64>,
}

impl IsPlan {
    /// `init` seeds the mode search only; the estimate of p(y) is unbiased
    /// for any proposal, so the choice affects variance, not the target.
    pub fn build(
        log_lik: &dyn Fn(&[f64]) -> f64,
        log_prior: &dyn Fn(&[f64]) -> f64,
        sample_prior: &mut dyn FnMut(&mut dyn RngCore) -> Vec<f64>,
        init: &[f64],
        n_is: usize,
        rng: &mut dyn RngCore,
    ) -> Self {
        let joint = |p: &[f64]| log_lik(p) + log_prior(p);
        let mode = numdiff::maximize(&joint, init, 50);
        let neg_h = -numdiff::hessian(&joint, &mode);
        let prop = if neg_h.iter().all(|v| v.is_finite()) {
            neg_h.cholesky().and_then(|c| MvT::new(&mode, c.inverse() * (INFLATE * INFLATE)))
        } else {
            None
        };
        let half = 0.5f64.ln();
        let mut draws = Vec::with_capacity(n_is * init.len());
        let mut log_q = Vec::with_capacity(n_is);
        for _ in 0..n_is {
            let x = match &prop {
                Some(q) if dist::uniform(rng) < 0.5 => q.sample(rng),
                _ => sample_prior(rng),
            };
            let lp = log_prior(&x);
            log_q.push(match &prop {
                Some(q) if lp > f64::NEG_INFINITY => dist::log_sum_exp(&[half + q.lpdf(&x), half + lp]),
                Some(q) => half + q.lpdf(&x),
                None => lp,
            });
            draws.extend(x);
        }
        Self { draws, log_q }
    }

    /// log of the importance-sampling average of p(y|φ)p(φ)/q(φ);
    /// `log_lik_batch` fills one value per draw.
    pub fn log_evidence(&self, log_lik_batch: &dyn Fn(&[f64], &mut [f64]), log_prior: &dyn Fn(&[f64]) -> f64) -> f64 {
        let n = self.log_q.len();
        let d = self.draws.len() / n;
        let mut lw = vec![0.0; n];
        log_lik_batch(&self.draws, &mut lw);
        for ((w, x), lq) in lw.iter_mut().zip(self.draws.chunks_exact(d)).zip(&self.log_q) {
            let lp = log_prior(x);
            *w = if lp == f64::NEG_INFINITY { lp } else { *w + lp - lq };
        }
        dist::log_sum_exp(&lw) - (n as f64).ln()
    }
}

pub(crate) fn log_evidence(
    log_lik: &dyn Fn(&[f64]) -> f64,
    log_prior: &dyn Fn(&[f64]) -> f64,
    sample_prior: &mut dyn FnMut(&mut dyn RngCore) -> Vec<f64>,
    init: &[f64],
    n_is: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    let plan = IsPlan::build(log_lik, log_prior, sample_prior, init, n_is, rng);
    let d = init.len();
    let batch = |xs: &[f64], out: &mut [f64]| {
        for (o, x) in out.iter_mut().zip(xs.chunks_exact(d)) {
            *o = log_lik(x);
        }
    };
    plan.log_evidence(&batch, log_prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn conjugate_normal_evidence() {
        // y ~ N(θ, 0.1²) for 20 observations, θ ~ N(0, 3²)
        let y: Vec<f64> = (0..20).map(|i| 1.0 + 0.01 * (i as f64 - 9.5)).collect();
        let s = 0.1;
        let ll = |p: &[f64]| y.iter().map(|&v| dist::normal_lpdf(v, p[0], s)).sum::<f64>();
        let lp = |p: &[f64]| dist::normal_lpdf(p[0], 0.0, 3.0);
        let mut sp = |r: &mut dyn RngCore| vec![dist::normal(r, 0.0, 3.0)];
        let mut r = rng::seeded(4);
        let got = log_evidence(&ll, &lp, &mut sp, &[0.0], 2000, &mut r);
        // closed form via the sufficient statistic
        let n = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let ss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        let want = -0.5 * (n - 1.0) * (2.0 * std::f64::consts::PI * s * s).ln() - 0.5 * n.ln() - ss / (2.0 * s * s)
            + dist::normal_lpdf(ybar, 0.0, (9.0 + s * s / n).sqrt());
        assert!((got - want).abs() < 0.01, "{got} {want}");
    }
}
