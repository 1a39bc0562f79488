//! Linear regression with intercept and log noise variance τ, optionally
//! expanded by one extra predictor z with coefficient λ.
//!
//! θ = (τ, β_1..β_m, α), then λ when `with_z`.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{DataSet, Model};
use crate::dist::{self, LN_2PI};
use crate::rng;

#[derive(Debug, Clone)]
pub struct LinRegAddPred {
    /// n × m, centered.
    pub x: DMatrix<f64>,
    /// Centered extra predictor.
    pub z: DVector<f64>,
    pub with_z: bool,
    pub tau_sd: f64,
    pub beta_sd: f64,
    pub alpha_sd: f64,
    pub lambda_sd: f64,
}

/// Centered, orthogonal columns of squared norm n (sample variance 1 with
/// the 1/n convention), generated from a fixed seed.
fn orthonormal_centered(n: usize, k: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut r = rng::seeded(seed);
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut basis = vec![ones];
    let mut out = Vec::new();
    while out.len() < k {
        let mut v = DVector::from_fn(n, |_, _| dist::std_normal(&mut r));
        for b in &basis {
            let c = v.dot(b);
            v -= b * c;
        }
        let nv = v.norm();
        if nv < 1e-8 {
            continue;
        }
        v /= nv;
        basis.push(v.clone());
        out.push(v * (n as f64).sqrt());
    }
    out
}

impl LinRegAddPred {
    /// `rho[j]` is the sample correlation of predictor j with z.
    pub fn with_correlations(n: usize, rho: &[f64], with_z: bool, seed: u64) -> Self {
        let m = rho.len();
        let u = orthonormal_centered(n, m + 1, seed);
        let z = u[0].clone();
        let x = DMatrix::from_fn(n, m, |i, j| rho[j] * u[0][i] + (1.0 - rho[j] * rho[j]).sqrt() * u[j + 1][i]);
        Self { x, z, with_z, tau_sd: 0.5, beta_sd: 1.0, alpha_sd: 1.0, lambda_sd: 1.0 }
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Full design [X, 1, z?] matching the coefficient layout after τ.
    pub fn full_design(&self) -> DMatrix<f64> {
        let n = self.n();
        let m = self.m();
        let k = m + 1 + usize::from(self.with_z);
        DMatrix::from_fn(n, k, |i, j| {
            if j < m {
                self.x[(i, j)]
            } else if j == m {
                1.0
            } else {
                self.z[i]
            }
        })
    }

    fn coef(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&p[1..])
    }

    /// Population (1/n) covariance, as in the usual sample-moment notation.
    pub fn cov(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.mean(), b.mean());
        a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
    }
}

impl Model for LinRegAddPred {
    fn name(&self) -> String {
        if self.with_z { "linreg-addpred" } else { "linreg-base" }.into()
    }
    fn d_shared(&self) -> usize {
        self.m() + 2
    }
    fn d_extra(&self) -> usize {
        usize::from(self.with_z)
    }
    fn n_obs(&self) -> usize {
        self.n()
    }
    fn log_prior_shared(&self, t: &[f64]) -> f64 {
        let m = self.m();
        dist::normal_lpdf(t[0], 0.0, self.tau_sd)
            + t[1..=m].iter().map(|&b| dist::normal_lpdf(b, 0.0, self.beta_sd)).sum::<f64>()
            + dist::normal_lpdf(t[m + 1], 0.0, self.alpha_sd)
    }
    fn log_prior_extra(&self, p: &[f64]) -> f64 {
        if self.with_z {
            dist::normal_lpdf(p[self.m() + 2], 0.0, self.lambda_sd)
        } else {
            0.0
        }
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        let mut out = [0.0];
        self.log_lik_batch(y, p, &mut out);
        out[0]
    }
    fn log_lik_batch(&self, y: &DataSet, params: &[f64], out: &mut [f64]) {
        let n = y.n();
        if n != self.n() {
            out.iter_mut().for_each(|o| *o = f64::NEG_INFINITY);
            return;
        }
        let a = self.full_design();
        let yv = DVector::from_column_slice(&y.values);
        let aty = a.transpose() * &yv;
        let ata = a.transpose() * &a;
        let yty = yv.dot(&yv);
        let d = self.d_total();
        for (o, p) in out.iter_mut().zip(params.chunks_exact(d)) {
            let b = self.coef(p);
            let rss = (yty - 2.0 * b.dot(&aty) + b.dot(&(&ata * &b))).max(0.0);
            let tau = p[0];
            *o = -0.5 * n as f64 * (LN_2PI + tau) - 0.5 * rss * (-tau).exp();
        }
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let m = self.m();
        let mut t = vec![dist::normal(rng, 0.0, self.tau_sd)];
        t.extend((0..m).map(|_| dist::normal(rng, 0.0, self.beta_sd)));
        t.push(dist::normal(rng, 0.0, self.alpha_sd));
        t
    }
    fn sample_extra(&self, _t: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        if self.with_z {
            vec![dist::normal(rng, 0.0, self.lambda_sd)]
        } else {
            Vec::new()
        }
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        assert_eq!(n, self.n(), "regression datasets have a fixed design");
        let a = self.full_design();
        let mean = a * self.coef(p);
        let sd = (0.5 * p[0]).exp();
        DataSet::from_vec(mean.iter().map(|&mu| mu + sd * dist::std_normal(rng)).collect())
    }
    fn log_concave_prior(&self) -> bool {
        true
    }
    fn fisher(&self, p: &[f64], _n: usize) -> Option<DMatrix<f64>> {
        let a = self.full_design();
        let k = a.ncols();
        let w = (-p[0]).exp();
        let mut f = DMatrix::zeros(k + 1, k + 1);
        f[(0, 0)] = 0.5 * self.n() as f64;
        f.view_mut((1, 1), (k, k)).copy_from(&(a.transpose() * &a * w));
        Some(f)
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        let m = self.m();
        let mut v = vec![self.tau_sd.powi(2)];
        v.extend(std::iter::repeat_n(self.beta_sd.powi(2), m));
        v.push(self.alpha_sd.powi(2));
        if self.with_z {
            v.push(self.lambda_sd.powi(2));
        }
        Some(DMatrix::from_diagonal(&DVector::from_vec(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictors_have_requested_moments() {
        let m = LinRegAddPred::with_correlations(20, &[0.7, 0.0], true, 1);
        let z = &m.z;
        assert!(z.mean().abs() < 1e-12);
        assert!((LinRegAddPred::cov(z, z) - 1.0).abs() < 1e-12);
        let x0 = m.x.column(0).into_owned();
        let x1 = m.x.column(1).into_owned();
        assert!((LinRegAddPred::cov(&x0, z) - 0.7).abs() < 1e-12);
        assert!(LinRegAddPred::cov(&x1, z).abs() < 1e-12);
        assert!((LinRegAddPred::cov(&x0, &x0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_matches_direct_sum() {
        let m = LinRegAddPred::with_correlations(8, &[0.5], true, 2);
        let mut r = rng::seeded(1);
        let p = m.sample_prior(&mut r);
        let y = m.sample_data(&p, 8, &mut r);
        let a = m.full_design();
        let mu = &a * DVector::from_column_slice(&p[1..]);
        let sd = (0.5 * p[0]).exp();
        let direct: f64 = y.values.iter().zip(mu.iter()).map(|(&v, &u)| dist::normal_lpdf(v, u, sd)).sum();
        assert!((m.log_lik(&y, &p) - direct).abs() < 1e-9);
    }
}
