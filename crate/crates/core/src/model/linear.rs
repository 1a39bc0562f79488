//! y = Xβ + σε with a Gaussian prior on β. Every closed-form example in the
//! crate is an instance of this family.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{DataSet, Model};
use crate::dist::{self, LN_2PI};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub name: String,
    /// Design rows; datasets of other sizes reuse them cyclically.
    pub x: DMatrix<f64>,
    pub noise_sd: f64,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    pub d_shared: usize,
    chol: DMatrix<f64>,
    prior_prec: DMatrix<f64>,
    // shared marginal and extra|shared conditional
    shared_prec: DMatrix<f64>,
    shared_logdet: f64,
    cond_gain: DMatrix<f64>,
    cond_chol: DMatrix<f64>,
    cond_prec: DMatrix<f64>,
    cond_logdet: f64,
}

impl LinearGaussian {
    pub fn new(
        name: impl Into<String>,
        x: DMatrix<f64>,
        noise_sd: f64,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
        d_shared: usize,
    ) -> Self {
        let p = x.ncols();
        assert_eq!(prior_mean.len(), p);
        assert_eq!(prior_cov.shape(), (p, p));
        assert!(d_shared <= p && noise_sd > 0.0);
        let chol = prior_cov.clone().cholesky().expect("prior covariance must be SPD").l();
        let prior_prec = linalg::inverse_spd(&prior_cov).expect("SPD prior");
        let s: Vec<usize> = (0..d_shared).collect();
        let e: Vec<usize> = (d_shared..p).collect();
        let sss = linalg::submatrix(&prior_cov, &s);
        let shared_prec = linalg::inverse_spd(&sss).expect("SPD block");
        let shared_logdet = linalg::logdet_psd(&sss).unwrap();
        let ses = linalg::block(&prior_cov, &e, &s);
        let cond_gain = &ses * &shared_prec;
        let cond_cov = linalg::submatrix(&prior_cov, &e) - &cond_gain * ses.transpose();
        let (cond_chol, cond_prec, cond_logdet) = if e.is_empty() {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), 0.0)
        } else {
            (
                cond_cov.clone().cholesky().expect("SPD conditional").l(),
                linalg::inverse_spd(&cond_cov).unwrap(),
                linalg::logdet_psd(&cond_cov).unwrap(),
            )
        };
        Self {
            name: name.into(),
            x,
            noise_sd,
            prior_mean,
            prior_cov,
            d_shared,
            chol,
            prior_prec,
            shared_prec,
            shared_logdet,
            cond_gain,
            cond_chol,
            cond_prec,
            cond_logdet,
        }
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn design(&self, n: usize) -> DMatrix<f64> {
        let r = self.x.nrows();
        DMatrix::from_fn(n, self.p(), |i, j| self.x[(i % r, j)])
    }

    fn row(&self, i: usize) -> nalgebra::RowDVector<f64> {
        self.x.row(i % self.x.nrows()).into_owned()
    }

    /// Exact posterior (mean, covariance) given `y`.
    pub fn posterior(&self, y: &DataSet) -> (DVector<f64>, DMatrix<f64>) {
        let x = self.design(y.n());
        let s2 = self.noise_sd * self.noise_sd;
        let prec = &self.prior_prec + x.transpose() * &x / s2;
        let cov = linalg::symmetrize(&linalg::inverse_spd(&prec).expect("posterior precision SPD"));
        let yv = DVector::from_column_slice(&y.values);
        let mean = &cov * (&self.prior_prec * &self.prior_mean + x.transpose() * yv / s2);
        (mean, cov)
    }

    /// Posterior covariance, which does not depend on the observed values.
    pub fn posterior_cov(&self, n: usize) -> DMatrix<f64> {
        let x = self.design(n);
        let prec = &self.prior_prec + x.transpose() * &x / (self.noise_sd * self.noise_sd);
        linalg::symmetrize(&linalg::inverse_spd(&prec).expect("posterior precision SPD"))
    }

    /// Fisher information of θ in p(y | θ) = ∫ p(y | θ, λ) p(λ | θ) dλ for
    /// `n` observations: (X_θ + X_λ G)ᵀ (σ²I + X_λ C X_λᵀ)⁻¹ (X_θ + X_λ G),
    /// with λ | θ ~ N(· + Gθ, C).
    pub fn marginal_shared_fisher(&self, n: usize) -> DMatrix<f64> {
        let x = self.design(n);
        let d = self.d_shared;
        let k = self.p() - d;
        let xt = x.columns(0, d).into_owned();
        if k == 0 {
            return xt.transpose() * &xt / (self.noise_sd * self.noise_sd);
        }
        let xl = x.columns(d, k).into_owned();
        let c = &self.cond_chol * self.cond_chol.transpose();
        let v = DMatrix::identity(n, n) * self.noise_sd.powi(2) + &xl * c * xl.transpose();
        let a = xt + xl * &self.cond_gain;
        linalg::symmetrize(&(a.transpose() * linalg::inverse_spd(&v).expect("marginal covariance SPD") * a))
    }

    fn mvn_quad(prec: &DMatrix<f64>, logdet: f64, dx: &DVector<f64>) -> f64 {
        let k = dx.len() as f64;
        -0.5 * (k * LN_2PI + logdet + dx.dot(&(prec * dx)))
    }
}

impl Model for LinearGaussian {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn d_shared(&self) -> usize {
        self.d_shared
    }
    fn d_extra(&self) -> usize {
        self.p() - self.d_shared
    }
    fn n_obs(&self) -> usize {
        self.x.nrows()
    }
    fn log_prior_shared(&self, theta: &[f64]) -> f64 {
        let m = self.prior_mean.rows(0, self.d_shared);
        let dx = DVector::from_column_slice(theta) - m;
        Self::mvn_quad(&self.shared_prec, self.shared_logdet, &dx)
    }
    fn log_prior_extra(&self, p: &[f64]) -> f64 {
        let d = self.d_shared;
        let k = self.p() - d;
        if k == 0 {
            return 0.0;
        }
        let th = DVector::from_column_slice(&p[..d]) - self.prior_mean.rows(0, d);
        let mean = self.prior_mean.rows(d, k) + &self.cond_gain * th;
        let dx = DVector::from_column_slice(&p[d..]) - mean;
        Self::mvn_quad(&self.cond_prec, self.cond_logdet, &dx)
    }
    fn prior_independent(&self) -> bool {
        self.cond_gain.iter().all(|&g| g == 0.0)
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        let b = DVector::from_column_slice(p);
        let s = self.noise_sd;
        y.values
            .iter()
            .enumerate()
            .map(|(i, &yi)| dist::normal_lpdf(yi, (self.row(i) * &b)[0], s))
            .sum()
    }
    fn log_lik_batch(&self, y: &DataSet, params: &[f64], out: &mut [f64]) {
        let n = y.n();
        let x = self.design(n);
        let yv = DVector::from_column_slice(&y.values);
        let xty = x.transpose() * &yv;
        let xtx = x.transpose() * &x;
        let yty = yv.dot(&yv);
        let s2 = self.noise_sd * self.noise_sd;
        let c = -0.5 * n as f64 * LN_2PI - n as f64 * self.noise_sd.ln();
        let p = self.p();
        for (o, b) in out.iter_mut().zip(params.chunks_exact(p)) {
            let mut quad = yty;
            for i in 0..p {
                quad -= 2.0 * b[i] * xty[i];
                for j in 0..p {
                    quad += b[i] * xtx[(i, j)] * b[j];
                }
            }
            *o = c - 0.5 * quad.max(0.0) / s2;
        }
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.d_shared;
        let l = linalg::submatrix(&self.prior_cov, &(0..d).collect::<Vec<_>>())
            .cholesky()
            .expect("SPD")
            .l();
        let z = DVector::from_fn(d, |_, _| dist::std_normal(rng));
        (self.prior_mean.rows(0, d) + l * z).iter().copied().collect()
    }
    fn sample_extra(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.d_shared;
        let k = self.p() - d;
        if k == 0 {
            return Vec::new();
        }
        let th = DVector::from_column_slice(theta) - self.prior_mean.rows(0, d);
        let z = DVector::from_fn(k, |_, _| dist::std_normal(rng));
        (self.prior_mean.rows(d, k) + &self.cond_gain * th + &self.cond_chol * z).iter().copied().collect()
    }
    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z = DVector::from_fn(self.p(), |_, _| dist::std_normal(rng));
        (&self.prior_mean + &self.chol * z).iter().copied().collect()
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        let b = DVector::from_column_slice(p);
        let v = (0..n).map(|i| (self.row(i) * &b)[0] + self.noise_sd * dist::std_normal(rng)).collect();
        DataSet::from_vec(v)
    }
    fn log_concave_prior(&self) -> bool {
        true
    }
    fn fisher(&self, _p: &[f64], n: usize) -> Option<DMatrix<f64>> {
        let x = self.design(n);
        Some(x.transpose() * &x / (self.noise_sd * self.noise_sd))
    }
    fn prior_covariance(&self) -> Option<DMatrix<f64>> {
        Some(self.prior_cov.clone())
    }
    fn linear_gaussian(&self) -> Option<&LinearGaussian> {
        Some(self)
    }
    fn sample_posterior_exact(&self, y: &DataSet, s: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let (m, c) = self.posterior(y);
        let l = c.cholesky()?.l();
        let p = self.p();
        let mut out = Vec::with_capacity(s * p);
        for _ in 0..s {
            let z = DVector::from_fn(p, |_, _| dist::std_normal(rng));
            out.extend((&m + &l * z).iter());
        }
        Some(out)
    }
    fn grid_bounds(&self) -> Option<Vec<(f64, f64)>> {
        Some(
            (0..self.p())
                .map(|i| {
                    let sd = self.prior_cov[(i, i)].sqrt();
                    (self.prior_mean[i] - 8.0 * sd, self.prior_mean[i] + 8.0 * sd)
                })
                .collect(),
        )
    }
}
