//! Two (or n) i.i.d. t observations sharing a location with a uniform prior.

use rand::RngCore;

use super::{DataSet, Model};
use crate::dist;

#[derive(Debug, Clone)]
pub struct StudentT {
    pub n: usize,
    pub df: f64,
    pub scale: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Model for StudentT {
    fn name(&self) -> String {
        "student-t-outlier".into()
    }
    fn d_shared(&self) -> usize {
        1
    }
    fn n_obs(&self) -> usize {
        self.n
    }
    fn log_prior_shared(&self, t: &[f64]) -> f64 {
        if t[0] >= self.lo && t[0] <= self.hi {
            -(self.hi - self.lo).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
    fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
        y.values.iter().map(|&v| dist::student_t_lpdf(v, p[0], self.scale, self.df)).sum()
    }
    fn sample_shared(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![self.lo + (self.hi - self.lo) * dist::uniform(rng)]
    }
    fn sample_data(&self, p: &[f64], n: usize, rng: &mut dyn RngCore) -> DataSet {
        DataSet::from_vec((0..n).map(|_| p[0] + self.scale * dist::student_t(rng, self.df)).collect())
    }
    fn log_concave_prior(&self) -> bool {
        true
    }
    fn prior_covariance(&self) -> Option<nalgebra::DMatrix<f64>> {
        Some(nalgebra::DMatrix::from_element(1, 1, (self.hi - self.lo).powi(2) / 12.0))
    }
    fn fisher(&self, _p: &[f64], n: usize) -> Option<nalgebra::DMatrix<f64>> {
        // location Fisher information of a scaled t
        let v = self.df;
        let per = (v + 1.0) / ((v + 3.0) * self.scale * self.scale);
        Some(nalgebra::DMatrix::from_element(1, 1, n as f64 * per))
    }
    fn grid_bounds(&self) -> Option<Vec<(f64, f64)>> {
        Some(vec![(self.lo, self.hi)])
    }
}
