//! Posterior and predictive sampling: exact conjugate draws, dense grids
//! (d ≤ 2) and adaptive random-walk Metropolis.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DataSet, Model};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Exact,
    Grid,
    Rwm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub acceptance: Option<f64>,
    pub warmup: usize,
    pub warnings: Vec<String>,
}

/// S draws of a d-vector, row-major, optionally weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub draws: Vec<f64>,
    pub d: usize,
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn new(draws: Vec<f64>, d: usize, weights: Option<Vec<f64>>, seed: u64, sampler: SamplerKind) -> Result<Self> {
        if d == 0 || draws.is_empty() || !draws.len().is_multiple_of(d) {
            return Err(Error::Structural(format!("{} values do not form rows of length {d}", draws.len())));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite posterior draw".into()));
        }
        if let Some(w) = &weights {
            if w.len() != draws.len() / d {
                return Err(Error::Structural("one weight per draw required".into()));
            }
            if w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Domain("weights must be nonnegative".into()));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("weights sum to {s}, not 1")));
            }
        }
        Ok(Self { draws, d, weights, seed, sampler, diagnostics: Diagnostics::default() })
    }

    /// A one-atom posterior at `point`.
    pub fn single(point: &[f64]) -> Result<Self> {
        Self::new(point.to_vec(), point.len(), None, 0, SamplerKind::Exact)
    }

    pub fn len(&self) -> usize {
        self.draws.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.draws[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.d)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0 / self.len() as f64, |w| w[i])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.rows().enumerate().map(|(i, r)| self.weight(i) * f(r)).sum()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d);
        for (i, r) in self.rows().enumerate() {
            let w = self.weight(i);
            for j in 0..self.d {
                m[j] += w * r[j];
            }
        }
        m
    }

    /// Weighted covariance with the plain 1/Σw normalization.
    pub fn cov(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.d, self.d);
        for (i, r) in self.rows().enumerate() {
            let w = self.weight(i);
            for a in 0..self.d {
                for b in 0..self.d {
                    c[(a, b)] += w * (r[a] - m[a]) * (r[b] - m[b]);
                }
            }
        }
        c
    }

    /// Index drawn with probability proportional to its weight.
    pub fn pick(&self, rng: &mut dyn RngCore) -> usize {
        match &self.weights {
            None => ((dist::uniform(rng) * self.len() as f64) as usize).min(self.len() - 1),
            Some(w) => {
                let u = dist::uniform(rng);
                let mut acc = 0.0;
                for (i, &x) in w.iter().enumerate() {
                    acc += x;
                    if u < acc {
                        return i;
                    }
                }
                w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
            }
        }
    }

    /// Multinomial resampling to `n` equally weighted draws.
    pub fn resample(&self, n: usize, seed: u64) -> Result<PosteriorDraws> {
        let mut r = rng::stream(seed, 0x5E5A);
        let mut out = Vec::with_capacity(n * self.d);
        match &self.weights {
            None => {
                for _ in 0..n {
                    out.extend_from_slice(self.row(self.pick(&mut r)));
                }
            }
            Some(w) => {
                // sorted uniforms against the cumulative weights
                let mut u: Vec<f64> = (0..n).map(|_| dist::uniform(&mut r)).collect();
                u.sort_by(f64::total_cmp);
                let mut acc = w[0];
                let mut i = 0;
                let mut idx = Vec::with_capacity(n);
                for x in u {
                    while x >= acc && i + 1 < w.len() {
                        i += 1;
                        acc += w[i];
                    }
                    idx.push(i);
                }
                // undo the sort so the output is not ordered by grid position
                for k in (1..idx.len()).rev() {
                    let j = (dist::uniform(&mut r) * (k + 1) as f64) as usize;
                    idx.swap(k, j.min(k));
                }
                for i in idx {
                    out.extend_from_slice(self.row(i));
                }
            }
        }
        let mut p = PosteriorDraws::new(out, self.d, None, seed, self.sampler)?;
        p.diagnostics = self.diagnostics.clone();
        Ok(p)
    }

    /// `draw_index,weight,param_0,...`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("draw_index,weight");
        for j in 0..self.d {
            s.push_str(&format!(",param_{j}"));
        }
        s.push('\n');
        for (i, r) in self.rows().enumerate() {
            s.push_str(&format!("{i},{:?}", self.weight(i)));
            for v in r {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        s
    }

    /// Seed, sampler and diagnostics, without the draws.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "sampler": self.sampler,
            "n_draws": self.len(),
            "dim": self.d,
            "weighted": self.weights.is_some(),
            "diagnostics": self.diagnostics,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let cov = linalg::symmetrize(&cov);
        let e = linalg::sym_eigen(&cov)?;
        if e.values.iter().any(|&v| v < -1e-10) {
            return Err(Error::Numerical("posterior covariance is not PSD".into()));
        }
        let clamped = e.values.map(|v| v.max(0.0));
        let cov = &e.vectors * DMatrix::from_diagonal(&clamped) * e.vectors.transpose();
        Ok(Self { mean, cov: linalg::symmetrize(&cov) })
    }
}

pub fn exact_gaussian_posterior(model: &dyn Model, y: &DataSet) -> Result<GaussianPosterior> {
    let lg = model
        .linear_gaussian()
        .ok_or_else(|| Error::Unsupported(format!("{} has no conjugate Gaussian posterior", model.name())))?;
    let (m, c) = lg.posterior(y);
    GaussianPosterior::new(m, c)
}

/// Independent draws from the model's closed-form posterior.
pub fn exact_draws(model: &dyn Model, y: &DataSet, s: usize, seed: u64) -> Result<PosteriorDraws> {
    let mut r = rng::stream(seed, 0xE8AC);
    let v = model
        .sample_posterior_exact(y, s, &mut r)
        .ok_or_else(|| Error::Unsupported(format!("{} has no exact posterior sampler", model.name())))?;
    PosteriorDraws::new(v, model.d_total(), None, seed, SamplerKind::Exact)
}

/// Posterior weights on a regular grid of `resolution` points per dimension
/// (endpoints included).
pub fn grid_posterior(model: &dyn Model, y: &DataSet, bounds: &[(f64, f64)], resolution: usize) -> Result<PosteriorDraws> {
    let d = model.d_total();
    if d > 2 {
        return Err(Error::Unsupported(format!("grid posterior needs d ≤ 2, model has {d}")));
    }
    if bounds.len() != d {
        return Err(Error::Structural("one interval per dimension required".into()));
    }
    if bounds.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
        return Err(Error::Domain("grid bounds must be finite with lo < hi".into()));
    }
    if resolution < 2 {
        return Err(Error::Domain("resolution must be at least 2".into()));
    }
    let axis = |k: usize| -> Vec<f64> {
        let (a, b) = bounds[k];
        (0..resolution).map(|i| a + (b - a) * i as f64 / (resolution - 1) as f64).collect()
    };
    let mut pts = Vec::with_capacity(resolution.pow(d as u32) * d);
    if d == 1 {
        pts = axis(0);
    } else {
        let (a0, a1) = (axis(0), axis(1));
        for &u in &a0 {
            for &v in &a1 {
                pts.push(u);
                pts.push(v);
            }
        }
    }
    let s = pts.len() / d;
    let mut ll = vec![0.0; s];
    model.log_lik_batch(y, &pts, &mut ll);
    for (i, l) in ll.iter_mut().enumerate() {
        *l += model.log_prior(&pts[i * d..(i + 1) * d]);
    }
    let z = dist::log_sum_exp(&ll);
    if !z.is_finite() {
        return Err(Error::Numerical("posterior has no mass on the grid".into()));
    }
    let mut w: Vec<f64> = ll.iter().map(|l| (l - z).exp()).collect();
    let tot: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= tot);
    PosteriorDraws::new(pts, d, Some(w), 0, SamplerKind::Grid)
}

/// Grid over `bounds`, then once more over the box where the posterior
/// weight exceeds e⁻⁴⁰ of its maximum (padded by a cell), when that box is
/// markedly smaller. Keeps resolution when the data are informative.
fn refined_grid(model: &dyn Model, y: &DataSet, bounds: &[(f64, f64)], res: usize) -> Result<PosteriorDraws> {
    let g = grid_posterior(model, y, bounds, res)?;
    let w = g.weights.as_ref().expect("grid draws are weighted");
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let keep = wmax * (-40f64).exp();
    let mut shrunk = false;
    let inner: Vec<(f64, f64)> = bounds
        .iter()
        .enumerate()
        .map(|(j, &(a, b))| {
            let cell = (b - a) / (res - 1) as f64;
            let (lo, hi) = g
                .rows()
                .zip(w)
                .filter(|(_, &wi)| wi >= keep)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (r, _)| (l.min(r[j]), h.max(r[j])));
            let (lo, hi) = ((lo - cell).max(a), (hi + cell).min(b));
            if hi - lo < 0.5 * (b - a) {
                shrunk = true;
            }
            (lo, hi)
        })
        .collect();
    if shrunk {
        grid_posterior(model, y, &inner, res)
    } else {
        Ok(g)
    }
}

pub const TARGET_ACCEPTANCE: f64 = 0.234;

#[derive(Debug, Clone)]
pub struct RwmOutput {
    pub draws: Vec<f64>,
    pub acceptance: f64,
    pub scale: Vec<f64>,
}

/// Random-walk Metropolis on an arbitrary log density.
///
/// During warmup the global step is tuned by Robbins–Monro towards
/// [`TARGET_ACCEPTANCE`], and halfway through the per-coordinate scales are
/// reset to the running standard deviations. The proposal is frozen after
/// warmup.
pub fn rwm(
    logp: &dyn Fn(&[f64]) -> f64,
    init: &[f64],
    init_scale: &[f64],
    s: usize,
    warmup: usize,
    rng: &mut dyn RngCore,
) -> Result<RwmOutput> {
    let d = init.len();
    let mut x = init.to_vec();
    let mut lp = logp(&x);
    if !lp.is_finite() {
        return Err(Error::Domain("initial point has zero posterior density".into()));
    }
    let mut scale = init_scale.to_vec();
    let mut log_g = (2.38 / (d as f64).sqrt()).ln();
    let mut prop = vec![0.0; d];
    // Welford over warmup states
    let mut wm = vec![0.0; d];
    let mut wv = vec![0.0; d];
    let mut wn = 0.0;
    let mut out = Vec::with_capacity(s * d);
    let mut accepted = 0usize;
    for t in 0..warmup + s {
        let g = log_g.exp();
        for j in 0..d {
            prop[j] = x[j] + g * scale[j] * dist::std_normal(rng);
        }
        let lq = logp(&prop);
        let a = if lq.is_nan() { 0.0 } else { (lq - lp).min(0.0).exp() };
        let acc = dist::uniform(rng) < a;
        if acc {
            x.copy_from_slice(&prop);
            lp = lq;
        }
        if t < warmup {
            log_g += (a - TARGET_ACCEPTANCE) / ((t + 1) as f64).powf(0.6);
            if t >= warmup / 4 {
                wn += 1.0;
                for j in 0..d {
                    let dlt = x[j] - wm[j];
                    wm[j] += dlt / wn;
                    wv[j] += dlt * (x[j] - wm[j]);
                }
            }
            if t + 1 == warmup / 2 && wn > 10.0 {
                for j in 0..d {
                    let sd = (wv[j] / (wn - 1.0)).sqrt();
                    if sd.is_finite() && sd > 0.0 {
                        scale[j] = sd;
                    }
                }
                log_g = (2.38 / (d as f64).sqrt()).ln();
            }
        } else {
            accepted += usize::from(acc);
            out.extend_from_slice(&x);
        }
    }
    let g = log_g.exp();
    Ok(RwmOutput { draws: out, acceptance: accepted as f64 / s as f64, scale: scale.iter().map(|v| v * g).collect() })
}

fn acceptance_warning(acc: f64) -> Option<String> {
    (!(0.01..=0.99).contains(&acc)).then(|| format!("adaptation failure: post-warmup acceptance {acc:.4}"))
}

/// Best of a few prior draws, as a chain start.
fn initial_point(model: &dyn Model, logp: &dyn Fn(&[f64]) -> f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut best = model.sample_prior(rng);
    let mut best_lp = logp(&best);
    for _ in 0..50 {
        let p = model.sample_prior(rng);
        let l = logp(&p);
        if l > best_lp || best_lp.is_nan() {
            best = p;
            best_lp = l;
        }
    }
    best
}

pub fn rwm_sample(model: &dyn Model, y: &DataSet, s: usize, warmup: usize, seed: u64) -> Result<PosteriorDraws> {
    if s < 100 || warmup < 100 {
        return Err(Error::Domain("rwm needs S ≥ 100 and warmup ≥ 100".into()));
    }
    let mut r = rng::stream(seed, 0x4A11);
    let logp = |p: &[f64]| {
        let lp = model.log_prior(p);
        if lp == f64::NEG_INFINITY {
            lp
        } else {
            lp + model.log_lik(y, p)
        }
    };
    let init = initial_point(model, &logp, &mut r);
    let sc: Vec<f64> = match model.prior_covariance() {
        Some(c) => (0..c.nrows()).map(|i| c[(i, i)].sqrt().max(1e-6)).collect(),
        None => vec![1.0; model.d_total()],
    };
    let o = rwm(&logp, &init, &sc, s, warmup, &mut r)?;
    let mut p = PosteriorDraws::new(o.draws, model.d_total(), None, seed, SamplerKind::Rwm)?;
    p.diagnostics = Diagnostics {
        acceptance: Some(o.acceptance),
        warmup,
        warnings: acceptance_warning(o.acceptance).into_iter().collect(),
    };
    Ok(p)
}

/// Exact when the model allows, a grid for d ≤ 2 with declared bounds,
/// otherwise RWM with warmup = S.
pub fn posterior_draws(model: &dyn Model, y: &DataSet, s: usize, seed: u64) -> Result<PosteriorDraws> {
    let mut r = rng::stream(seed, 0xE8AC);
    if let Some(v) = model.sample_posterior_exact(y, s, &mut r) {
        return PosteriorDraws::new(v, model.d_total(), None, seed, SamplerKind::Exact);
    }
    if let (Some(b), true) = (model.grid_bounds(), model.d_total() <= 2) {
        let res = if model.d_total() == 1 { 2001 } else { 201 };
        let mut g = refined_grid(model, y, &b, res)?;
        g.seed = seed;
        return Ok(g);
    }
    rwm_sample(model, y, s.max(100), s.max(1000), seed)
}

/// `n_rep` replicated datasets of size `n` from the posterior predictive.
pub fn sample_ppd(model: &dyn Model, draws: &PosteriorDraws, n_rep: usize, n: usize, rng: &mut dyn RngCore) -> Vec<DataSet> {
    (0..n_rep)
        .map(|_| {
            let i = draws.pick(rng);
            model.sample_data(draws.row(i), n, rng)
        })
        .collect()
}

/// Batch-means standard error of the mean of a (possibly autocorrelated) series.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return f64::NAN;
    }
    let b = (n as f64).sqrt().floor() as usize;
    let k = n / b;
    let means: Vec<f64> = (0..k).map(|i| x[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let m = means.iter().sum::<f64>() / k as f64;
    let v = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k as f64 - 1.0);
    (v / k as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_hp, Hyper};
    use std::sync::Arc;

    fn nl() -> Arc<dyn Model> {
        builtin("normal-location", &Hyper::new()).unwrap().model().unwrap().clone()
    }

    #[test]
    fn conjugate_examples() {
        let m = nl();
        let g = exact_gaussian_posterior(m.as_ref(), &DataSet::new(vec![0.0]).unwrap()).unwrap();
        assert!(g.mean[0].abs() < 1e-15);
        assert!((g.cov[(0, 0)] - 0.5).abs() < 1e-15);

        let r = builtin("redundant-location", &Hyper::new()).unwrap();
        let g = exact_gaussian_posterior(r.model().unwrap().as_ref(), &DataSet::new(vec![1.3]).unwrap()).unwrap();
        let ev = linalg::eigenvalues(&g.cov).unwrap();
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);

        let s = builtin("split-means", &parse_hp("n=3,split=1").unwrap()).unwrap();
        let g = exact_gaussian_posterior(s.model().unwrap().as_ref(), &DataSet::new(vec![0.0; 6]).unwrap()).unwrap();
        assert!((g.cov[(0, 0)] - 0.25).abs() < 1e-12 && (g.cov[(1, 1)] - 0.25).abs() < 1e-12);

        let st = builtin("student-t-outlier", &Hyper::new()).unwrap();
        assert!(matches!(
            exact_gaussian_posterior(st.model().unwrap().as_ref(), &DataSet::new(vec![0.0, 1.0]).unwrap()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn grid_matches_conjugate() {
        let m = nl();
        let g = grid_posterior(m.as_ref(), &DataSet::new(vec![0.0]).unwrap(), &[(-8.0, 8.0)], 2001).unwrap();
        assert!(g.mean()[0].abs() < 1e-3);
        assert!((g.cov()[(0, 0)] - 0.5).abs() < 1e-3);
        let s: f64 = g.weights.as_ref().unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_student_t_is_bimodal() {
        let m = builtin("student-t-outlier", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let g = grid_posterior(m.as_ref(), &DataSet::new(vec![-10.0, 10.0]).unwrap(), &[(-15.0, 15.0)], 2001).unwrap();
        let w = g.weights.as_ref().unwrap();
        let left = (0..1000).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        let right = (1001..2001).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        assert!((g.row(left)[0] + 10.0).abs() < 1.0, "{}", g.row(left)[0]);
        assert!((g.row(right)[0] - 10.0).abs() < 1.0);
        assert!(w[1000] < 0.1 * w[left]);
    }

    #[test]
    fn grid_flat_likelihood_is_prior() {
        let m = builtin("flat", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let g = grid_posterior(m.as_ref(), &DataSet::new(vec![3.0]).unwrap(), &[(-8.0, 8.0)], 801).unwrap();
        let w = g.weights.as_ref().unwrap();
        let lp: Vec<f64> = g.rows().map(|r| m.log_prior(r)).collect();
        let z = dist::log_sum_exp(&lp);
        for (wi, l) in w.iter().zip(&lp) {
            assert!((wi - (l - z).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_rejects_high_dimension() {
        let m = builtin("grouped-expanded", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let y = m.sample_data(&[0.0, 0.0, 0.0], 4, &mut rng::seeded(1));
        assert!(matches!(grid_posterior(m.as_ref(), &y, &[(0.0, 1.0); 3], 10), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rwm_matches_oracle() {
        let m = nl();
        let y = DataSet::new(vec![0.7]).unwrap();
        let p = rwm_sample(m.as_ref(), &y, 20000, 2000, 4).unwrap();
        let acc = p.diagnostics.acceptance.unwrap();
        assert!(acc > 0.1 && acc < 0.5, "{acc}");
        let col = p.column(0);
        let se = batch_means_se(&col);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!((mean - 0.35).abs() < 3.0 * se, "{mean} ± {se}");
        assert_eq!(p, rwm_sample(m.as_ref(), &y, 20000, 2000, 4).unwrap());
    }

    #[test]
    fn rwm_without_data_recovers_prior() {
        let m = nl();
        let p = rwm_sample(m.as_ref(), &DataSet::empty(), 20000, 1000, 9).unwrap();
        let col = p.column(0);
        let se = batch_means_se(&col);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 3.0 * se);
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn rwm_rejects_tiny_budgets() {
        let m = nl();
        assert!(rwm_sample(m.as_ref(), &DataSet::empty(), 10, 100, 1).is_err());
    }

    #[test]
    fn resampling_preserves_expectations() {
        let m = nl();
        let g = grid_posterior(m.as_ref(), &DataSet::new(vec![1.0]).unwrap(), &[(-8.0, 8.0)], 1001).unwrap();
        let r = g.resample(100_000, 3).unwrap();
        let f = |t: &[f64]| (t[0]).tanh();
        let a = g.expect(f);
        let b = r.expect(f);
        assert!((a - b).abs() < 0.01, "{a} {b}");
        assert!(r.weights.is_none() && r.len() == 100_000);
    }

    #[test]
    fn ppd_variance_and_single_draw() {
        let m = nl();
        let p = exact_draws(m.as_ref(), &DataSet::new(vec![0.0]).unwrap(), 20000, 2).unwrap();
        let mut r = rng::seeded(5);
        let reps = sample_ppd(m.as_ref(), &p, 20000, 1, &mut r);
        let v: Vec<f64> = reps.iter().map(|d| d.values[0]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        // s.e. of a normal sample variance ≈ var·√(2/n)
        assert!((var - 1.5).abs() < 3.0 * 1.5 * (2.0 / 20000f64).sqrt(), "{var}");

        let one = PosteriorDraws::single(&[2.0]).unwrap();
        let reps = sample_ppd(m.as_ref(), &one, 5000, 1, &mut r);
        let mean = reps.iter().map(|d| d.values[0]).sum::<f64>() / 5000.0;
        assert!((mean - 2.0).abs() < 3.0 / 5000f64.sqrt());
    }

    #[test]
    fn draws_validation_and_csv() {
        assert!(PosteriorDraws::new(vec![1.0, f64::NAN], 1, None, 0, SamplerKind::Exact).is_err());
        assert!(PosteriorDraws::new(vec![1.0, 2.0], 1, Some(vec![0.5, 0.6]), 0, SamplerKind::Grid).is_err());
        let p = PosteriorDraws::new(vec![1.0, 2.0], 1, Some(vec![0.25, 0.75]), 0, SamplerKind::Grid).unwrap();
        assert_eq!(p.to_csv(), "draw_index,weight,param_0\n0,0.25,1.0\n1,0.75,2.0\n");
        assert!((p.mean()[0] - 1.75).abs() < 1e-15);
    }
}
