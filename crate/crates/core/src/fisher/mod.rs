//! Observed and expected Fisher information, and the bounds built on them:
//! the ψ upper bound on mutual information, the marginal trace bound with
//! its Δ_j terms, the conditional-MI trace term, dilution and the
//! identifiability/falsifiability tradeoff.

mod bounds;
mod tradeoff;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::evidence::IsPlan;
use crate::linalg;
use crate::model::{DataSet, ExpansionPair, Model};
use crate::numdiff;
use crate::rng;

pub use bounds::{
    cmi_lower_bound_analytic, cmi_trace_term, mi_upper_bound, psi, skewness_check, trace_bound_delta, MiBoundVariant,
    SkewCheck, TraceBound,
};
pub use tradeoff::{dilution_matrix, tradeoff_report, Dilution, DilutionClass, Hypotheses, TradeoffReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    Fixed,
    Prior,
    Posterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrixEstimate {
    pub matrix: DMatrix<f64>,
    /// Entrywise; zero for closed forms.
    pub std_error_matrix: DMatrix<f64>,
    pub n_mc: usize,
    pub at: Averaging,
    pub warnings: Vec<String>,
}

impl InfoMatrixEstimate {
    fn exact(matrix: DMatrix<f64>, at: Averaging) -> Self {
        let (r, c) = matrix.shape();
        Self { matrix, std_error_matrix: DMatrix::zeros(r, c), n_mc: 0, at, warnings: Vec::new() }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Which Fisher information of θ to use for an expanded model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    /// θ in p(y | θ), λ integrated out under p(λ | θ).
    Shared,
    /// All of (θ, λ).
    Full,
    /// θθ principal submatrix of the full matrix, i.e. 𝓘(θ | λ).
    SharedGivenExtra,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherBudget {
    /// Prior draws averaged over.
    pub n_prior: usize,
    /// Simulated datasets per parameter value when no closed form exists.
    pub n_mc: usize,
    /// Importance draws integrating λ out of the likelihood.
    pub n_lambda: usize,
}

impl Default for FisherBudget {
    fn default() -> Self {
        Self { n_prior: 200, n_mc: 8, n_lambda: 400 }
    }
}

/// Central-difference Hessian, retried with steps ×0.1 and ×0.01 when the
/// stencil reaches a −∞ boundary.
pub(crate) fn finite_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Result<DMatrix<f64>> {
    if !f(x).is_finite() {
        return Err(Error::Domain("log density is not finite at the evaluation point".into()));
    }
    for scale in [1.0, 0.1, 0.01] {
        let h = numdiff::hessian_scaled(f, x, scale);
        if h.iter().all(|v| v.is_finite()) {
            return Ok(linalg::symmetrize(&h));
        }
    }
    Err(Error::Domain("finite-difference stencil leaves the support of the log density".into()))
}

fn check_len(model: &dyn Model, p: &[f64]) -> Result<()> {
    if p.len() != model.d_total() {
        return Err(Error::Structural(format!("{} expects {} parameters, got {}", model.name(), model.d_total(), p.len())));
    }
    Ok(())
}

/// 𝓙(y, θ) = −∇² log p(y | θ).
pub fn observed_info_fd(model: &dyn Model, y: &DataSet, point: &[f64]) -> Result<InfoMatrixEstimate> {
    check_len(model, point)?;
    let h = finite_hessian(&|p| model.log_lik(y, p), point)?;
    Ok(InfoMatrixEstimate::exact(-h, Averaging::Fixed))
}

/// Mean and entrywise standard error.
pub(crate) fn mean_matrix(ms: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ms.len() as f64;
    let (r, c) = ms[0].shape();
    let mean = ms.iter().fold(DMatrix::zeros(r, c), |a, m| a + m) / n;
    if ms.len() < 2 {
        return (mean, DMatrix::zeros(r, c));
    }
    let var = ms.iter().fold(DMatrix::zeros(r, c), |a, m| a + (m - &mean).map(|v| v * v)) / (n - 1.0);
    (mean, var.map(|v| (v / n).sqrt()))
}

/// Eigenvalues in [−3 s.e., 0) are clamped to zero with a warning; anything
/// more negative (beyond round-off) is an error.
pub(crate) fn clamp_psd(m: DMatrix<f64>, se: &DMatrix<f64>, warnings: &mut Vec<String>) -> Result<DMatrix<f64>> {
    let e = linalg::sym_eigen(&m)?;
    let scale = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut vals = e.values.clone();
    let mut changed = false;
    for i in 0..vals.len() {
        let v = vals[i];
        if v >= 0.0 {
            continue;
        }
        let u = e.vectors.column(i);
        let mut s2 = 0.0;
        for j in 0..u.len() {
            for k in 0..u.len() {
                s2 += (u[j] * u[k] * se[(j, k)]).powi(2);
            }
        }
        let tol = 3.0 * s2.sqrt() + 1e-10 * scale.max(1e-300);
        if v < -tol {
            return Err(Error::Numerical(format!("information matrix has eigenvalue {v:.3e} beyond 3 s.e. below zero")));
        }
        if v < -1e-10 * scale {
            warnings.push(format!("eigenvalue {v:.3e} clamped to zero (within 3 s.e.)"));
        }
        vals[i] = 0.0;
        changed = true;
    }
    if !changed {
        return Ok(m);
    }
    Ok(linalg::symmetrize(&(&e.vectors * DMatrix::from_diagonal(&vals) * e.vectors.transpose())))
}

/// 𝓘(θ) = E_{y|θ} 𝓙(y, θ); closed form when the model has one, else the
/// Monte Carlo average of observed information over `n_mc` datasets.
pub fn expected_fisher(model: &dyn Model, point: &[f64], n_mc: usize, seed: u64) -> Result<InfoMatrixEstimate> {
    check_len(model, point)?;
    if let Some(f) = model.fisher(point, model.n_obs()) {
        return Ok(InfoMatrixEstimate::exact(f, Averaging::Fixed));
    }
    let (mean, se) = mc_fisher(model, point, n_mc, seed)?;
    let mut warnings = Vec::new();
    let matrix = clamp_psd(mean, &se, &mut warnings)?;
    Ok(InfoMatrixEstimate { matrix, std_error_matrix: se, n_mc, at: Averaging::Fixed, warnings })
}

fn mc_fisher(model: &dyn Model, point: &[f64], n_mc: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n_mc < 2 {
        return Err(Error::Domain("need n_mc ≥ 2 simulated datasets".into()));
    }
    let ms = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let y = model.sample_data(point, model.n_obs(), &mut rng::stream(seed, i as u64));
            Ok(observed_info_fd(model, &y, point)?.matrix)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_matrix(&ms))
}

/// Unclamped: per-draw noise averages out over the prior, and the PSD check
/// applies to the final average.
fn full_fisher_raw(model: &dyn Model, p: &[f64], n_mc: usize, seed: u64) -> Result<DMatrix<f64>> {
    match model.fisher(p, model.n_obs()) {
        Some(f) => Ok(f),
        None => Ok(mc_fisher(model, p, n_mc, seed)?.0),
    }
}

/// Per-dataset observed information of θ in the λ-marginal likelihood. The
/// λ integral reuses one importance plan per dataset, so the estimate is a
/// smooth function of θ and can be differenced.
fn marginal_fisher_mc(model: &dyn Model, theta: &[f64], budget: &FisherBudget, seed: u64) -> Result<DMatrix<f64>> {
    if !model.prior_independent() {
        return Err(Error::Unsupported("λ-marginal Fisher information needs θ and λ independent a priori".into()));
    }
    if budget.n_mc < 2 || budget.n_lambda == 0 {
        return Err(Error::Domain("need n_mc ≥ 2 and n_lambda ≥ 1".into()));
    }
    let k = model.d_extra();
    let n = model.n_obs();
    let ms = (0..budget.n_mc)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let la = model.sample_extra(theta, &mut r);
            let full: Vec<f64> = theta.iter().chain(&la).copied().collect();
            let y = model.sample_data(&full, n, &mut r);
            let join = |t: &[f64], l: &[f64]| -> Vec<f64> { t.iter().chain(l).copied().collect() };
            let lp = |l: &[f64]| model.log_prior_extra(&join(theta, l));
            let mut sp = |r: &mut dyn rand::RngCore| model.sample_extra(theta, r);
            let plan = IsPlan::build(&|l| model.log_lik(&y, &join(theta, l)), &lp, &mut sp, &la, budget.n_lambda, &mut r);
            let f = |t: &[f64]| {
                let batch = |ls: &[f64], out: &mut [f64]| {
                    let ps: Vec<f64> = ls.chunks_exact(k).flat_map(|l| join(t, l)).collect();
                    model.log_lik_batch(&y, &ps, out);
                };
                plan.log_evidence(&batch, &lp)
            };
            Ok(-finite_hessian(&f, theta)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_matrix(&ms).0)
}

/// One draw's information matrix for `block` at the full parameter `p`.
pub(crate) fn fisher_at(model: &dyn Model, block: Block, p: &[f64], budget: &FisherBudget, seed: u64) -> Result<DMatrix<f64>> {
    let d = model.d_shared();
    match block {
        Block::Full => full_fisher_raw(model, p, budget.n_mc, seed),
        Block::SharedGivenExtra => {
            let idx: Vec<usize> = (0..d).collect();
            Ok(linalg::submatrix(&full_fisher_raw(model, p, budget.n_mc, seed)?, &idx))
        }
        Block::Shared if model.d_extra() == 0 => full_fisher_raw(model, p, budget.n_mc, seed),
        Block::Shared => match model.linear_gaussian() {
            Some(lg) => Ok(lg.marginal_shared_fisher(model.n_obs())),
            None => marginal_fisher_mc(model, &p[..d], budget, seed),
        },
    }
}

/// Prior draws (full parameter vectors) paired with their information
/// matrices for `block`.
pub fn prior_fisher_samples(
    model: &dyn Model,
    block: Block,
    budget: &FisherBudget,
    seed: u64,
) -> Result<Vec<(Vec<f64>, DMatrix<f64>)>> {
    if budget.n_prior < 2 {
        return Err(Error::Domain("need n_prior ≥ 2".into()));
    }
    (0..budget.n_prior)
        .into_par_iter()
        .map(|i| {
            let p = model.sample_prior(&mut rng::stream(seed, i as u64));
            let m = fisher_at(model, block, &p, budget, rng::derive(seed ^ 0xF15, i as u64))?;
            Ok((p, m))
        })
        .collect()
}

/// E_{p(θ)} of the chosen information block.
pub fn prior_expected_fisher(model: &dyn Model, block: Block, budget: &FisherBudget, seed: u64) -> Result<InfoMatrixEstimate> {
    let s = prior_fisher_samples(model, block, budget, seed)?;
    let ms: Vec<DMatrix<f64>> = s.into_iter().map(|(_, m)| m).collect();
    let (mean, se) = mean_matrix(&ms);
    let mut warnings = Vec::new();
    let matrix = clamp_psd(mean, &se, &mut warnings)?;
    Ok(InfoMatrixEstimate { matrix, std_error_matrix: se, n_mc: budget.n_prior * budget.n_mc, at: Averaging::Prior, warnings })
}

/// Paired prior averages of tr 𝓘_b(θ) and tr of the expanded model's
/// `block` at the same θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceDrop {
    pub base: f64,
    pub base_se: f64,
    pub expanded: f64,
    pub expanded_se: f64,
    /// base − expanded.
    pub drop: f64,
    pub se: f64,
}

pub fn trace_drop(pair: &ExpansionPair, block: Block, budget: &FisherBudget, seed: u64) -> Result<TraceDrop> {
    if block == Block::Full {
        return Err(Error::Domain("trace comparison needs a θ-block".into()));
    }
    if budget.n_prior < 2 {
        return Err(Error::Domain("need n_prior ≥ 2".into()));
    }
    let (base, exp) = (pair.base.as_ref(), pair.expanded.as_ref());
    let d = pair.d_shared;
    let rows = (0..budget.n_prior)
        .into_par_iter()
        .map(|i| {
            let p = exp.sample_prior(&mut rng::stream(seed, i as u64));
            let s = rng::derive(seed ^ 0xF15, i as u64);
            let b = fisher_at(base, Block::Full, &p[..d], budget, s)?.trace();
            let e = fisher_at(exp, block, &p, budget, s ^ 1)?.trace();
            Ok([b, e, b - e])
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |j: usize| crate::info::mean_se(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
    let ((b, bs), (e, es), (dr, ds)) = (col(0), col(1), col(2));
    Ok(TraceDrop { base: b, base_se: bs, expanded: e, expanded_se: es, drop: dr, se: ds })
}

/// Covariance of the first `d` prior coordinates: closed form when the
/// model has one, else from 20 000 prior draws.
pub(crate) fn prior_cov_block(model: &dyn Model, d: usize, seed: u64) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..d).collect();
    if let Some(c) = model.prior_covariance() {
        return linalg::submatrix(&c, &idx);
    }
    let n = 20_000;
    let mut r = rng::stream(seed, 0xC0F);
    let draws: Vec<Vec<f64>> = (0..n).map(|_| model.sample_prior(&mut r)).collect();
    let mean: Vec<f64> = (0..d).map(|j| draws.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    DMatrix::from_fn(d, d, |a, b| {
        draws.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / (n - 1) as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_hp, Hyper, NegBin, Poisson};

    fn model(name: &str, hp: &str) -> std::sync::Arc<dyn Model> {
        builtin(name, &parse_hp(hp).unwrap()).unwrap().model().unwrap().clone()
    }

    #[test]
    fn observed_info_normal_location() {
        let m = model("normal-location", "n=3");
        let y = DataSet::new(vec![0.3, -1.0, 2.0]).unwrap();
        let j = observed_info_fd(m.as_ref(), &y, &[0.7]).unwrap();
        assert!((j.matrix[(0, 0)] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn observed_info_poisson_and_negbin() {
        let p = Poisson { n: 4, mu_mean: 0.0, mu_sd: 1.0 };
        let y = DataSet::new(vec![1.0, 0.0, 3.0, 2.0]).unwrap();
        let mu: f64 = 0.4;
        let j = observed_info_fd(&p, &y, &[mu]).unwrap();
        assert!((j.matrix[(0, 0)] - 4.0 * mu.exp()).abs() < 1e-5 * 4.0 * mu.exp());

        let nb = NegBin { n: 4, mu_mean: 0.0, mu_sd: 1.0, lambda_mean: 2.0, lambda_sd: 1.0 };
        let lam: f64 = 0.8;
        let j = observed_info_fd(&nb, &y, &[mu, lam]).unwrap();
        let (em, el) = (mu.exp(), lam.exp());
        let want = 4.0 * em * (1.0 - em / (em + el)) * ((y.mean() + el) / (em + el));
        assert!((j.matrix[(0, 0)] - want).abs() < 1e-5 * want, "{} {want}", j.matrix[(0, 0)]);
    }

    #[test]
    fn expected_fisher_examples() {
        let p = Poisson { n: 5, mu_mean: 0.0, mu_sd: 1.0 };
        assert_eq!(expected_fisher(&p, &[0.0], 0, 1).unwrap().matrix[(0, 0)], 5.0);
        let nb = NegBin { n: 5, mu_mean: 0.0, mu_sd: 1.0, lambda_mean: 2.0, lambda_sd: 1.0 };
        let f = expected_fisher(&nb, &[0.0, 0.0], 4000, 2).unwrap();
        let se = f.std_error_matrix[(0, 0)];
        assert!((f.matrix[(0, 0)] - 2.5).abs() < 3.0 * se, "{} ± {se}", f.matrix[(0, 0)]);
    }

    #[test]
    fn psd_clamp_rules() {
        let mut w = Vec::new();
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.01]);
        let se = DMatrix::from_element(2, 2, 0.01);
        let c = clamp_psd(m.clone(), &se, &mut w).unwrap();
        assert_eq!(c[(1, 1)], 0.0);
        assert_eq!(w.len(), 1);
        assert!(clamp_psd(m, &DMatrix::zeros(2, 2), &mut w).is_err());
    }

    #[test]
    fn linear_gaussian_marginal_fisher() {
        let b = builtin("location-nuisance", &parse_hp("sigma_lambda2=3").unwrap()).unwrap();
        let e = b.pair().unwrap().expanded.clone();
        let f = fisher_at(e.as_ref(), Block::Shared, &[0.0, 0.0], &FisherBudget::default(), 0).unwrap();
        assert!((f[(0, 0)] - 0.25).abs() < 1e-12);
        let c = fisher_at(e.as_ref(), Block::SharedGivenExtra, &[0.0, 0.0], &FisherBudget::default(), 0).unwrap();
        assert!((c[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_marginal_matches_gaussian_closed_form() {
        // drop the closed form by wrapping the model
        struct Opaque(std::sync::Arc<dyn Model>);
        impl Model for Opaque {
            fn name(&self) -> String {
                "opaque".into()
            }
            fn d_shared(&self) -> usize {
                self.0.d_shared()
            }
            fn d_extra(&self) -> usize {
                self.0.d_extra()
            }
            fn n_obs(&self) -> usize {
                self.0.n_obs()
            }
            fn log_prior_shared(&self, t: &[f64]) -> f64 {
                self.0.log_prior_shared(t)
            }
            fn log_prior_extra(&self, p: &[f64]) -> f64 {
                self.0.log_prior_extra(p)
            }
            fn log_lik(&self, y: &DataSet, p: &[f64]) -> f64 {
                self.0.log_lik(y, p)
            }
            fn sample_shared(&self, r: &mut dyn rand::RngCore) -> Vec<f64> {
                self.0.sample_shared(r)
            }
            fn sample_extra(&self, t: &[f64], r: &mut dyn rand::RngCore) -> Vec<f64> {
                self.0.sample_extra(t, r)
            }
            fn sample_data(&self, p: &[f64], n: usize, r: &mut dyn rand::RngCore) -> DataSet {
                self.0.sample_data(p, n, r)
            }
            fn log_concave_prior(&self) -> bool {
                true
            }
        }
        let b = builtin("location-nuisance", &parse_hp("n=4,sigma_lambda2=3").unwrap()).unwrap();
        let o = Opaque(b.pair().unwrap().expanded.clone());
        let budget = FisherBudget { n_prior: 2, n_mc: 400, n_lambda: 400 };
        let f = fisher_at(&o, Block::Shared, &[0.3, 0.0], &budget, 5).unwrap();
        // y_i = θ + λ + ε: 1ᵀ(I + 3·11ᵀ)⁻¹1 = 4 / 13
        assert!((f[(0, 0)] - 4.0 / 13.0).abs() < 0.03, "{f}");
    }

    #[test]
    fn poisson_negbin_trace_falls() {
        let b = builtin("poisson-negbin", &Hyper::new()).unwrap();
        let t = trace_drop(b.pair().unwrap(), Block::Shared, &FisherBudget { n_prior: 100, n_mc: 8, n_lambda: 200 }, 3).unwrap();
        assert!(t.drop > 3.0 * t.se, "{t:?}");
    }
}
