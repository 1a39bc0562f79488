use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::{evidence, gaussian::GaussianFamily, knn::knn_entropy_weighted, mean_se, InfoEstimate, Method};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DataSet, ExpansionPair, Model};
use crate::rng;
use crate::samplers::{PosteriorDraws, SamplerKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakId {
    /// h(prior marginal of θ_I) − h(posterior marginal of θ_I).
    pub gap: f64,
    pub se: f64,
    pub epsilon: f64,
    pub weak: bool,
    pub method: Method,
}

fn project(draws: &PosteriorDraws, subset: &[usize]) -> Result<PosteriorDraws> {
    let v = draws.rows().flat_map(|r| subset.iter().map(move |&j| r[j])).collect();
    PosteriorDraws::new(v, subset.len(), draws.weights.clone(), draws.seed, draws.sampler)
}

/// ε-weak identification of θ_I given y: weak when the posterior entropy is
/// within ε of the prior entropy.
pub fn weak_id_verdict(
    model: &dyn Model,
    y: &DataSet,
    subset: &[usize],
    epsilon: f64,
    draws: Option<&PosteriorDraws>,
    seed: u64,
) -> Result<WeakId> {
    if subset.is_empty() || subset.iter().any(|&j| j >= model.d_shared()) {
        return Err(Error::Structural("subset must be a nonempty set of shared indices".into()));
    }
    if let Some(lg) = model.linear_gaussian() {
        let (_, post) = lg.posterior(y);
        let gap = 0.5
            * (linalg::logdet_psd(&linalg::submatrix(&lg.prior_cov, subset))?
                - linalg::logdet_psd(&linalg::submatrix(&post, subset))?);
        return Ok(WeakId { gap, se: 0.0, epsilon, weak: gap < epsilon, method: Method::Analytic });
    }
    let draws = draws.ok_or_else(|| Error::Unsupported("posterior draws required for a non-Gaussian model".into()))?;
    let mut r = rng::stream(seed, 0x9E1);
    let n = 100_000;
    let mut pv = Vec::with_capacity(n * subset.len());
    for _ in 0..n {
        let p = model.sample_prior(&mut r);
        pv.extend(subset.iter().map(|&j| p[j]));
    }
    let prior = PosteriorDraws::new(pv, subset.len(), None, seed, SamplerKind::Exact)?;
    let hp = knn_entropy_weighted(&prior, 4, seed)?;
    let hq = knn_entropy_weighted(&project(draws, subset)?, 4, seed ^ 1)?;
    let gap = hp.value - hq.value;
    let se = hp.std_error.hypot(hq.std_error);
    Ok(WeakId { gap, se, epsilon, weak: gap < epsilon, method: Method::Knn })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiBudget {
    pub n_outer: usize,
    /// Importance draws per θ- or joint marginal likelihood.
    pub n_mix: usize,
    /// Importance draws integrating λ out of p(y | θ, λ).
    pub n_lambda: usize,
}

impl Default for MiBudget {
    fn default() -> Self {
        Self { n_outer: 2000, n_mix: 2000, n_lambda: 200 }
    }
}

/// I_exp(θ; y) = I_base(θ; y) + Δ_exp + Δ_post.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiDecomposition {
    pub mi_base: InfoEstimate,
    pub mi_exp: InfoEstimate,
    /// I(θ; y | λ) − I(θ; y | λ₀).
    pub delta_exp: InfoEstimate,
    /// I(λ; θ) − I(λ; θ | y).
    pub delta_post: InfoEstimate,
    /// mi_exp − (mi_base + delta_exp + delta_post).
    pub identity_residual: f64,
    pub method: Method,
}

pub fn mi_decomposition(pair: &ExpansionPair, budget: &MiBudget, seed: u64) -> Result<MiDecomposition> {
    match (GaussianFamily::from_model(pair.base.as_ref()), GaussianFamily::from_model(pair.expanded.as_ref())) {
        (Ok(fb), Ok(fe)) => analytic(pair, &fb, &fe),
        _ => monte_carlo(pair, budget, seed),
    }
}

fn analytic(pair: &ExpansionPair, fb: &GaussianFamily, fe: &GaussianFamily) -> Result<MiDecomposition> {
    let d = pair.d_shared;
    let p = fe.p();
    let th: Vec<usize> = (0..d).collect();
    let lam: Vec<usize> = (d..p).collect();
    let y: Vec<usize> = (p..p + fe.x.nrows()).collect();
    let j = fe.joint(1);
    let mi_base = fb.info()?.mi.value;
    let mi_exp = j.mi(&th, &y)?;
    // I(θ; y | λ = λ₀) is the base model's MI by the expansion property
    let delta_exp = j.cmi(&th, &y, &lam)? - mi_base;
    let delta_post = j.mi(&lam, &th)? - j.cmi(&lam, &th, &y)?;
    let a = InfoEstimate::analytic;
    Ok(MiDecomposition {
        identity_residual: mi_exp - (mi_base + delta_exp + delta_post),
        mi_base: a("mi_base", mi_base),
        mi_exp: a("mi_exp", mi_exp),
        delta_exp: a("delta_exp", delta_exp),
        delta_post: a("delta_post", delta_post),
        method: Method::Analytic,
    })
}

/// Nested Monte Carlo with common random numbers: every outer draw uses the
/// same θ, the same data seed for base and expanded simulations, and the
/// same importance-sampling stream for the two θ-marginals, so terms that
/// agree structurally cancel. Each marginal likelihood is an importance
/// sampling estimate (see `evidence`).
fn monte_carlo(pair: &ExpansionPair, b: &MiBudget, seed: u64) -> Result<MiDecomposition> {
    let (base, exp) = (pair.base.as_ref(), pair.expanded.as_ref());
    if !exp.prior_independent() {
        return Err(Error::Unsupported("Monte Carlo decomposition needs θ and λ independent a priori".into()));
    }
    if b.n_outer < 2 || b.n_mix == 0 || b.n_lambda == 0 {
        return Err(Error::Domain("empty Monte Carlo budget".into()));
    }
    let n = base.n_obs();
    let join = |t: &[f64], l: &[f64]| -> Vec<f64> { t.iter().chain(l).copied().collect() };

    let terms: Vec<[f64; 3]> = (0..b.n_outer)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, 100 + i as u64);
            let th = exp.sample_shared(&mut r);
            let la = exp.sample_extra(&th, &mut r);
            let ys = rng::derive(seed, i as u64);
            let yb = base.sample_data(&th, n, &mut rng::seeded(ys));
            let full = join(&th, &la);
            let ye = exp.sample_data(&full, n, &mut rng::seeded(ys));
            let is_seed = rng::derive(seed ^ 0x15, i as u64);

            let lp_b = |t: &[f64]| base.log_prior_shared(t);
            let mut sp_b = |r: &mut dyn RngCore| base.sample_shared(r);
            let ev_b = evidence::log_evidence(&|t| base.log_lik(&yb, t), &lp_b, &mut sp_b, &th, b.n_mix, &mut rng::seeded(is_seed));
            let t_base = base.log_lik(&yb, &th) - ev_b;

            let lp_t = |t: &[f64]| exp.log_prior_shared(t);
            let mut sp_t = |r: &mut dyn RngCore| exp.sample_shared(r);
            let ll_cond = |t: &[f64]| exp.log_lik(&ye, &join(t, &la));
            let ev_c = evidence::log_evidence(&ll_cond, &lp_t, &mut sp_t, &th, b.n_mix, &mut rng::seeded(is_seed));
            let t_cond = exp.log_lik(&ye, &full) - ev_c;

            let lp_l = |l: &[f64]| exp.log_prior_extra(&join(&th, l));
            let mut sp_l = |r: &mut dyn RngCore| exp.sample_extra(&th, r);
            let ll_l = |l: &[f64]| exp.log_lik(&ye, &join(&th, l));
            let ev_th = evidence::log_evidence(&ll_l, &lp_l, &mut sp_l, &la, b.n_lambda, &mut rng::seeded(is_seed ^ 1));
            let lp_j = |p: &[f64]| exp.log_prior(p);
            let mut sp_j = |r: &mut dyn RngCore| {
                let t = exp.sample_shared(r);
                let l = exp.sample_extra(&t, r);
                join(&t, &l)
            };
            let ev_j = evidence::log_evidence(&|p| exp.log_lik(&ye, p), &lp_j, &mut sp_j, &full, b.n_mix, &mut rng::seeded(is_seed ^ 2));
            [t_base, t_cond, ev_th - ev_j]
        })
        .collect();
    if terms.iter().flatten().any(|t| !t.is_finite()) {
        return Err(Error::Reliability("non-finite information term".into()));
    }
    let col = |f: &dyn Fn(&[f64; 3]) -> f64| -> (f64, f64) { mean_se(&terms.iter().map(f).collect::<Vec<_>>()) };
    let (mb, sb) = col(&|t| t[0]);
    let (me, se_) = col(&|t| t[2]);
    let (de, sde) = col(&|t| t[1] - t[0]);
    let (dp, sdp) = col(&|t| t[2] - t[1]);
    let cfg = [("n_outer", b.n_outer as f64), ("n_mix", b.n_mix as f64), ("n_lambda", b.n_lambda as f64)];
    let m = |q: &str, v: f64, s: f64| InfoEstimate::mc(q, v, s, Method::NestedMc, &cfg);
    Ok(MiDecomposition {
        identity_residual: me - (mb + de + dp),
        mi_base: m("mi_base", mb, sb),
        mi_exp: m("mi_exp", me, se_),
        delta_exp: m("delta_exp", de, sde),
        delta_post: m("delta_post", dp, sdp),
        method: Method::NestedMc,
    })
}
