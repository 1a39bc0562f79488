use rayon::prelude::*;

use super::{mean_se, InfoEstimate, Method};
use crate::dist;
use crate::error::{Error, Result};
use crate::model::{DataSet, Model};
use crate::rng;
use crate::samplers::{self, PosteriorDraws};

/// log p(y_rep | y) as the weighted mixture of sampling densities over the
/// draws. −∞ means no draw supports `y_rep`.
pub fn ppd_logdensity(y_rep: &DataSet, draws: &PosteriorDraws, model: &dyn Model) -> f64 {
    let s = draws.len();
    let mut ll = vec![0.0; s];
    model.log_lik_batch(y_rep, &draws.draws, &mut ll);
    match &draws.weights {
        None => dist::log_sum_exp(&ll) - (s as f64).ln(),
        Some(w) => {
            for (l, &wi) in ll.iter_mut().zip(w) {
                *l += wi.ln();
            }
            dist::log_sum_exp(&ll)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdConfig {
    pub s_outer: usize,
    pub n_inner: usize,
    /// Replicate size; defaults to the size of the observed data.
    pub n_rep: Option<usize>,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self { s_outer: 500, n_inner: 4, n_rep: None }
    }
}

/// Grid nodes below 1e-14 of the heaviest carry no predictive mass worth
/// evaluating; dropping them and renormalizing changes log p(y_rep | y) by
/// well under 1e-9.
fn prune(draws: &PosteriorDraws) -> Option<PosteriorDraws> {
    let w = draws.weights.as_ref()?;
    let top = w.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 1e-14 * top).collect();
    if keep.len() == w.len() {
        return None;
    }
    let v = keep.iter().flat_map(|&i| draws.row(i).iter().copied()).collect();
    let total: f64 = keep.iter().map(|&i| w[i]).sum();
    PosteriorDraws::new(v, draws.d, Some(keep.iter().map(|&i| w[i] / total).collect()), draws.seed, draws.sampler).ok()
}

/// Per-outer-draw averages of log p(y_rep|θ) − log p(y_rep|y), and the
/// number of dropped (non-finite) inner terms.
fn psd_terms(
    model: &dyn Model,
    draws: &PosteriorDraws,
    cfg: &PsdConfig,
    n_rep: usize,
    seed: u64,
) -> (Vec<f64>, usize) {
    let pruned = prune(draws);
    let draws = pruned.as_ref().unwrap_or(draws);
    let res: Vec<(f64, usize)> = (0..cfg.s_outer)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(seed, s as u64);
            let theta = draws.row(draws.pick(&mut r));
            let mut acc = 0.0;
            let mut ok = 0usize;
            for _ in 0..cfg.n_inner {
                let yr = model.sample_data(theta, n_rep, &mut r);
                let t = model.log_lik(&yr, theta) - ppd_logdensity(&yr, draws, model);
                if t.is_finite() {
                    acc += t;
                    ok += 1;
                }
            }
            (if ok > 0 { acc / ok as f64 } else { f64::NAN }, cfg.n_inner - ok)
        })
        .collect();
    let dropped = res.iter().map(|r| r.1).sum();
    (res.into_iter().map(|r| r.0).filter(|v| v.is_finite()).collect(), dropped)
}

fn check_dropped(dropped: usize, total: usize) -> Result<()> {
    if dropped as f64 > 0.01 * total as f64 {
        return Err(Error::Reliability(format!(
            "predictive density degenerate on {dropped} of {total} replicates"
        )));
    }
    Ok(())
}

/// Posterior sampling divergence E_{θ|y} KL(p(·|θ) ‖ p(·|y)), by nested
/// Monte Carlo with the same draws forming the predictive mixture.
pub fn estimate_psd(y: &DataSet, model: &dyn Model, draws: &PosteriorDraws, cfg: &PsdConfig, seed: u64) -> Result<InfoEstimate> {
    if cfg.s_outer < 2 || cfg.n_inner == 0 {
        return Err(Error::Domain("need s_outer ≥ 2 and n_inner ≥ 1".into()));
    }
    if draws.d != model.d_total() {
        return Err(Error::Structural("draws do not match the model dimension".into()));
    }
    let n_rep = cfg.n_rep.unwrap_or(y.n());
    let (terms, dropped) = psd_terms(model, draws, cfg, n_rep, seed);
    check_dropped(dropped, cfg.s_outer * cfg.n_inner)?;
    let (m, se) = mean_se(&terms);
    Ok(InfoEstimate::mc(
        "psd",
        m,
        se,
        Method::NestedMc,
        &[
            ("s_outer", cfg.s_outer as f64),
            ("n_inner", cfg.n_inner as f64),
            ("n_draws", draws.len() as f64),
            ("n_rep", n_rep as f64),
        ],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmiConfig {
    pub n_y: usize,
    pub s_outer: usize,
    pub n_inner: usize,
    /// Posterior draws per dataset (grid posteriors ignore this).
    pub n_draws: usize,
    /// Observed-data size; defaults to the model's.
    pub n_data: Option<usize>,
    /// Replicate size; defaults to the observed-data size.
    pub n_rep: Option<usize>,
}

impl Default for CmiConfig {
    fn default() -> Self {
        Self { n_y: 200, s_outer: 200, n_inner: 2, n_draws: 1000, n_data: None, n_rep: None }
    }
}

/// I(θ; y_rep | y) as the prior-predictive average of the psd.
pub fn estimate_cmi(model: &dyn Model, cfg: &CmiConfig, seed: u64) -> Result<InfoEstimate> {
    if cfg.n_y < 2 {
        return Err(Error::Domain("need n_y ≥ 2".into()));
    }
    let n_data = cfg.n_data.unwrap_or(model.n_obs());
    let n_rep = cfg.n_rep.unwrap_or(n_data);
    let inner = PsdConfig { s_outer: cfg.s_outer, n_inner: cfg.n_inner, n_rep: Some(n_rep) };
    let per_y: Vec<Result<(Vec<f64>, usize)>> = (0..cfg.n_y)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let theta = model.sample_prior(&mut r);
            let y = model.sample_data(&theta, n_data, &mut r);
            let draws = samplers::posterior_draws(model, &y, cfg.n_draws, rng::derive(seed, i as u64))?;
            let (t, dropped) = psd_terms(model, &draws, &inner, n_rep, rng::derive(seed ^ 0xC3, i as u64));
            Ok((t, dropped))
        })
        .collect();
    let mut means = Vec::with_capacity(cfg.n_y);
    let mut dropped = 0;
    for r in per_y {
        let (t, d) = r?;
        dropped += d;
        let (m, _) = mean_se(&t);
        if m.is_finite() {
            means.push(m);
        }
    }
    check_dropped(dropped, cfg.n_y * cfg.s_outer * cfg.n_inner)?;
    let (m, se) = mean_se(&means);
    Ok(InfoEstimate::mc(
        "cmi",
        m,
        se,
        Method::NestedMc,
        &[
            ("n_y", cfg.n_y as f64),
            ("s_outer", cfg.s_outer as f64),
            ("n_inner", cfg.n_inner as f64),
            ("n_draws", cfg.n_draws as f64),
            ("n_data", n_data as f64),
            ("n_rep", n_rep as f64),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_hp, Hyper, Poisson};
    use crate::samplers::exact_draws;

    #[test]
    fn single_draw_ppd_is_the_likelihood() {
        let m = builtin("normal-location", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let one = PosteriorDraws::single(&[0.4]).unwrap();
        let yr = DataSet::new(vec![1.1]).unwrap();
        assert!((ppd_logdensity(&yr, &one, m.as_ref()) - m.log_lik(&yr, &[0.4])).abs() < 1e-14);
        let psd = estimate_psd(&yr, m.as_ref(), &one, &PsdConfig::default(), 1).unwrap();
        assert!(psd.value.abs() < 1e-12);
    }

    #[test]
    fn conjugate_ppd_density() {
        let m = builtin("normal-location", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let y = DataSet::new(vec![0.0]).unwrap();
        let d = exact_draws(m.as_ref(), &y, 50_000, 3).unwrap();
        let got = ppd_logdensity(&DataSet::new(vec![0.0]).unwrap(), &d, m.as_ref());
        let want = dist::normal_lpdf(0.0, 0.0, 1.5f64.sqrt());
        assert!((got - want).abs() < 0.01, "{got} {want}");
    }

    #[test]
    fn off_support_is_minus_infinity() {
        let p = Poisson { n: 1, mu_mean: 0.0, mu_sd: 1.0 };
        let d = PosteriorDraws::single(&[0.0]).unwrap();
        assert_eq!(ppd_logdensity(&DataSet::new(vec![-1.0]).unwrap(), &d, &p), f64::NEG_INFINITY);
    }

    #[test]
    fn psd_single_y_positive() {
        let m = builtin("normal-location", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let y = DataSet::new(vec![0.0]).unwrap();
        let d = exact_draws(m.as_ref(), &y, 1000, 3).unwrap();
        let e = estimate_psd(&y, m.as_ref(), &d, &PsdConfig { s_outer: 400, n_inner: 4, n_rep: None }, 5).unwrap();
        assert!(e.value > 0.0 && e.value.is_finite());
        assert!((e.value - 0.5 * 1.5f64.ln()).abs() < 4.0 * e.std_error + 0.01);
    }

    #[test]
    fn student_t_psd_exceeds_half() {
        let m = builtin("student-t-outlier", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let y = DataSet::new(vec![-10.0, 10.0]).unwrap();
        let g = crate::samplers::grid_posterior(m.as_ref(), &y, &[(-15.0, 15.0)], 601).unwrap();
        let e = estimate_psd(&y, m.as_ref(), &g, &PsdConfig { s_outer: 300, n_inner: 4, n_rep: None }, 2).unwrap();
        assert!(e.value - 3.0 * e.std_error > 0.5, "{e:?}");
    }

    #[test]
    fn cmi_tiny_prior_scale_is_zero() {
        let m = builtin("prior-scale", &parse_hp("sigma_p=0.001").unwrap()).unwrap();
        let m = m.model().unwrap();
        let cfg = CmiConfig { n_y: 50, s_outer: 50, n_inner: 2, n_draws: 500, ..Default::default() };
        let e = estimate_cmi(m.as_ref(), &cfg, 1).unwrap();
        assert!(e.value.abs() < 3.0 * e.std_error + 1e-4, "{e:?}");
    }
}
