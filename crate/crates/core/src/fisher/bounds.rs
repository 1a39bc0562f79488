use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{expected_fisher, finite_hessian, prior_cov_block, prior_fisher_samples, Block, FisherBudget};
use crate::error::{Error, Result};
use crate::info::{mean_se, InfoEstimate, Method};
use crate::linalg;
use crate::model::{ExpansionPair, Model};
use crate::rng;
use crate::samplers;

/// √x on [0, 1], 1 + ½ log x beyond.
pub fn psi(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("ψ needs x ≥ 0, got {x}")));
    }
    Ok(if x <= 1.0 { x.sqrt() } else { 1.0 + 0.5 * x.ln() })
}

fn psi_prime(x: f64) -> f64 {
    if x <= 1.0 {
        0.5 / x.sqrt()
    } else {
        0.5 / x
    }
}

/// d·ψ(t/d) with its delta-method standard error.
pub(crate) fn psi1(t: f64, se: f64, d: usize) -> Result<(f64, f64)> {
    let x = t.max(0.0) / d as f64;
    let v = d as f64 * psi(x)?;
    let s = if se == 0.0 { 0.0 } else { psi_prime(x) * se };
    Ok((v, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiBoundVariant {
    /// d ψ(tr(E Σ^{1/2} 𝓘 Σ^{1/2}) / d).
    Full,
    /// d ψ(v_pr E tr 𝓘 / d), v_pr the largest prior variance direction.
    Weak,
}

fn block_dim(model: &dyn Model, block: Block) -> usize {
    match block {
        Block::Full => model.d_total(),
        _ => model.d_shared(),
    }
}

/// Upper bound on I(θ; y) from the prior-averaged Fisher information.
/// Refuses priors not declared log-concave, since the bound needs it.
pub fn mi_upper_bound(
    model: &dyn Model,
    block: Block,
    variant: MiBoundVariant,
    budget: &FisherBudget,
    seed: u64,
) -> Result<InfoEstimate> {
    if !model.log_concave_prior() {
        return Err(Error::Unsupported(format!(
            "{}: prior is not declared log-concave, so the bound's hypothesis is unmet",
            model.name()
        )));
    }
    let d = block_dim(model, block);
    let sigma = prior_cov_block(model, d, seed);
    let v_pr = linalg::eigenvalues(&sigma)?.last().copied().unwrap_or(0.0);
    let samples = prior_fisher_samples(model, block, budget, seed)?;
    let traces: Vec<f64> = samples
        .iter()
        .map(|(_, m)| match variant {
            MiBoundVariant::Full => (&sigma * m).trace(),
            MiBoundVariant::Weak => v_pr * m.trace(),
        })
        .collect();
    let (t, se) = mean_se(&traces);
    let (v, s) = psi1(t, se, d)?;
    let name = match variant {
        MiBoundVariant::Full => "mi_upper_bound",
        MiBoundVariant::Weak => "mi_upper_bound_weak",
    };
    Ok(InfoEstimate::mc(
        name,
        v,
        s,
        Method::Fisher,
        &[("d", d as f64), ("trace", t), ("trace_se", se), ("v_pr", v_pr), ("n_prior", budget.n_prior as f64)],
    ))
}

/// Both sides of E tr 𝓘(θ) ≤ Σ_j [E{−∂²_{θ_j} log p(y|θ,λ)} + Δ_j].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceBound {
    pub delta_j: Vec<f64>,
    pub delta_se: Vec<f64>,
    /// E{−∂²_{θ_j} log p(y | θ, λ)} per coordinate.
    pub first_term: Vec<f64>,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// lhs ≤ rhs + 3 combined s.e.
    pub holds: bool,
}

impl TraceBound {
    pub fn sum_delta(&self) -> f64 {
        self.delta_j.iter().sum()
    }
}

pub fn trace_bound_delta(pair: &ExpansionPair, budget: &FisherBudget, seed: u64) -> Result<TraceBound> {
    let d = pair.d_shared;
    let m = pair.expanded.d_extra();
    trace_bound_in(pair, &DMatrix::identity(d, d), &DMatrix::identity(m, m), budget, seed)
}

/// The trace bound in coordinates θ = S_θ θ̃, λ = S_λ λ̃.
pub(crate) fn trace_bound_in(
    pair: &ExpansionPair,
    s_th: &DMatrix<f64>,
    s_la: &DMatrix<f64>,
    budget: &FisherBudget,
    seed: u64,
) -> Result<TraceBound> {
    let exp = pair.expanded.as_ref();
    let d = pair.d_shared;
    let m = exp.d_extra();
    let n_joint = budget.n_prior * budget.n_mc.max(1);
    if n_joint < 2 {
        return Err(Error::Domain("empty Monte Carlo budget".into()));
    }
    let th: Vec<usize> = (0..d).collect();
    let la: Vec<usize> = (d..d + m).collect();

    struct Row {
        first: Vec<f64>,
        prior: Vec<f64>,
        mixed: Vec<f64>,
        op: f64,
    }
    let rows = (0..n_joint)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let p = exp.sample_prior(&mut r);
            let y = exp.sample_data(&p, exp.n_obs(), &mut r);
            let hl = finite_hessian(&|q| exp.log_lik(&y, q), &p)?;
            let first_m = s_th * (-linalg::submatrix(&hl, &th)) * s_th;
            let hp = finite_hessian(&|q| exp.log_prior_extra(q), &p)?;
            let prior_m = s_th * (-linalg::submatrix(&hp, &th)) * s_th;
            let (mixed, op) = if m == 0 {
                (vec![0.0; d], 0.0)
            } else {
                let g = s_th * linalg::block(&hl, &th, &la) * s_la;
                let hj = -linalg::submatrix(&(&hl + &hp), &la);
                let hs = s_la * hj * s_la;
                let op = linalg::eigenvalues(&hs)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                ((0..d).map(|j| g.row(j).sum()).collect(), op)
            };
            Ok(Row { first: first_m.diagonal().as_slice().to_vec(), prior: prior_m.diagonal().as_slice().to_vec(), mixed, op })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = rows.len() as f64;
    let avg = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let b = avg(&|r| r.op);
    if m > 0 && !(b > 0.0) {
        return Err(Error::Degenerate("λ partial Hessian has zero expected operator norm".into()));
    }
    let mut delta_j = Vec::with_capacity(d);
    let mut delta_se = Vec::with_capacity(d);
    let mut first_term = Vec::with_capacity(d);
    // per-row linearization of Σ_j (first_j + Δ_j) for the rhs s.e.
    let mut lin = vec![0.0; rows.len()];
    for j in 0..d {
        let pj = avg(&|r| r.prior[j]);
        let aj = avg(&|r| r.mixed[j]);
        let fj = avg(&|r| r.first[j]);
        let (dj, c1, c2) = if m == 0 { (pj, 0.0, 0.0) } else { (pj - aj * aj / b, 2.0 * aj / b, aj * aj / (b * b)) };
        let g: Vec<f64> = rows.iter().map(|r| r.prior[j] - c1 * r.mixed[j] + c2 * r.op).collect();
        delta_j.push(dj);
        delta_se.push(mean_se(&g).1);
        first_term.push(fj);
        for (l, (r, gi)) in lin.iter_mut().zip(rows.iter().zip(&g)) {
            *l += r.first[j] + gi;
        }
    }
    let (_, rhs_se) = mean_se(&lin);
    let rhs = first_term.iter().sum::<f64>() + delta_j.iter().sum::<f64>();

    let lhs_samples = prior_fisher_samples(exp, Block::Shared, budget, rng::derive(seed, 0x1A5))?;
    let tr: Vec<f64> = lhs_samples.iter().map(|(_, f)| (s_th * f * s_th).trace()).collect();
    let (lhs, lhs_se) = mean_se(&tr);
    let holds = lhs <= rhs + 3.0 * lhs_se.hypot(rhs_se);
    Ok(TraceBound { delta_j, delta_se, first_term, lhs, lhs_se, rhs, rhs_se, holds })
}

/// tr(E_{p(θ,y)} Σ_y^{1/2} 𝓘(θ) Σ_y^{1/2}), the computable part of the
/// conditional-MI lower bound. The universal constant is never applied.
/// With `at`, θ is held fixed instead of drawn from the prior.
pub fn cmi_trace_term(model: &dyn Model, n_y: usize, at: Option<&[f64]>, budget: &FisherBudget, seed: u64) -> Result<InfoEstimate> {
    if n_y < 2 {
        return Err(Error::Domain("need n_y ≥ 2".into()));
    }
    if let Some(p) = at {
        if p.len() != model.d_total() {
            return Err(Error::Structural("fixed parameter has the wrong length".into()));
        }
    }
    let terms = (0..n_y)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let p = at.map_or_else(|| model.sample_prior(&mut r), <[f64]>::to_vec);
            let y = model.sample_data(&p, model.n_obs(), &mut r);
            let sy = match model.linear_gaussian() {
                Some(lg) => lg.posterior_cov(y.n()),
                None => samplers::posterior_draws(model, &y, 4000, rng::derive(seed ^ 0xC7, i as u64))?.cov(),
            };
            let f = expected_fisher(model, &p, budget.n_mc, rng::derive(seed ^ 0xF1, i as u64))?.matrix;
            Ok((sy * f).trace())
        })
        .collect::<Result<Vec<f64>>>()?;
    let (v, se) = mean_se(&terms);
    let d = model.d_total();
    Ok(InfoEstimate::mc(
        "lower-bound trace term (up to constant)",
        v,
        se,
        Method::Fisher,
        &[("d", d as f64), ("log_d", (d as f64).ln()), ("n_y", n_y as f64)],
    ))
}

/// Σ_i ι_i / (1 + R ι_i): the trace term for a unit-covariance normal
/// prior whose expected Fisher information has spectrum ι, with R
/// replicated datasets.
pub fn cmi_lower_bound_analytic(iota: &[f64], r: usize) -> Result<f64> {
    if let Some(x) = iota.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("eigenvalues must be nonnegative, got {x}")));
    }
    Ok(iota.iter().map(|x| x / (1.0 + r as f64 * x)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkewCheck {
    /// E‖A − EA‖²_op.
    pub var_op: f64,
    pub lambda_min_mean: f64,
    pub delta: f64,
    /// √var_op < δ λ_min(EA).
    pub ok: bool,
}

/// Whether random information matrices are well summarized by their mean.
pub fn skewness_check(samples: &[DMatrix<f64>], delta: f64) -> Result<SkewCheck> {
    if !(delta > 0.0 && delta < std::f64::consts::FRAC_1_SQRT_2) {
        return Err(Error::Domain(format!("δ must lie in (0, 2^-1/2), got {delta}")));
    }
    if samples.len() < 2 {
        return Err(Error::Domain("need at least 2 matrix samples".into()));
    }
    let (mean, _) = super::mean_matrix(samples);
    let var_op = samples
        .iter()
        .map(|a| linalg::op_norm(&(a - &mean)).map(|v| v * v))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>()
        / samples.len() as f64;
    let lambda_min_mean = linalg::eigenvalues(&mean)?[0];
    Ok(SkewCheck { var_op, lambda_min_mean, delta, ok: var_op.sqrt() < delta * lambda_min_mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::gaussian_mi_cmi;
    use crate::model::{builtin, parse_hp, Hyper, Poisson};

    #[test]
    fn psi_examples() {
        assert_eq!(psi(1.0).unwrap(), 1.0);
        assert_eq!(psi(0.0).unwrap(), 0.0);
        assert!((psi(4.0).unwrap() - 1.693_147_180_559_945).abs() < 1e-12);
        assert!(psi(-1e-9).is_err());
    }

    #[test]
    fn mi_bound_examples() {
        let b = FisherBudget { n_prior: 4, ..Default::default() };
        let m = builtin("normal-location", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        let v = mi_upper_bound(m.as_ref(), Block::Full, MiBoundVariant::Full, &b, 1).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        assert!(v.value >= gaussian_mi_cmi(m.as_ref()).unwrap().mi.value);

        let f = builtin("flat", &Hyper::new()).unwrap();
        let v = mi_upper_bound(f.model().unwrap().as_ref(), Block::Full, MiBoundVariant::Full, &b, 1).unwrap();
        assert_eq!(v.value, 0.0);

        let p = builtin("location-nuisance", &parse_hp("sigma_theta2=1,sigma_lambda2=3").unwrap()).unwrap();
        let e = p.pair().unwrap().expanded.clone();
        let v = mi_upper_bound(e.as_ref(), Block::SharedGivenExtra, MiBoundVariant::Full, &b, 1).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        assert!(v.value >= 0.5 * 1.25f64.ln());
    }

    #[test]
    fn mi_bound_refuses_non_log_concave_prior() {
        let m = builtin("normal-gamma", &Hyper::new()).unwrap();
        let m = m.model().unwrap();
        if !m.log_concave_prior() {
            let r = mi_upper_bound(m.as_ref(), Block::Full, MiBoundVariant::Full, &FisherBudget::default(), 1);
            assert!(matches!(r, Err(Error::Unsupported(_))));
        }
    }

    #[test]
    fn lower_bound_analytic_examples() {
        assert_eq!(cmi_lower_bound_analytic(&[1.0], 1).unwrap(), 0.5);
        assert_eq!(cmi_lower_bound_analytic(&[0.0, 0.0], 7).unwrap(), 0.0);
        assert!((cmi_lower_bound_analytic(&[2.0, 3.0], 2).unwrap() - (0.4 + 3.0 / 7.0)).abs() < 1e-15);
        assert!(cmi_lower_bound_analytic(&[-0.1], 1).is_err());
    }

    #[test]
    fn skewness_examples() {
        let i = DMatrix::<f64>::identity(2, 2);
        let c = skewness_check(&[i.clone(), i.clone()], 0.5).unwrap();
        assert_eq!(c.var_op, 0.0);
        assert!(c.ok);
        let s = [&i * 1.9, &i * 0.1, &i * 1.9, &i * 0.1];
        let c = skewness_check(&s, 0.5).unwrap();
        assert!((c.var_op - 0.81).abs() < 1e-12 && (c.lambda_min_mean - 1.0).abs() < 1e-12);
        assert!(!c.ok);
        assert!(skewness_check(&s, 0.75).is_err());
    }

    #[test]
    fn cmi_trace_term_examples() {
        let b = FisherBudget::default();
        let m = builtin("normal-location", &Hyper::new()).unwrap();
        let t = cmi_trace_term(m.model().unwrap().as_ref(), 10, None, &b, 1).unwrap();
        assert!((t.value - 0.5).abs() < 1e-12);
        let f = builtin("flat", &Hyper::new()).unwrap();
        let t = cmi_trace_term(f.model().unwrap().as_ref(), 10, None, &b, 1).unwrap();
        assert!(t.value.abs() < 1e-12);
        let p = Poisson { n: 1000, mu_mean: 0.0, mu_sd: 1.0 };
        let t = cmi_trace_term(&p, 20, Some(&[0.0]), &b, 2).unwrap();
        assert!((t.value - 1.0).abs() < 0.1, "{t:?}");
    }

    #[test]
    fn independent_prior_gives_nonpositive_deltas() {
        for (name, hp) in [("location-nuisance", ""), ("poisson-negbin", ""), ("linreg-addpred", "n=8")] {
            let b = builtin(name, &parse_hp(hp).unwrap()).unwrap();
            let t = trace_bound_delta(b.pair().unwrap(), &FisherBudget { n_prior: 40, n_mc: 4, n_lambda: 200 }, 3).unwrap();
            for (dj, se) in t.delta_j.iter().zip(&t.delta_se) {
                assert!(*dj <= 3.0 * se + 1e-12, "{name}: {t:?}");
            }
            assert!(t.holds, "{name}: {t:?}");
        }
    }

    #[test]
    fn correlated_regression_has_negative_delta_sum() {
        let b = builtin("linreg-addpred", &parse_hp("rho1=0.9").unwrap()).unwrap();
        let t = trace_bound_delta(b.pair().unwrap(), &FisherBudget { n_prior: 40, n_mc: 4, n_lambda: 200 }, 4).unwrap();
        let se = t.delta_se.iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!(t.sum_delta() < -3.0 * se, "{t:?}");
    }

    #[test]
    fn no_mixed_dependence_leaves_prior_term() {
        let b = builtin("independent-extension", &Hyper::new()).unwrap();
        let t = trace_bound_delta(b.pair().unwrap(), &FisherBudget { n_prior: 10, n_mc: 2, n_lambda: 50 }, 5).unwrap();
        assert!(t.delta_j.iter().all(|d| d.abs() < 1e-9), "{t:?}");
    }
}
