use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::bounds::{psi1, skewness_check, trace_bound_in, SkewCheck};
use super::{fisher_at, mean_matrix, prior_cov_block, Block, FisherBudget};
use crate::error::{Error, Result};
use crate::info::mean_se;
use crate::linalg;
use crate::model::ExpansionPair;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DilutionClass {
    /// Δ_dilute ⪰ 0 with at least one direction significantly positive.
    TotallyDiluting,
    TotallyConcentrating,
    /// Some eigenvalue's 3 s.e. interval straddles zero, or signs are mixed.
    Indefinite,
    /// Δ_dilute = 0 exactly: both diluting and concentrating.
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dilution {
    /// E_{p(θ)p(λ)}{𝓘_b(θ) − 𝓘(θ | λ)}.
    pub delta_dilute: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    /// Ascending, with per-eigenvalue standard errors.
    pub eigenvalues: Vec<f64>,
    pub eigen_se: Vec<f64>,
    pub classification: DilutionClass,
}

/// Paired draws: base information at θ and full expanded information at
/// (θ, λ), for independent prior draws of θ and λ.
struct Paired {
    base: Vec<DMatrix<f64>>,
    full: Vec<DMatrix<f64>>,
}

fn paired_samples(pair: &ExpansionPair, budget: &FisherBudget, seed: u64) -> Result<Paired> {
    if budget.n_prior < 2 {
        return Err(Error::Domain("need n_prior ≥ 2".into()));
    }
    let (base, exp) = (pair.base.as_ref(), pair.expanded.as_ref());
    let d = pair.d_shared;
    let rows = (0..budget.n_prior)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let th = exp.sample_shared(&mut r);
            let other = exp.sample_shared(&mut r);
            let la = exp.sample_extra(&other, &mut r);
            let p: Vec<f64> = th.iter().chain(&la).copied().collect();
            let s = rng::derive(seed ^ 0xD11, i as u64);
            Ok((fisher_at(base, Block::Full, &p[..d], budget, s)?, fisher_at(exp, Block::Full, &p, budget, s ^ 1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (base, full) = rows.into_iter().unzip();
    Ok(Paired { base, full })
}

fn theta_block(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    m.view((0, 0), (d, d)).into_owned()
}

/// Eigen-decomposition of a mean matrix with per-eigenvalue standard errors
/// from the per-sample projections v_iᵀ A v_i.
fn spectrum(mean: &DMatrix<f64>, samples: &[DMatrix<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = linalg::sym_eigen(mean)?;
    let mut se = Vec::with_capacity(mean.nrows());
    for i in 0..mean.nrows() {
        let v = e.vectors.column(i);
        let proj: Vec<f64> = samples.iter().map(|a| (v.transpose() * a * v)[(0, 0)]).collect();
        se.push(mean_se(&proj).1);
    }
    Ok((e.values.as_slice().to_vec(), se))
}

fn classify(eig: &[f64], se: &[f64]) -> DilutionClass {
    let scale = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (mut pos, mut neg, mut zero) = (0, 0, 0);
    for (&v, &s) in eig.iter().zip(se) {
        let tol = 1e-10 * scale.max(1e-300);
        if v.abs() <= tol && s <= tol {
            zero += 1;
        } else if v - 3.0 * s > 0.0 {
            pos += 1;
        } else if v + 3.0 * s < 0.0 {
            neg += 1;
        } else {
            return DilutionClass::Indefinite;
        }
    }
    match (pos, neg) {
        (0, 0) if zero > 0 => DilutionClass::Neutral,
        (_, 0) => DilutionClass::TotallyDiluting,
        (0, _) => DilutionClass::TotallyConcentrating,
        _ => DilutionClass::Indefinite,
    }
}

fn dilution_from(p: &Paired, d: usize) -> Result<Dilution> {
    let diffs: Vec<DMatrix<f64>> = p.base.iter().zip(&p.full).map(|(b, f)| b - theta_block(f, d)).collect();
    let (mean, se) = mean_matrix(&diffs);
    let mean = linalg::symmetrize(&mean);
    let (eigenvalues, eigen_se) = spectrum(&mean, &diffs)?;
    let classification = classify(&eigenvalues, &eigen_se);
    Ok(Dilution { delta_dilute: mean, std_error: se, eigenvalues, eigen_se, classification })
}

pub fn dilution_matrix(pair: &ExpansionPair, budget: &FisherBudget, seed: u64) -> Result<Dilution> {
    dilution_from(&paired_samples(pair, budget, seed)?, pair.d_shared)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypotheses {
    pub log_concave: bool,
    pub skew_ok_base: bool,
    pub skew_ok_exp: bool,
    /// Declared: both models are linear-Gaussian, so posteriors are exactly normal.
    pub normal_posterior: bool,
}

/// Spectra are of prior-whitened expected information (Σ^{1/2} E𝓘 Σ^{1/2},
/// with block-diagonal Σ over θ and λ), so v_pr = 1. The cmi terms omit the
/// universal factor (1 − δ²)C / log d and are labelled accordingly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffReport {
    pub pair: String,
    /// Ascending eigenvalues of E𝓘_b(θ).
    pub iota: Vec<f64>,
    /// Of E𝓘(θ | λ).
    pub iota_cond: Vec<f64>,
    /// Of E𝓘(θ, λ).
    pub iota_exp: Vec<f64>,
    pub trace_base_se: f64,
    pub trace_cond_se: f64,
    /// ψ₁(Σι) with ψ₁ = d ψ(·/d).
    pub mi_bound_base: f64,
    /// ψ₁(max(0, Σι_cond + Σ_j Δ_j)) = ψ₁(Σι_cond) − delta_i.
    pub mi_bound_exp: f64,
    /// Σ ψ₂(ι) with ψ₂(x) = x / (1 + R x).
    pub cmi_term_base: f64,
    /// Σ_{i ≤ d_exp} ψ₂(ι_exp) = Σ ψ₂(ι_cond) + delta_f.
    pub cmi_term_exp: f64,
    pub cmi_term_cond: f64,
    pub delta_i: f64,
    pub delta_f: f64,
    pub sum_delta_j: f64,
    pub sum_delta_j_se: f64,
    pub dims: (usize, usize),
    pub r: usize,
    pub skew_base: SkewCheck,
    pub skew_exp: SkewCheck,
    pub hypotheses: Hypotheses,
    pub dilution: DilutionClass,
    /// ψ₁(Σι_cond) ≤ ψ₁(Σι) within 3 s.e.; checked when totally diluting.
    pub diluting_holds: Option<bool>,
    /// Σψ₂(ι_cond) ≥ Σψ₂(ι) within 3 s.e.; checked when totally concentrating.
    pub nondiluting_holds: Option<bool>,
    pub banner: Option<String>,
    pub constant_note: String,
}

fn psi2_sum(iota: &[f64], r: usize) -> f64 {
    iota.iter().map(|x| x.max(0.0) / (1.0 + r as f64 * x.max(0.0))).sum()
}

fn whitening(pair: &ExpansionPair, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let exp = pair.expanded.as_ref();
    let (d, m) = (pair.d_shared, exp.d_extra());
    let full = prior_cov_block(exp, d + m, seed);
    let th: Vec<usize> = (0..d).collect();
    let la: Vec<usize> = (d..d + m).collect();
    Ok((linalg::psd_sqrt(&linalg::submatrix(&full, &th))?, linalg::psd_sqrt(&linalg::submatrix(&full, &la))?))
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = (a.nrows(), b.nrows());
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(a);
    m.view_mut((p, p), (q, q)).copy_from(b);
    m
}

pub fn tradeoff_report(pair: &ExpansionPair, budget: &FisherBudget, r: usize, delta: f64, seed: u64) -> Result<TradeoffReport> {
    let (base, exp) = (pair.base.as_ref(), pair.expanded.as_ref());
    let d = pair.d_shared;
    let d_exp = exp.d_total();
    let (s_th, s_la) = whitening(pair, seed)?;
    let s = block_diag(&s_th, &s_la);

    let p = paired_samples(pair, budget, seed)?;
    let wb: Vec<DMatrix<f64>> = p.base.iter().map(|m| &s_th * m * &s_th).collect();
    let wf: Vec<DMatrix<f64>> = p.full.iter().map(|m| &s * m * &s).collect();
    let wc: Vec<DMatrix<f64>> = wf.iter().map(|m| theta_block(m, d)).collect();
    let mb = linalg::symmetrize(&mean_matrix(&wb).0);
    let mf = linalg::symmetrize(&mean_matrix(&wf).0);
    let mc = theta_block(&mf, d);
    let iota = linalg::eigenvalues(&mb)?;
    let iota_cond = linalg::eigenvalues(&mc)?;
    let iota_exp = linalg::eigenvalues(&mf)?;
    let trace_base_se = mean_se(&wb.iter().map(|m| m.trace()).collect::<Vec<_>>()).1;
    let trace_cond_se = mean_se(&wc.iter().map(|m| m.trace()).collect::<Vec<_>>()).1;
    let (sum_b, sum_c) = (iota.iter().sum::<f64>(), iota_cond.iter().sum::<f64>());

    let (sum_delta_j, sum_delta_j_se) = if exp.d_extra() == 0 {
        (0.0, 0.0)
    } else {
        let t = trace_bound_in(pair, &s_th, &s_la, budget, rng::derive(seed, 0x73))?;
        (t.sum_delta(), t.delta_se.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let (mi_bound_base, mi_b_se) = psi1(sum_b, trace_base_se, d)?;
    let (mi_cond, mi_c_se) = psi1(sum_c, trace_cond_se, d)?;
    let (mi_bound_exp, _) = psi1(sum_c + sum_delta_j, 0.0, d)?;
    let cmi_term_base = psi2_sum(&iota, r);
    let cmi_term_cond = psi2_sum(&iota_cond, r);
    let cmi_term_exp = psi2_sum(&iota_exp, r);
    let delta_f = cmi_term_exp - cmi_term_cond;
    if delta_f < -1e-8 {
        return Err(Error::Numerical(format!("interlacing violated: delta_f = {delta_f:.3e}")));
    }

    let dil = dilution_from(&p, d)?;
    let diluting_holds = (dil.classification == DilutionClass::TotallyDiluting)
        .then(|| mi_cond <= mi_bound_base + 3.0 * mi_b_se.hypot(mi_c_se));
    // ψ₂ is 1-Lipschitz, so trace s.e. bounds the s.e. of Σψ₂
    let nondiluting_holds = (dil.classification == DilutionClass::TotallyConcentrating)
        .then(|| cmi_term_cond >= cmi_term_base - 3.0 * trace_base_se.hypot(trace_cond_se));

    let skew_base = skewness_check(&wb, delta)?;
    let skew_exp = skewness_check(&wf, delta)?;
    let hypotheses = Hypotheses {
        log_concave: base.log_concave_prior() && exp.log_concave_prior(),
        skew_ok_base: skew_base.ok,
        skew_ok_exp: skew_exp.ok,
        normal_posterior: base.linear_gaussian().is_some() && exp.linear_gaussian().is_some(),
    };
    let unmet: Vec<&str> = [
        (hypotheses.log_concave, "log-concave priors"),
        (hypotheses.skew_ok_base, "base skewness"),
        (hypotheses.skew_ok_exp, "expanded skewness"),
        (hypotheses.normal_posterior, "normal posteriors"),
    ]
    .iter()
    .filter(|(ok, _)| !ok)
    .map(|(_, n)| *n)
    .collect();
    let banner = (!unmet.is_empty()).then(|| format!("hypotheses unmet: {}", unmet.join(", ")));

    Ok(TradeoffReport {
        pair: pair.name.clone(),
        iota,
        iota_cond,
        iota_exp,
        trace_base_se,
        trace_cond_se,
        mi_bound_base,
        mi_bound_exp,
        cmi_term_base,
        cmi_term_exp,
        cmi_term_cond,
        delta_i: mi_cond - mi_bound_exp,
        delta_f,
        sum_delta_j,
        sum_delta_j_se,
        dims: (d, d_exp),
        r,
        skew_base,
        skew_exp,
        hypotheses,
        dilution: dil.classification,
        diluting_holds,
        nondiluting_holds,
        banner,
        constant_note: format!(
            "cmi terms are up to the universal constant (1 - δ²)·C / log d with δ = {delta}; C is unknown and not applied"
        ),
    })
}

impl TradeoffReport {
    /// Base/expanded × identifiability/falsifiability table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (d, de) = self.dims;
        let _ = writeln!(s, "tradeoff: {}  (d = {d}, d_exp = {de}, R = {})", self.pair, self.r);
        if let Some(b) = &self.banner {
            let _ = writeln!(s, "!! {b}");
        }
        let _ = writeln!(s, "{:<10} | {:<34} | falsifiability: cmi >= (up to constant)", "", "identifiability: mi <=");
        let _ = writeln!(s, "{:-<10}-+-{:-<34}-+-{:-<40}", "", "", "");
        let _ = writeln!(
            s,
            "{:<10} | {:<34} | {}",
            "base",
            format!("psi1(sum iota) = {:.6}", self.mi_bound_base),
            format!("sum psi2(iota) = {:.6}", self.cmi_term_base)
        );
        let _ = writeln!(
            s,
            "{:<10} | {:<34} | {}",
            "expanded",
            format!("psi1(sum iota_cond) - D_i = {:.6}", self.mi_bound_exp),
            format!("sum psi2(iota_cond) + D_f = {:.6}", self.cmi_term_exp)
        );
        let _ = writeln!(s, "D_i = {:.6}  D_f = {:.6}  sum Delta_j = {:.6}", self.delta_i, self.delta_f, self.sum_delta_j);
        let _ = writeln!(s, "dilution: {:?}", self.dilution);
        let _ = writeln!(s, "note: {}", self.constant_note);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_hp};

    fn pair(name: &str, hp: &str) -> ExpansionPair {
        builtin(name, &parse_hp(hp).unwrap()).unwrap().pair().unwrap().clone()
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify(&[1.0, 2.0], &[0.1, 0.1]), DilutionClass::TotallyDiluting);
        assert_eq!(classify(&[-1.0], &[0.1]), DilutionClass::TotallyConcentrating);
        assert_eq!(classify(&[0.1, 2.0], &[0.1, 0.1]), DilutionClass::Indefinite);
        assert_eq!(classify(&[-1.0, 2.0], &[0.1, 0.1]), DilutionClass::Indefinite);
        assert_eq!(classify(&[0.0], &[0.0]), DilutionClass::Neutral);
    }

    #[test]
    fn poisson_negbin_is_totally_diluting() {
        let d = dilution_matrix(&pair("poisson-negbin", ""), &FisherBudget { n_prior: 200, n_mc: 8, n_lambda: 100 }, 1).unwrap();
        assert_eq!(d.classification, DilutionClass::TotallyDiluting, "{d:?}");
    }

    #[test]
    fn channel_free_extension_has_zero_dilution() {
        let d = dilution_matrix(&pair("independent-extension", ""), &FisherBudget { n_prior: 20, ..Default::default() }, 1).unwrap();
        assert!(d.delta_dilute.iter().all(|v| *v == 0.0));
        assert_eq!(d.classification, DilutionClass::Neutral);
    }

    #[test]
    fn regression_conditional_block_is_unchanged() {
        // the θθ block of the full information does not involve z, so the
        // principal-submatrix dilution is exactly zero even with correlation
        let d = dilution_matrix(&pair("linreg-addpred", "rho1=0.9"), &FisherBudget { n_prior: 20, ..Default::default() }, 1).unwrap();
        assert!(d.delta_dilute.iter().all(|v| v.abs() < 1e-9), "{}", d.delta_dilute);
    }

    #[test]
    fn report_interlacing_and_orthogonal_tightness() {
        let p = pair("linreg-addpred", "rho1=0,rho2=0");
        let t = tradeoff_report(&p, &FisherBudget { n_prior: 40, n_mc: 4, n_lambda: 100 }, 1, 0.5, 2).unwrap();
        assert!(t.delta_f >= -1e-8);
        assert!((t.mi_bound_base - psi1(t.iota_cond.iter().sum(), 0.0, 4).unwrap().0).abs() < 1e-9);
        assert!((t.cmi_term_base - t.cmi_term_cond).abs() < 1e-9);
        assert!(t.to_text().contains("falsifiability"));
        let j = serde_json::to_value(&t).unwrap();
        assert!(j["hypotheses"]["normal_posterior"].is_boolean());
    }

    #[test]
    fn poisson_negbin_diluting_inequality() {
        let t = tradeoff_report(&pair("poisson-negbin", ""), &FisherBudget { n_prior: 200, n_mc: 8, n_lambda: 100 }, 1, 0.5, 3).unwrap();
        assert_eq!(t.dilution, DilutionClass::TotallyDiluting);
        assert_eq!(t.diluting_holds, Some(true));
        assert!(t.banner.is_some(), "negbin posteriors are not normal");
    }
}
