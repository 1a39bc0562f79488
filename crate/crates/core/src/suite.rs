//! The regression suite behind the `examples` command and the acceptance
//! tests. Each numbered criterion runs a set of checks against closed forms
//! or independent oracles, with explicit tolerances.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bootstrap::{compare_schemes, regenerate_datasets, BootConfig, Scheme, Source};
use crate::checks::{conditional_pppv, TestStatistic, DEFAULT_N_INNER};
use crate::dist;
use crate::error::{Error, Result};
use crate::fisher::{
    cmi_lower_bound_analytic, cmi_trace_term, mi_upper_bound, observed_info_fd, psi, trace_bound_delta, trace_drop,
    tradeoff_report, Block, DilutionClass, FisherBudget, MiBoundVariant,
};
use crate::info::{
    estimate_cmi, estimate_psd, gaussian_entropy, gaussian_mi_cmi, knn_entropy, CmiConfig, GaussianFamily, JointGaussian,
    PsdConfig,
};
use crate::linalg;
use crate::model::{builtin, builtin_names, parse_hp, DataSet, ExpansionPair, GroupedExpanded, Model};
use crate::rng;
use crate::samplers::{exact_draws, posterior_draws, PosteriorDraws, SamplerKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub reference: f64,
    pub estimate: f64,
    pub tolerance: String,
    pub pass: bool,
    /// Reported for context; does not affect the criterion verdict.
    pub informational: bool,
}

impl Check {
    fn within(name: impl Into<String>, reference: f64, estimate: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            reference,
            estimate,
            tolerance: format!("±{tol:e}"),
            pass: (estimate - reference).abs() <= tol,
            informational: false,
        }
    }

    /// estimate ≤ bound + slack.
    fn at_most(name: impl Into<String>, bound: f64, estimate: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            reference: bound,
            estimate,
            tolerance: format!("<= ref + {slack:.3e}"),
            pass: estimate <= bound + slack,
            informational: false,
        }
    }

    /// estimate ≥ bound − slack.
    fn at_least(name: impl Into<String>, bound: f64, estimate: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            reference: bound,
            estimate,
            tolerance: format!(">= ref - {slack:.3e}"),
            pass: estimate >= bound - slack,
            informational: false,
        }
    }

    fn flag(name: impl Into<String>, estimate: f64, pass: bool, rule: &str) -> Self {
        Self { name: name.into(), reference: f64::NAN, estimate, tolerance: rule.into(), pass, informational: false }
    }

    fn info(mut self) -> Self {
        self.informational = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub title: String,
    pub checks: Vec<Check>,
    /// Set when the criterion could not be evaluated at all.
    pub error: Option<String>,
}

impl Criterion {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.checks.iter().filter(|c| !c.informational).all(|c| c.pass)
    }
}

pub const TITLES: [(u8, &str, &str); 9] = [
    (1, "cmi", "analytic cmi regressions"),
    (2, "cmi", "nested Monte Carlo cmi vs closed form"),
    (3, "cmi", "split-means percent change"),
    (4, "ppc", "student-t conditional check"),
    (5, "fisher", "Fisher trace inequalities"),
    (6, "fisher", "bound sandwiches"),
    (7, "fisher", "tradeoff ordering"),
    (8, "properties", "property suites"),
    (9, "bootstrap", "bootstrap pipeline"),
];

/// Criterion ids for a topic filter (`cmi`, `ppc`, `fisher`, `properties`,
/// `bootstrap`) or a single number.
pub fn select(only: Option<&str>) -> Result<Vec<u8>> {
    let Some(f) = only else { return Ok(TITLES.iter().map(|t| t.0).collect()) };
    if let Ok(id) = f.parse::<u8>() {
        return if TITLES.iter().any(|t| t.0 == id) {
            Ok(vec![id])
        } else {
            Err(Error::Domain(format!("no criterion {id}")))
        };
    }
    let ids: Vec<u8> = TITLES.iter().filter(|t| t.1 == f).map(|t| t.0).collect();
    if ids.is_empty() {
        return Err(Error::Domain(format!("unknown topic `{f}` (cmi, ppc, fisher, properties, bootstrap)")));
    }
    Ok(ids)
}

pub fn run(id: u8, seed: u64) -> Criterion {
    let s = rng::derive(seed, id as u64);
    let out = match id {
        1 => analytic_cmi(),
        2 => nested_cmi(s),
        3 => split_means_curve(s),
        4 => student_t_check(s),
        5 => trace_inequalities(s),
        6 => sandwiches(s),
        7 => tradeoff_ordering(s),
        8 => properties(s),
        9 => bootstrap_pipeline(s),
        _ => Err(Error::Domain(format!("no criterion {id}"))),
    };
    let title = TITLES.iter().find(|t| t.0 == id).map_or("unknown", |t| t.2).to_string();
    match out {
        Ok(checks) => Criterion { id, title, checks, error: None },
        Err(e) => Criterion { id, title, checks: Vec::new(), error: Some(e.to_string()) },
    }
}

fn model(name: &str, hp: &str) -> Result<Arc<dyn Model>> {
    builtin(name, &parse_hp(hp)?)?
        .model()
        .cloned()
        .ok_or_else(|| Error::Structural(format!("{name} is a pair, not a model")))
}

fn pair(name: &str, hp: &str) -> Result<ExpansionPair> {
    builtin(name, &parse_hp(hp)?)?
        .pair()
        .cloned()
        .ok_or_else(|| Error::Structural(format!("{name} is a model, not a pair")))
}

fn cmi_of(name: &str, hp: &str) -> Result<f64> {
    Ok(gaussian_mi_cmi(model(name, hp)?.as_ref())?.cmi.value)
}

fn analytic_cmi() -> Result<Vec<Check>> {
    const TOL: f64 = 1e-12;
    let half_log = |a: f64, b: f64| 0.5 * (a / b).ln();
    let mut c = vec![
        Check::within("normal-location cmi", half_log(3.0, 2.0), cmi_of("normal-location", "")?, TOL),
        Check::within("redundant-location cmi", half_log(3.0, 2.0), cmi_of("redundant-location", "")?, TOL),
    ];
    for n in [1.0f64, 5.0, 30.0] {
        c.push(Check::within(
            format!("split-means base n={n}"),
            half_log(4.0 * n + 1.0, 2.0 * n + 1.0),
            cmi_of("split-means", &format!("n={n},split=0"))?,
            TOL,
        ));
        c.push(Check::within(
            format!("split-means expanded n={n}"),
            ((2.0 * n + 1.0) / (n + 1.0)).ln(),
            cmi_of("split-means", &format!("n={n},split=1"))?,
            TOL,
        ));
    }
    for sp in [0.001f64, 1.0, 1000.0] {
        let v = cmi_of("prior-scale", &format!("sigma_p={sp}"))?;
        c.push(Check::within(format!("prior-scale sigma_p={sp}"), half_log(2.0 * sp * sp + 1.0, sp * sp + 1.0), v, TOL));
    }
    c.push(Check::within("prior-scale limit 0", 0.0, cmi_of("prior-scale", "sigma_p=0.001")?, 1e-6));
    c.push(Check::within("prior-scale limit log 2 / 2", 0.5 * 2f64.ln(), cmi_of("prior-scale", "sigma_p=1000")?, 1e-6));
    for (st, sl) in [(1.0f64, 0.0f64), (1.0, 3.0), (1.0, 1e3)] {
        // σ_λ² = 0 is a degenerate prior, so go through the family directly
        let fam = GaussianFamily::new(
            DMatrix::from_element(1, 2, 1.0),
            1.0,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![st, sl])),
            1,
        )?;
        let i = fam.info()?;
        c.push(Check::within(format!("location-nuisance mi ({st},{sl})"), 0.5 * (1.0 + st / (1.0 + sl)).ln(), i.mi.value, TOL));
        c.push(Check::within(
            format!("location-nuisance cmi ({st},{sl})"),
            half_log(1.0 + 2.0 * (st + sl), 1.0 + st + sl),
            i.cmi.value,
            TOL,
        ));
        if sl > 0.0 {
            let p = pair("location-nuisance", &format!("sigma_theta2={st},sigma_lambda2={sl}"))?;
            let e = gaussian_mi_cmi(p.expanded.as_ref())?;
            c.push(Check::within(format!("registry pair mi ({st},{sl})"), i.mi.value, e.mi.value, TOL));
            let b = gaussian_mi_cmi(p.base.as_ref())?.cmi.value;
            c.push(Check::within(format!("location-nuisance base cmi ({st},{sl})"), half_log(1.0 + 2.0 * st, 1.0 + st), b, TOL));
        }
    }
    Ok(c)
}

fn nested_cmi(seed: u64) -> Result<Vec<Check>> {
    let m = model("normal-location", "")?;
    let e = estimate_cmi(m.as_ref(), &CmiConfig::default(), seed)?;
    let want = 0.5 * 1.5f64.ln();
    Ok(vec![
        Check::within("estimate_cmi normal-location", want, e.value, 0.01),
        Check::at_most("|error| within 3 s.e.", 3.0 * e.std_error, (e.value - want).abs(), 0.0).info(),
    ])
}

fn split_means_curve(seed: u64) -> Result<Vec<Check>> {
    let mut c = Vec::new();
    for (i, n) in [1usize, 2, 5, 10, 30].into_iter().enumerate() {
        let cfg = CmiConfig::default();
        let b = estimate_cmi(model("split-means", &format!("n={n},split=0"))?.as_ref(), &cfg, rng::derive(seed, 2 * i as u64))?;
        let e = estimate_cmi(model("split-means", &format!("n={n},split=1"))?.as_ref(), &cfg, rng::derive(seed, 2 * i as u64 + 1))?;
        let pc = (e.value - b.value) / b.value;
        let nf = n as f64;
        let exact = ((2.0 * nf + 1.0) / (nf + 1.0)).ln() / (0.5 * ((4.0 * nf + 1.0) / (2.0 * nf + 1.0)).ln()) - 1.0;
        c.push(Check::flag(format!("percent change n={n}"), pc, pc > 0.0, "> 0"));
        c.push(Check::within(format!("percent change n={n} vs closed form"), exact, pc, 0.1).info());
        if n == 30 {
            c.push(Check::within("percent change n=30 near 1", 1.0, pc, 0.1));
        }
    }
    Ok(c)
}

/// Exact marginal and conditional p-values by quadrature: posterior on a
/// fine grid, replicate tail probabilities from the t CDF.
fn student_t_oracle(y: &[f64], df: f64, scale: f64, lo: f64, hi: f64, coord: usize, negate: bool) -> Result<(f64, f64)> {
    let k = 30_001;
    let t = StudentsT::new(0.0, scale, df).map_err(|e| Error::Domain(e.to_string()))?;
    let h = (hi - lo) / (k - 1) as f64;
    let lp: Vec<f64> = (0..k)
        .map(|i| {
            let th = lo + i as f64 * h;
            y.iter().map(|&v| dist::student_t_lpdf(v, th, scale, df)).sum()
        })
        .collect();
    let top = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|v| (v - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let (mut marg, mut mass) = (0.0, 0.0);
    for (i, wi) in w.iter().enumerate() {
        let th = lo + i as f64 * h;
        // right tail of T: −y_c ≥ −y_obs is y_c ≤ y_obs; y_c ≥ y_obs otherwise
        let p = if negate { t.cdf(y[coord] - th) } else { 1.0 - t.cdf(y[coord] - th) };
        marg += wi / z * p;
        if p < 0.01 {
            mass += wi / z;
        }
    }
    Ok((marg, mass))
}

fn student_t_check(seed: u64) -> Result<Vec<Check>> {
    let m = model("student-t-outlier", "")?;
    let yv = [-10.0, 10.0];
    let y = DataSet::new(yv.to_vec())?;
    let draws = posterior_draws(m.as_ref(), &y, 0, seed)?;
    let mut c = Vec::new();
    for (label, stat, coord, negate) in [("T1 = -y1", TestStatistic::neg_first(), 0, true), ("T2 = y2", TestStatistic::coord(1), 1, false)] {
        let r = conditional_pppv(m.as_ref(), &y, &draws, &stat, DEFAULT_N_INNER, rng::derive(seed, coord as u64))?;
        let (oracle, oracle_mass) = student_t_oracle(&yv, 10.0, 1.0, -15.0, 15.0, coord, negate)?;
        let se = r.conditional_p.iter().zip(&r.weights).map(|(p, w)| w * w * p * (1.0 - p) / r.n_inner as f64).sum::<f64>().sqrt();
        c.push(Check::within(format!("{label} marginal p"), 0.165, r.marginal_p, 0.02));
        c.push(Check::at_least(format!("{label} mass with p < 0.01"), 0.6, r.mass_below(0.01), 0.0));
        c.push(Check::within(format!("{label} quadrature oracle"), oracle, r.marginal_p, 3.0 * se + 1e-3));
        c.push(Check::flag(format!("{label} oracle mass with p < 0.01"), oracle_mass, true, "reported").info());
    }
    Ok(c)
}

fn budget() -> FisherBudget {
    FisherBudget::default()
}

/// E_τ of the exact λ-marginal trace drop for the regression pair:
/// σ_λ² n² Σρ² / (e^τ (e^τ + σ_λ² n)) + ½ (1 − (e^τ / (e^τ + σ_λ² n))²).
fn linreg_exact_drop(n: f64, rho2: f64, tau_sd: f64, lambda_var: f64) -> f64 {
    let k = 4001;
    let (lo, hi) = (-8.0 * tau_sd, 8.0 * tau_sd);
    let h = (hi - lo) / (k - 1) as f64;
    let (mut acc, mut z) = (0.0, 0.0);
    for i in 0..k {
        let t = lo + i as f64 * h;
        let w = dist::normal_lpdf(t, 0.0, tau_sd).exp();
        let e = t.exp();
        let r = e / (e + lambda_var * n);
        acc += w * (lambda_var * n * n * rho2 / (e * (e + lambda_var * n)) + 0.5 * (1.0 - r * r));
        z += w;
    }
    acc / z
}

fn trace_inequalities(seed: u64) -> Result<Vec<Check>> {
    let mut c = Vec::new();
    let pn = pair("poisson-negbin", "")?;
    let d = trace_drop(&pn, Block::Shared, &budget(), rng::derive(seed, 1))?;
    c.push(Check::at_least("poisson-negbin shared trace drop > 3 s.e.", 3.0 * d.se, d.drop, 0.0));

    let lr = pair("linreg-addpred", "")?;
    let d = trace_drop(&lr, Block::Shared, &budget(), rng::derive(seed, 2))?;
    let (n, rho2, tau_sd) = (20.0f64, 0.7f64 * 0.7, 0.5f64);
    let closed = n * n * (0.5 * tau_sd * tau_sd).exp() * rho2;
    c.push(Check::at_least("linreg trace drop >= n^2 E{e^-tau} sum rho_j^2", closed, d.drop, 3.0 * d.se));
    let exact = linreg_exact_drop(n, rho2, tau_sd, 1.0);
    c.push(Check::within("linreg trace drop vs exact marginal drop", exact, d.drop, 3.0 * d.se).info());

    for (i, name) in builtin_names().iter().enumerate() {
        let Some(p) = builtin(name, &parse_hp("")?)?.pair().cloned() else { continue };
        let t = trace_bound_delta(&p, &budget(), rng::derive(seed, 10 + i as u64))?;
        let slack = 3.0 * t.lhs_se.hypot(t.rhs_se);
        c.push(Check::at_most(format!("trace bound lhs <= rhs: {name}"), t.rhs, t.lhs, slack));
    }
    Ok(c)
}

fn conjugate_models() -> Result<Vec<(String, Arc<dyn Model>)>> {
    let mut out = Vec::new();
    for (name, hp) in [
        ("normal-location", ""),
        ("normal-location", "n=5,sigma_p=2"),
        ("redundant-location", ""),
        ("split-means", "n=3,split=0"),
        ("split-means", "n=3,split=1"),
        ("prior-scale", "sigma_p=0.001"),
        ("prior-scale", "sigma_p=1000"),
        ("flat", ""),
    ] {
        out.push((format!("{name} {hp}"), model(name, hp)?));
    }
    for (name, hp) in [("location-nuisance", ""), ("simple-reg-2obs", "")] {
        let p = pair(name, hp)?;
        out.push((format!("{name} base"), p.base.clone()));
        out.push((format!("{name} expanded"), p.expanded.clone()));
    }
    Ok(out)
}

fn sandwiches(seed: u64) -> Result<Vec<Check>> {
    let mut c = Vec::new();
    let b = budget();
    for (i, (name, m)) in conjugate_models()?.into_iter().enumerate() {
        let mi = gaussian_mi_cmi(m.as_ref())?.mi.value;
        let s = rng::derive(seed, i as u64);
        let full = mi_upper_bound(m.as_ref(), Block::Shared, MiBoundVariant::Full, &b, s)?;
        let weak = mi_upper_bound(m.as_ref(), Block::Shared, MiBoundVariant::Weak, &b, s)?;
        c.push(Check::at_most(format!("mi <= bound: {name}"), full.value, mi, 3.0 * full.std_error + 1e-12));
        c.push(Check::at_most(
            format!("bound <= weak bound: {name}"),
            weak.value,
            full.value,
            3.0 * full.std_error.hypot(weak.std_error) + 1e-12,
        ));
    }
    for (name, hp, p_or_m) in [
        ("normal-location", "", false),
        ("normal-location", "n=5", false),
        ("redundant-location", "", false),
        ("split-means", "n=3,split=1", false),
        ("simple-reg-2obs", "sigma_b=1", true),
    ] {
        let m = if p_or_m { pair(name, hp)?.expanded.clone() } else { model(name, hp)? };
        let lg = m.linear_gaussian().ok_or_else(|| Error::Unsupported(format!("{name} is not linear-Gaussian")))?;
        let info = m.fisher(&vec![0.0; m.d_total()], m.n_obs()).ok_or_else(|| Error::Unsupported("no closed-form Fisher".into()))?;
        let tr = (lg.posterior_cov(m.n_obs()) * &info).trace();
        let iota = linalg::eigenvalues(&info)?.into_iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
        c.push(Check::within(format!("sum iota/(1+iota) = tr(E Sigma E I): {name} {hp}"), tr, cmi_lower_bound_analytic(&iota, 1)?, 1e-6));
    }
    let bvm = FisherBudget { n_mc: 8, ..budget() };
    let pois = pair("poisson-negbin", "n=1000")?.base.clone();
    let t = cmi_trace_term(pois.as_ref(), 40, None, &bvm, rng::derive(seed, 100))?;
    c.push(Check::within("BvM trace term ~ d: poisson n=1000", 1.0, t.value, 0.1));
    let sm = model("split-means", "n=500,split=1")?;
    let t = cmi_trace_term(sm.as_ref(), 40, None, &bvm, rng::derive(seed, 101))?;
    c.push(Check::within("BvM trace term ~ d: split-means 2x500", 2.0, t.value, 0.2));
    Ok(c)
}

/// Spearman correlation with average ranks for ties.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Predictor correlations for the two-observation regression sweep.
pub const CORRELATION_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 0.95];

fn tradeoff_ordering(seed: u64) -> Result<Vec<Check>> {
    let mut c = Vec::new();
    let (mut mi, mut cmi) = (Vec::new(), Vec::new());
    for (i, cl) in CORRELATION_LEVELS.iter().enumerate() {
        let t = tradeoff_report(&pair("simple-reg-2obs", &format!("c={cl}"))?, &budget(), 1, 0.5, rng::derive(seed, i as u64))?;
        c.push(Check::flag(format!("c={cl} mi bound (expanded)"), t.mi_bound_exp, true, "reported").info());
        c.push(Check::flag(format!("c={cl} cmi term (expanded)"), t.cmi_term_exp, true, "reported").info());
        mi.push(t.mi_bound_exp);
        cmi.push(t.cmi_term_exp);
    }
    c.push(Check::within("rank correlation of mi bound and cmi term", -1.0, rank_correlation(&mi, &cmi), 1e-12));
    let t = tradeoff_report(&pair("poisson-negbin", "")?, &budget(), 1, 0.5, rng::derive(seed, 99))?;
    c.push(Check::flag("poisson-negbin totally diluting", 0.0, t.dilution == DilutionClass::TotallyDiluting, "classification"));
    c.push(Check::flag("poisson-negbin diluting inequality", t.mi_bound_base, t.diluting_holds == Some(true), "psi1(sum iota_cond) <= psi1(sum iota)"));
    Ok(c)
}

const CASES: usize = 1000;

fn random_spd(d: usize, r: &mut dyn RngCore) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| dist::std_normal(r));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn count(name: &str, fails: usize) -> Check {
    Check::flag(format!("{name} ({CASES} cases)"), fails as f64, fails == 0, "0 failures")
}

fn randint(r: &mut dyn RngCore, lo: usize, hi: usize) -> usize {
    lo + (r.next_u64() % (hi - lo + 1) as u64) as usize
}

fn properties(seed: u64) -> Result<Vec<Check>> {
    let mut c = Vec::new();
    let mut r = rng::seeded(seed);

    let mut fails = 0;
    for i in 0..CASES {
        let n = randint(&mut r, 1, 4);
        let sp = 0.1 + 4.0 * dist::uniform(&mut r);
        let m = model("normal-location", &format!("n={n},sigma_p={sp}"))?;
        let p = m.sample_prior(&mut r);
        let y = m.sample_data(&p, n, &mut r);
        let d = exact_draws(m.as_ref(), &y, 50, rng::derive(seed, i as u64))?;
        let e = estimate_psd(&y, m.as_ref(), &d, &PsdConfig { s_outer: 20, n_inner: 2, n_rep: None }, i as u64)?;
        fails += usize::from(e.value < -3.0 * e.std_error);
    }
    c.push(count("KL >= -3 s.e.", fails));

    let mut fails = 0;
    for _ in 0..CASES {
        let (a, b, k) = (randint(&mut r, 1, 3), randint(&mut r, 1, 3), randint(&mut r, 1, 3));
        let j = JointGaussian::new(random_spd(a + b + k, &mut r))?;
        let ia: Vec<usize> = (0..a).collect();
        let ib: Vec<usize> = (a..a + b).collect();
        let ic: Vec<usize> = (a + b..a + b + k).collect();
        let bc: Vec<usize> = (a..a + b + k).collect();
        let lhs = j.mi(&ia, &bc)?;
        let rhs = j.mi(&ia, &ib)? + j.cmi(&ia, &ic, &ib)?;
        fails += usize::from((lhs - rhs).abs() > 1e-9 * (1.0 + lhs.abs()));
    }
    c.push(count("chain rule on 3-block Gaussians", fails));

    let mut fails = 0;
    for _ in 0..CASES {
        let (p, n) = (randint(&mut r, 1, 3), randint(&mut r, 1, 6));
        let x = DMatrix::from_fn(n, p, |_, _| dist::std_normal(&mut r));
        let j = JointGaussian::linear(&random_spd(p, &mut r), &[x], 0.2 + dist::uniform(&mut r));
        let th: Vec<usize> = (0..p).collect();
        let ys: Vec<usize> = (p..p + n).collect();
        let j2 = j.append_linear(&ys, &DMatrix::from_element(1, n, 1.0 / n as f64));
        let full = j2.mi(&th, &ys)?;
        let mean = j2.mi(&th, &[p + n])?;
        fails += usize::from(mean > full + 1e-10);
    }
    c.push(count("data processing for the sample mean", fails));

    let mut fails = 0;
    for i in 0..CASES {
        let d = randint(&mut r, 1, 2);
        let kind = i % 2;
        let sc: Vec<f64> = (0..d).map(|_| 0.5 + 2.0 * dist::uniform(&mut r)).collect();
        let v: Vec<f64> = (0..400 * d)
            .map(|k| {
                let u = dist::uniform(&mut r);
                sc[k % d] * if kind == 0 { u } else { -(1.0 - u).ln() }
            })
            .collect();
        let draws = PosteriorDraws::new(v, d, None, i as u64, SamplerKind::Exact)?;
        let h = knn_entropy(&draws, 4)?;
        let g = gaussian_entropy(&draws.cov())?;
        fails += usize::from(g.value < h.value - 3.0 * h.std_error);
    }
    c.push(count("max-entropy dominance", fails));

    let mut fails = 0;
    for _ in 0..CASES {
        let (p, n) = (randint(&mut r, 1, 3), randint(&mut r, 1, 4));
        let x = DMatrix::from_fn(n, p, |_, _| dist::std_normal(&mut r));
        let f = GaussianFamily::new(x, 0.5 + dist::uniform(&mut r), random_spd(p, &mut r), p)?;
        let seq: Vec<f64> = (1..=5).map(|m| f.next_dataset_info(m)).collect::<Result<_>>()?;
        fails += usize::from(seq.windows(2).any(|w| w[1] >= w[0]));
    }
    let nl = GaussianFamily::from_model(model("normal-location", "")?.as_ref())?;
    for m in 1..=5 {
        let want = 0.5 * ((m as f64 + 2.0) / (m as f64 + 1.0)).ln();
        fails += usize::from((nl.next_dataset_info(m)? - want).abs() > 1e-12);
    }
    c.push(count("conditional mi decreasing for M = 1..5", fails));

    let mut fails = 0;
    for _ in 0..CASES {
        let n = randint(&mut r, 2, 6);
        let a = random_spd(n, &mut r);
        let drop = randint(&mut r, 0, n - 1);
        let keep: Vec<usize> = (0..n).filter(|&i| i != drop).collect();
        let la = linalg::eigenvalues(&a)?;
        let lb = linalg::eigenvalues(&linalg::submatrix(&a, &keep))?;
        let tol = 1e-9 * la[n - 1];
        fails += usize::from((0..n - 1).any(|i| lb[i] < la[i] - tol || lb[i] > la[i + 1] + tol));
    }
    c.push(count("eigenvalue interlacing", fails));

    let mut fails = 0;
    let grid: Vec<f64> = (0..=CASES).map(|i| 50.0 * (i as f64 / CASES as f64).powi(2)).collect();
    let v: Vec<f64> = grid.iter().map(|&x| psi(x)).collect::<Result<_>>()?;
    for i in 1..grid.len() {
        fails += usize::from(v[i] <= v[i - 1]);
        if i + 1 < grid.len() {
            // slope of successive chords must not increase
            let s1 = (v[i] - v[i - 1]) / (grid[i] - grid[i - 1]);
            let s2 = (v[i + 1] - v[i]) / (grid[i + 1] - grid[i]);
            fails += usize::from(s2 > s1 * (1.0 + 1e-9));
        }
    }
    c.push(count("psi monotone and concave", fails));

    let mut fails = 0;
    let models = conjugate_models()?;
    for _ in 0..CASES {
        let (_, m) = &models[randint(&mut r, 0, models.len() - 1)];
        let p: Vec<f64> = (0..m.d_total()).map(|_| 2.0 * dist::std_normal(&mut r)).collect();
        let y = m.sample_data(&p, m.n_obs(), &mut r);
        let fd = observed_info_fd(m.as_ref(), &y, &p)?.matrix;
        let exact = m.fisher(&p, y.n()).ok_or_else(|| Error::Unsupported("no closed form".into()))?;
        let scale = exact.abs().max().max(1e-300);
        fails += usize::from((fd - &exact).abs().max() > 1e-4 * scale.max(1.0));
    }
    c.push(count("finite-difference Hessian vs closed form", fails));
    Ok(c)
}

fn bootstrap_pipeline(seed: u64) -> Result<Vec<Check>> {
    let cfg = BootConfig { r: 100, seed, ..Default::default() };
    let sets = regenerate_datasets(seed)?;
    let mut c = vec![Check::flag(
        "equal cost 4 L_new M = M_new L",
        (4 * cfg.l_new * cfg.m) as f64,
        cfg.equal_cost(sets[0].n_groups()),
        "identity",
    )];
    let mut differ = 0.0f64;
    let mut spreads = Vec::new();
    for (i, y) in sets.iter().enumerate() {
        let cmp = compare_schemes(y, &GroupedExpanded::new(20, 2, 2.0, 1.0, 1.0), &BootConfig { seed: rng::derive(seed, i as u64), ..cfg.clone() })?;
        for sc in [Scheme::SameSubpops, Scheme::NewSubpops] {
            let post = cmp.cell(sc, Source::Posterior);
            let prior = cmp.cell(sc, Source::Prior);
            c.push(Check::at_most(format!("{} {sc:?} posterior rho_bar", y.name), 1.05, post.rho_bar, 0.0));
            c.push(Check::flag(format!("{} {sc:?} prior rho_bar", y.name), prior.rho_bar, true, "reported").info());
            let z = (post.rho_bar - prior.rho_bar).abs() / post.rho_se.hypot(prior.rho_se);
            differ = differ.max(z);
        }
        let same = cmp.cell(Scheme::SameSubpops, Source::Posterior).rho_sd;
        let new = cmp.cell(Scheme::NewSubpops, Source::Posterior).rho_sd;
        spreads.push((y.name.clone(), cmp.variance_ratio.unwrap_or(f64::NAN), same - new));
    }
    c.push(Check::at_least("max |posterior - prior| rho_bar in s.e.", 3.0, differ, 0.0));
    // The wider same-subpopulation spread belongs to the dataset with the
    // smallest between-group variance share, i.e. the largest σ*.
    for (k, (name, ratio, gap)) in spreads.into_iter().enumerate() {
        let check = Check::flag(format!("{name} (variance ratio {ratio:.2}): sd(rho_same) - sd(rho_new)"), gap, gap > 0.0, "> 0");
        c.push(if k == 0 { check } else { check.info() });
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_correlation_examples() {
        assert_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]), 1.0);
        assert!((rank_correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 2.0]) - 0.894_427_190_999_915_9).abs() < 1e-12);
    }

    #[test]
    fn topic_selection() {
        assert_eq!(select(Some("cmi")).unwrap(), vec![1, 2, 3]);
        assert_eq!(select(Some("7")).unwrap(), vec![7]);
        assert_eq!(select(None).unwrap().len(), 9);
        assert!(select(Some("nope")).is_err());
    }

    #[test]
    fn linreg_exact_drop_limits() {
        // no correlation: only the τ term survives
        let v = linreg_exact_drop(20.0, 0.0, 1e-6, 1.0);
        assert!((v - 0.5 * (1.0 - (1.0f64 / 21.0).powi(2))).abs() < 1e-9);
    }

    #[test]
    fn analytic_criterion_passes() {
        let c = run(1, 0);
        assert!(c.pass(), "{c:?}");
    }
}
