//! Named built-in models and expansion pairs, addressable as
//! `name` + `key=value,...` hyperparameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{
    ExpansionPair, ExtReal, GroupedBase, GroupedExpanded, IndependentExtension, LinRegAddPred, LinearGaussian,
    Model, NegBin, NormalGamma, Poisson, StudentT,
};
use crate::error::{Error, Result};

pub type Hyper = BTreeMap<String, f64>;

#[derive(Debug, Clone)]
pub enum Builtin {
    Model(Arc<dyn Model>),
    Pair(ExpansionPair),
}

impl Builtin {
    pub fn model(&self) -> Option<&Arc<dyn Model>> {
        match self {
            Builtin::Model(m) => Some(m),
            Builtin::Pair(_) => None,
        }
    }
    pub fn pair(&self) -> Option<&ExpansionPair> {
        match self {
            Builtin::Pair(p) => Some(p),
            Builtin::Model(_) => None,
        }
    }
}

/// Parses `a=1,b=2.5`. Empty input gives an empty map.
pub fn parse_hp(s: &str) -> Result<Hyper> {
    let mut out = Hyper::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Hyperparam { name: part.into(), why: "expected key=value".into() })?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Hyperparam { name: k.trim().into(), why: format!("`{v}` is not a number") })?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

const NAMES: &[&str] = &[
    "normal-location",
    "redundant-location",
    "split-means",
    "normal-gamma",
    "prior-scale",
    "location-nuisance",
    "linreg-addpred",
    "poisson-negbin",
    "student-t-outlier",
    "grouped-base",
    "grouped-expanded",
    "grouped",
    "simple-reg-2obs",
    "flat",
    "independent-extension",
];

pub fn builtin_names() -> &'static [&'static str] {
    NAMES
}

struct Hp<'a> {
    map: &'a Hyper,
    allowed: Vec<&'static str>,
}

impl<'a> Hp<'a> {
    fn new(map: &'a Hyper) -> Self {
        Self { map, allowed: Vec::new() }
    }

    fn get(&mut self, k: &'static str, default: f64) -> f64 {
        self.allowed.push(k);
        self.map.get(k).copied().unwrap_or(default)
    }

    fn pos(&mut self, k: &'static str, default: f64) -> Result<f64> {
        let v = self.get(k, default);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Hyperparam { name: k.into(), why: format!("must be positive and finite, got {v}") })
        }
    }

    fn nonneg(&mut self, k: &'static str, default: f64) -> Result<f64> {
        let v = self.get(k, default);
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Hyperparam { name: k.into(), why: format!("must be nonnegative and finite, got {v}") })
        }
    }

    fn count(&mut self, k: &'static str, default: usize) -> Result<usize> {
        let v = self.get(k, default as f64);
        if v >= 1.0 && v.fract() == 0.0 && v < 1e7 {
            Ok(v as usize)
        } else {
            Err(Error::Hyperparam { name: k.into(), why: format!("must be a positive integer, got {v}") })
        }
    }

    fn in_range(&mut self, k: &'static str, default: f64, lo: f64, hi: f64) -> Result<f64> {
        let v = self.get(k, default);
        if (lo..=hi).contains(&v) {
            Ok(v)
        } else {
            Err(Error::Hyperparam { name: k.into(), why: format!("must lie in [{lo}, {hi}], got {v}") })
        }
    }

    fn finish(self) -> Result<()> {
        for k in self.map.keys() {
            if !self.allowed.contains(&k.as_str()) {
                return Err(Error::Hyperparam {
                    name: k.clone(),
                    why: format!("not a hyperparameter of this model (expected one of {:?})", self.allowed),
                });
            }
        }
        Ok(())
    }
}

fn ones(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, 1, 1.0)
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// y_i ~ normal(θ, 1), i ≤ n, θ ~ normal(0, σ_p).
pub fn normal_location(n: usize, sigma_p: f64) -> LinearGaussian {
    LinearGaussian::new("normal-location", ones(n), 1.0, DVector::zeros(1), diag(&[sigma_p * sigma_p]), 1)
}

/// 2n observations; with `split` the halves get their own means.
pub fn split_means(n: usize, split: bool) -> LinearGaussian {
    if split {
        let x = DMatrix::from_fn(2 * n, 2, |i, j| f64::from(u8::from((i < n) == (j == 0))));
        LinearGaussian::new("split-means-expanded", x, 1.0, DVector::zeros(2), DMatrix::identity(2, 2), 2)
    } else {
        LinearGaussian::new("split-means-base", ones(2 * n), 1.0, DVector::zeros(1), diag(&[1.0]), 1)
    }
}

/// Two observations at predictor rows x1 = (0, 1) and x2 = (√(1−c²), c).
pub fn simple_reg(c: f64, sigma_b: f64, expanded: bool) -> LinearGaussian {
    let v = sigma_b * sigma_b;
    if expanded {
        let s = (1.0 - c * c).sqrt();
        let x = DMatrix::from_row_slice(2, 2, &[0.0, s, 1.0, c]);
        LinearGaussian::new("simple-reg-2obs-expanded", x, 1.0, DVector::zeros(2), diag(&[v, v]), 1)
    } else {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        LinearGaussian::new("simple-reg-2obs-base", x, 1.0, DVector::zeros(1), diag(&[v]), 1)
    }
}

/// Returns the named model or pair. Unknown hyperparameter keys are rejected.
pub fn builtin(name: &str, hp: &Hyper) -> Result<Builtin> {
    let mut h = Hp::new(hp);
    let out = match name {
        "normal-location" | "prior-scale" => {
            let n = h.count("n", 1)?;
            let sp = h.pos("sigma_p", 1.0)?;
            let mut m = normal_location(n, sp);
            m.name = name.into();
            Builtin::Model(Arc::new(m))
        }
        "redundant-location" => {
            let n = h.count("n", 1)?;
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let x = DMatrix::from_fn(n, 2, |_, _| r);
            Builtin::Model(Arc::new(LinearGaussian::new(
                name,
                x,
                1.0,
                DVector::zeros(2),
                DMatrix::identity(2, 2),
                2,
            )))
        }
        "split-means" => {
            let n = h.count("n", 1)?;
            let s = h.in_range("split", 1.0, 0.0, 1.0)?;
            if s.fract() != 0.0 {
                return Err(Error::Hyperparam { name: "split".into(), why: "must be 0 or 1".into() });
            }
            Builtin::Model(Arc::new(split_means(n, s == 1.0)))
        }
        "normal-gamma" => {
            let n = h.count("n", 2)?;
            let v = h.pos("v", 1.0)?;
            Builtin::Model(Arc::new(NormalGamma::with_mean_variance(n, v)))
        }
        "flat" => {
            let n = h.count("n", 1)?;
            let x = DMatrix::zeros(n, 1);
            Builtin::Model(Arc::new(LinearGaussian::new("flat", x, 1.0, DVector::zeros(1), diag(&[1.0]), 1)))
        }
        "location-nuisance" => {
            let n = h.count("n", 1)?;
            let st = h.pos("sigma_theta2", 1.0)?;
            let sl = h.pos("sigma_lambda2", 3.0)?;
            let base = LinearGaussian::new("location-nuisance-base", ones(n), 1.0, DVector::zeros(1), diag(&[st]), 1);
            let x = DMatrix::from_element(n, 2, 1.0);
            let exp = LinearGaussian::new("location-nuisance", x, 1.0, DVector::zeros(2), diag(&[st, sl]), 1);
            Builtin::Pair(ExpansionPair::new(name, Arc::new(base), Arc::new(exp), vec![ExtReal::Finite(0.0)])?)
        }
        "linreg-addpred" => {
            let n = h.count("n", 20)?;
            let r1 = h.in_range("rho1", 0.7, -0.99, 0.99)?;
            let r2 = h.in_range("rho2", 0.0, -0.99, 0.99)?;
            let seed = h.nonneg("design_seed", 1.0)? as u64;
            if n < 4 {
                return Err(Error::Hyperparam { name: "n".into(), why: "need at least 4 observations".into() });
            }
            let base = LinRegAddPred::with_correlations(n, &[r1, r2], false, seed);
            let mut exp = base.clone();
            exp.with_z = true;
            Builtin::Pair(ExpansionPair::new(name, Arc::new(base), Arc::new(exp), vec![ExtReal::Finite(0.0)])?)
        }
        "poisson-negbin" => {
            let n = h.count("n", 5)?;
            let ls = h.pos("lambda_sd", 1.0)?;
            let lm = h.get("lambda_mean", 2.0);
            let base = Poisson { n, mu_mean: 0.0, mu_sd: 1.0 };
            let exp = NegBin { n, mu_mean: 0.0, mu_sd: 1.0, lambda_mean: lm, lambda_sd: ls };
            Builtin::Pair(ExpansionPair::new(name, Arc::new(base), Arc::new(exp), vec![ExtReal::PosInf])?)
        }
        "student-t-outlier" => {
            let n = h.count("n", 2)?;
            let df = h.pos("df", 10.0)?;
            let scale = h.pos("scale", 1.0)?;
            let lo = h.get("lo", -15.0);
            let hi = h.get("hi", 15.0);
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Hyperparam { name: "lo/hi".into(), why: "need finite lo < hi".into() });
            }
            Builtin::Model(Arc::new(StudentT { n, df, scale, lo, hi }))
        }
        "grouped-base" | "grouped-expanded" | "grouped" => {
            let m = h.count("m", 2)?;
            let l = h.count("l", 20)?;
            let sigma_star = h.pos("sigma_star", 1.0)?;
            let tau_mode = h.pos("tau_mode", 1.0)?;
            let mu_sd = h.pos("mu_sd", 2.0)?;
            let base = GroupedBase { l, m, sigma_star, mu_sd };
            let exp = GroupedExpanded::new(l, m, mu_sd, sigma_star, tau_mode);
            match name {
                "grouped-base" => Builtin::Model(Arc::new(base)),
                "grouped-expanded" => Builtin::Model(Arc::new(exp)),
                _ => Builtin::Pair(ExpansionPair::new(
                    name,
                    Arc::new(base),
                    Arc::new(exp),
                    vec![ExtReal::NegInf, ExtReal::Finite(sigma_star.ln())],
                )?),
            }
        }
        "simple-reg-2obs" => {
            let c = h.in_range("c", 0.5, 0.0, 0.999)?;
            let sb = h.pos("sigma_b", 3.0)?;
            Builtin::Pair(ExpansionPair::new(
                name,
                Arc::new(simple_reg(c, sb, false)),
                Arc::new(simple_reg(c, sb, true)),
                vec![ExtReal::Finite(0.0)],
            )?)
        }
        "independent-extension" => {
            let n = h.count("n", 1)?;
            let k = h.count("k", 1)?;
            let base: Arc<dyn Model> = Arc::new(normal_location(n, 1.0));
            let exp = IndependentExtension { base: base.clone(), k };
            Builtin::Pair(ExpansionPair::new(name, base, Arc::new(exp), vec![ExtReal::Finite(0.0); k])?)
        }
        _ => return Err(Error::UnknownModel(format!("`{name}` (known: {})", NAMES.join(", ")))),
    };
    h.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_probes, validate_expansion};

    #[test]
    fn every_name_builds_with_defaults() {
        for &n in builtin_names() {
            builtin(n, &Hyper::new()).unwrap_or_else(|e| panic!("{n}: {e}"));
        }
    }

    #[test]
    fn every_pair_validates() {
        for &n in builtin_names() {
            if let Builtin::Pair(p) = builtin(n, &Hyper::new()).unwrap() {
                let probes = default_probes(&p, 11);
                let r = validate_expansion(&p, &probes, p.default_tolerance()).unwrap();
                assert!(r.pass, "{n}: {:?}", r.ladder_discrepancy);
            }
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let hp = parse_hp("sigma_p=-1").unwrap();
        assert!(matches!(builtin("normal-location", &hp), Err(Error::Hyperparam { .. })));
        let hp = parse_hp("bogus=1").unwrap();
        assert!(builtin("normal-location", &hp).is_err());
        assert!(matches!(builtin("nope", &Hyper::new()), Err(Error::UnknownModel(_))));
        assert!(parse_hp("a").is_err());
        assert!(parse_hp("a=x").is_err());
        assert_eq!(parse_hp(" a = 2 , b=3").unwrap().len(), 2);
    }

    #[test]
    fn student_t_entry() {
        let hp = parse_hp("df=10,scale=1,lo=-15,hi=15").unwrap();
        let m = builtin("student-t-outlier", &hp).unwrap();
        let m = m.model().unwrap();
        assert_eq!(m.d_total(), 1);
        assert!((m.log_prior(&[0.0]) + 30f64.ln()).abs() < 1e-12);
        assert_eq!(m.log_prior(&[16.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn split_means_design() {
        let m = split_means(2, true);
        assert_eq!(m.x.column(0).as_slice(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.x.column(1).as_slice(), &[0.0, 0.0, 1.0, 1.0]);
    }
}
