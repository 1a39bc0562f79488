use std::sync::Arc;

use modelexp::checks::{check_scatter, conditional_pppv, TestStatistic};
use modelexp::model::{Builtin, DataSet, Model};
use modelexp::rng;
use modelexp::samplers::posterior_draws;
use serde_json::{json, Value};

use crate::artifact::{num, Artifacts};
use crate::config::RunConfig;
use crate::svg;
use crate::{resolve, Failure};

/// Parameter index or its exponential, for log-scale parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Param(usize),
    Exp(usize),
}

impl Projection {
    pub fn parse(s: &str, d: usize) -> Result<Self, Failure> {
        let bad = || Failure::usage(format!("projection `{s}`: expected param:K or exp:K with K < {d}"));
        let (kind, k) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k >= d {
            return Err(bad());
        }
        match kind {
            "param" => Ok(Projection::Param(k)),
            "exp" => Ok(Projection::Exp(k)),
            _ => Err(bad()),
        }
    }

    fn name(self) -> String {
        match self {
            Projection::Param(k) => format!("param_{k}"),
            Projection::Exp(k) => format!("exp_param_{k}"),
        }
    }

    fn eval(self, p: &[f64]) -> f64 {
        match self {
            Projection::Param(k) => p[k],
            Projection::Exp(k) => p[k].exp(),
        }
    }
}

fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation with posterior weights on the draws; NaN when
/// either side is constant.
pub fn weighted_rank_correlation(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let (ra, rb) = (midranks(a), midranks(b));
    let sw: f64 = w.iter().sum();
    let ma = ra.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / sw;
    let mb = rb.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / sw;
    let (mut c, mut va, mut vb) = (0.0, 0.0, 0.0);
    for ((x, y), wi) in ra.iter().zip(&rb).zip(w) {
        c += wi * (x - ma) * (y - mb);
        va += wi * (x - ma) * (x - ma);
        vb += wi * (y - mb) * (y - mb);
    }
    c / (va * vb).sqrt()
}

fn file_tag(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn run(cfg: &RunConfig, y: Option<DataSet>, stats: &[String], projections: &[String]) -> Result<(), Failure> {
    let model: Arc<dyn Model> = match resolve(cfg)? {
        Builtin::Model(m) => m,
        Builtin::Pair(p) => p.expanded.clone(),
    };
    let m = model.as_ref();
    let student = cfg.model.as_deref() == Some("student-t-outlier");
    let seed = cfg.seed;
    let y = match y {
        Some(y) => y,
        // the two-outlier dataset the check is known for
        None if student => DataSet::new((0..m.n_obs()).map(|i| if i == 0 { -10.0 } else { 10.0 }).collect())?,
        None => {
            let mut r = rng::stream(seed, 0xDA7A);
            let p = m.sample_prior(&mut r);
            m.sample_data(&p, m.n_obs(), &mut r)
        }
    };
    let stats: Vec<String> = if !stats.is_empty() {
        stats.to_vec()
    } else if student {
        vec!["neg-first".into(), "coord:1".into()]
    } else {
        vec!["mean".into()]
    };
    let stats = stats.iter().map(|s| TestStatistic::parse(s).map_err(Failure::from)).collect::<Result<Vec<_>, _>>()?;
    let projections: Vec<Projection> = if projections.is_empty() {
        (0..m.d_total()).map(Projection::Param).collect()
    } else {
        projections.iter().map(|s| Projection::parse(s, m.d_total())).collect::<Result<_, _>>()?
    };

    let draws = posterior_draws(m, &y, cfg.budget.draws, rng::derive(seed, 1))?;
    let ws: Vec<f64> = (0..draws.len()).map(|i| draws.weight(i)).collect();
    let mut out = Artifacts::new(cfg)?;
    out.csv("data", &y.to_csv())?;
    out.csv("draws", &draws.to_csv())?;
    out.json("draws", draws.sidecar())?;

    let mut summaries = Vec::new();
    let mut text = String::new();
    for (si, stat) in stats.iter().enumerate() {
        let res = conditional_pppv(m, &y, &draws, stat, cfg.budget.ppc_inner, rng::derive(seed, 10 + si as u64))?;
        text += &format!(
            "{}: T(y) = {:.6}, marginal p = {:.4}, mass with p < 0.01 = {:.4}\n",
            res.stat_name,
            res.t_obs,
            res.marginal_p,
            res.mass_below(0.01)
        );
        let mut proj_summary = Vec::new();
        for proj in &projections {
            let f = |p: &[f64]| proj.eval(p);
            let pts = check_scatter(&res, &draws, &f)?;
            let xs: Vec<f64> = pts.iter().map(|p| p.projection).collect();
            let ps: Vec<f64> = pts.iter().map(|p| p.conditional_p).collect();
            let rho = weighted_rank_correlation(&xs, &ps, &ws);
            let name = format!("{}-{}", file_tag(&res.stat_name), proj.name());
            let mut csv = String::from("draw_index,projection,conditional_p\n");
            for p in &pts {
                csv += &format!("{},{},{}\n", p.draw_index, p.projection, p.conditional_p);
            }
            out.csv(&format!("scatter-{name}"), &csv)?;
            let title = format!("{} against {}", res.stat_name, proj.name());
            out.svg(&format!("scatter-{name}"), &svg::check_scatter(&title, &proj.name(), &xs, &ps, &ws, res.marginal_p))?;
            text += &format!("  rank correlation with {}: {}\n", proj.name(), if rho.is_nan() { "undefined".into() } else { format!("{rho:.4}") });
            proj_summary.push(json!({ "projection": proj.name(), "rank_correlation": num(rho) }));
        }
        summaries.push(json!({
            "stat": res.stat_name,
            "tail": res.tail,
            "t_obs": num(res.t_obs),
            "marginal_p": num(res.marginal_p),
            "n_inner": res.n_inner,
            "seed": res.seed,
            "draws_seed": res.draws_seed,
            "mass_below_0.01": num(res.mass_below(0.01)),
            "mass_below_0.05": num(res.mass_below(0.05)),
            "dropped": res.dropped,
            "warnings": res.warnings,
            "projections": proj_summary,
        }));
    }
    print!("{text}");
    out.txt("ppc", &text)?;
    out.json("ppc", Value::Array(summaries))?;
    Ok(())
}
