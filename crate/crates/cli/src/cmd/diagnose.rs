use std::sync::Arc;

use modelexp::fisher::{cmi_trace_term, mi_upper_bound, prior_expected_fisher, trace_bound_delta, Block, MiBoundVariant};
use modelexp::info::{estimate_cmi, estimate_psd, gaussian_mi_cmi, mi_decomposition, weak_id_verdict, InfoEstimate, MiBudget};
use modelexp::linalg;
use modelexp::model::{Builtin, DataSet, ExpansionPair, Model};
use modelexp::rng;
use modelexp::samplers::{posterior_draws, PosteriorDraws};
use modelexp::Error;
use serde_json::{json, Map, Value};

use crate::artifact::{csv_row, num, Artifacts};
use crate::config::RunConfig;
use crate::{hint, resolve, Failure};

/// Number of separated modes in a weighted 1-d sample: peaks of a lightly
/// smoothed 50-bin histogram above 10% of the tallest, merged unless the
/// valley between them drops below 60% of the lower peak.
pub fn count_modes(xs: &[f64], ws: &[f64]) -> usize {
    let bins = 50;
    let wmax = ws.iter().copied().fold(0.0, f64::max);
    let live: Vec<(f64, f64)> = xs.iter().zip(ws).filter(|(_, w)| **w > 1e-9 * wmax).map(|(x, w)| (*x, *w)).collect();
    let (lo, hi) = live.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
    if live.is_empty() || hi <= lo {
        return usize::from(!live.is_empty());
    }
    let mut h = vec![0.0; bins];
    for (x, w) in &live {
        h[(((x - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)] += w;
    }
    let s: Vec<f64> = (0..bins)
        .map(|i| {
            let l = if i > 0 { h[i - 1] } else { 0.0 };
            let r = if i + 1 < bins { h[i + 1] } else { 0.0 };
            (l + 2.0 * h[i] + r) / 4.0
        })
        .collect();
    let top = s.iter().copied().fold(0.0, f64::max);
    let peaks: Vec<usize> = (0..bins)
        .filter(|&i| {
            let l = if i > 0 { s[i - 1] } else { 0.0 };
            let r = if i + 1 < bins { s[i + 1] } else { 0.0 };
            s[i] >= 0.1 * top && s[i] > l && s[i] >= r
        })
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for p in peaks {
        match kept.last_mut() {
            Some(q) if s[*q..=p].iter().copied().fold(f64::INFINITY, f64::min) > 0.6 * s[*q].min(s[p]) => {
                if s[p] > s[*q] {
                    *q = p;
                }
            }
            _ => kept.push(p),
        }
    }
    kept.len().max(1)
}

struct Report {
    sections: Map<String, Value>,
    estimates: Vec<InfoEstimate>,
    flags: Vec<String>,
    hard_errors: usize,
}

impl Report {
    fn section(&mut self, name: &str, r: Result<Value, Error>) -> Option<Value> {
        match r {
            Ok(v) => {
                self.sections.insert(name.into(), v.clone());
                Some(v)
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                if let Some(h) = hint(&e) {
                    eprintln!("  hint: {h}");
                }
                if !matches!(e, Error::Unsupported(_)) {
                    self.hard_errors += 1;
                }
                self.sections.insert(
                    name.into(),
                    json!({ "status": "unavailable", "reason": e.to_string(), "hint": hint(&e) }),
                );
                None
            }
        }
    }

    fn estimate(&mut self, e: InfoEstimate) -> Value {
        let v = json!({ "quantity": e.quantity, "value": num(e.value), "se": num(e.std_error), "method": e.method, "config": e.config });
        self.estimates.push(e);
        v
    }
}

fn posterior_summary(draws: &PosteriorDraws) -> (Value, Vec<usize>) {
    let ws: Vec<f64> = (0..draws.len()).map(|i| draws.weight(i)).collect();
    let mean = draws.mean();
    let cov = draws.cov();
    let modes: Vec<usize> = (0..draws.d).map(|j| count_modes(&draws.column(j), &ws)).collect();
    let v = json!({
        "sampler": draws.sampler,
        "n_draws": draws.len(),
        "mean": mean.iter().map(|&x| num(x)).collect::<Vec<_>>(),
        "sd": (0..draws.d).map(|j| num(cov[(j, j)].max(0.0).sqrt())).collect::<Vec<_>>(),
        "modes": modes,
        "diagnostics": draws.diagnostics,
    });
    (v, modes)
}

pub fn run(cfg: &RunConfig, y: Option<DataSet>, epsilon: f64) -> Result<(), Failure> {
    let (model, pair): (Arc<dyn Model>, Option<ExpansionPair>) = match resolve(cfg)? {
        Builtin::Model(m) => (m, None),
        Builtin::Pair(p) => (p.expanded.clone(), Some(p)),
    };
    let m = model.as_ref();
    let b = &cfg.budget;
    let seed = cfg.seed;
    let y = match y {
        Some(y) => y,
        None => {
            let mut r = rng::stream(seed, 0xDA7A);
            let p = m.sample_prior(&mut r);
            m.sample_data(&p, m.n_obs(), &mut r)
        }
    };
    let draws = posterior_draws(m, &y, b.draws, rng::derive(seed, 1))?;
    let mut rep = Report { sections: Map::new(), estimates: Vec::new(), flags: Vec::new(), hard_errors: 0 };

    let (post, modes) = posterior_summary(&draws);
    rep.sections.insert("posterior".into(), post);
    for (j, k) in modes.iter().enumerate() {
        if *k > 1 {
            rep.flags.push(format!("bimodal: param_{j} posterior has {k} separated modes"));
        }
    }

    let mut mi = None;
    let info = match gaussian_mi_cmi(m) {
        Ok(g) => {
            mi = Some(g.mi.value);
            Ok(json!({ "mi": rep.estimate(g.mi), "mi_full": rep.estimate(g.mi_full), "cmi": rep.estimate(g.cmi) }))
        }
        Err(Error::Unsupported(_)) => estimate_cmi(m, &b.cmi, rng::derive(seed, 2)).map(|c| json!({ "cmi": rep.estimate(c) })),
        Err(e) => Err(e),
    };
    rep.section("information", info);

    let psd = estimate_psd(&y, m, &draws, &b.psd, rng::derive(seed, 3)).map(|e| {
        rep.flags.push(format!("psd: {:.4} ± {:.4} nats", e.value, e.std_error));
        rep.estimate(e)
    });
    rep.section("psd", psd);

    let bounds = (|| {
        let full = mi_upper_bound(m, Block::Shared, MiBoundVariant::Full, &b.fisher, rng::derive(seed, 4))?;
        let weak = mi_upper_bound(m, Block::Shared, MiBoundVariant::Weak, &b.fisher, rng::derive(seed, 4))?;
        let holds = mi.map(|v| v <= full.value + 3.0 * full.std_error + 1e-12);
        if holds == Some(false) {
            rep.flags.push("mi exceeds its Fisher upper bound".into());
        }
        Ok(json!({ "bound": rep.estimate(full), "weak_bound": rep.estimate(weak), "analytic_mi_within_bound": holds }))
    })();
    rep.section("mi_bounds", bounds);

    let trace = cmi_trace_term(m, b.trace_n_y, None, &b.fisher, rng::derive(seed, 5)).map(|e| {
        let mut v = rep.estimate(e);
        v["note"] = json!("computable part of the cmi lower bound; the universal constant is not applied");
        v
    });
    rep.section("cmi_trace_term", trace);

    let mut spectrum = Vec::new();
    let spec = prior_expected_fisher(m, Block::Shared, &b.fisher, rng::derive(seed, 6)).and_then(|f| {
        spectrum = linalg::eigenvalues(&f.matrix)?.to_vec();
        Ok(json!({ "block": Block::Shared, "eigenvalues": spectrum.iter().map(|&x| num(x)).collect::<Vec<_>>(), "trace": num(f.trace()), "warnings": f.warnings }))
    });
    rep.section("spectrum", spec);

    let shared: Vec<usize> = (0..m.d_shared()).collect();
    let weak = weak_id_verdict(m, &y, &shared, epsilon, Some(&draws), rng::derive(seed, 7)).map(|w| {
        if w.weak {
            rep.flags.push(format!("weakly identified: entropy gap {:.4} < ε = {epsilon}", w.gap));
        }
        json!(w)
    });
    rep.section("weak_identification", weak);

    if let Some(p) = &pair {
        let tb = trace_bound_delta(p, &b.fisher, rng::derive(seed, 8)).map(|t| json!(t));
        rep.section("trace_bound", tb);
        // scaled so the default preset reproduces the library default
        let mb = MiBudget { n_outer: 10 * b.fisher.n_prior, n_mix: 5 * b.fisher.n_lambda, n_lambda: (b.fisher.n_lambda / 2).max(1) };
        let dec = mi_decomposition(p, &mb, rng::derive(seed, 9)).map(|d| json!(d));
        rep.section("mi_decomposition", dec);
    }

    let mut out = Artifacts::new(cfg)?;
    out.csv("data", &y.to_csv())?;
    out.csv("draws", &draws.to_csv())?;
    out.json("draws", draws.sidecar())?;
    let mut est = String::from("quantity,value,se,method\n");
    for e in &rep.estimates {
        est += &csv_row(&[e.quantity.clone(), e.value.to_string(), e.std_error.to_string(), json!(e.method).as_str().unwrap_or("").to_string()]);
    }
    out.csv("estimates", &est)?;
    let mut sp = String::from("index,eigenvalue\n");
    for (i, v) in spectrum.iter().enumerate() {
        sp += &format!("{i},{v}\n");
    }
    out.csv("spectrum", &sp)?;

    let name = cfg.model.clone().or_else(|| cfg.pair.clone()).unwrap_or_default();
    let mut text = format!("model {name} ({}), d_shared {}, d_extra {}, n {}\n", m.name(), m.d_shared(), m.d_extra(), y.n());
    for e in &rep.estimates {
        text += &format!("  {:<28} {:>12.6}  se {:>10.6}\n", e.quantity, e.value, e.std_error);
    }
    if !spectrum.is_empty() {
        text += &format!("  spectrum (shared block): {}\n", spectrum.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "));
    }
    for (k, v) in &rep.sections {
        if v.get("status").and_then(Value::as_str) == Some("unavailable") {
            text += &format!("  {k}: unavailable ({})\n", v["reason"].as_str().unwrap_or(""));
        }
    }
    for f in &rep.flags {
        text += &format!("  flag: {f}\n");
    }
    print!("{text}");
    out.txt("diagnose", &text)?;
    out.json(
        "diagnose",
        json!({
            "model": name,
            "dims": { "shared": m.d_shared(), "extra": m.d_extra(), "n": y.n() },
            "flags": rep.flags,
            "sections": rep.sections,
        }),
    )?;
    if rep.hard_errors > 0 {
        return Err(Failure { code: 3, msg: format!("{} report sections failed", rep.hard_errors), hint: None });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_counting() {
        let grid: Vec<f64> = (0..2001).map(|i| -15.0 + 0.015 * i as f64).collect();
        let bump = |c: f64| move |x: f64| (-0.5 * (x - c) * (x - c)).exp();
        let two: Vec<f64> = grid.iter().map(|&x| bump(-10.0)(x) + bump(10.0)(x)).collect();
        let one: Vec<f64> = grid.iter().map(|&x| bump(0.0)(x)).collect();
        assert_eq!(count_modes(&grid, &two), 2);
        assert_eq!(count_modes(&grid, &one), 1);
        assert_eq!(count_modes(&[1.0, 1.0], &[1.0, 1.0]), 1);
        // noise inside one bump is not a second mode
        let wiggly: Vec<f64> = grid.iter().enumerate().map(|(i, &x)| bump(0.0)(x) * (1.0 + 0.05 * ((i % 7) as f64 - 3.0) / 3.0)).collect();
        assert_eq!(count_modes(&grid, &wiggly), 1);
    }
}
