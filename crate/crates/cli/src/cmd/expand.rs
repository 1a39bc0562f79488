use modelexp::fisher::{dilution_matrix, tradeoff_report};
use modelexp::info::gaussian_mi_cmi;
use modelexp::model::{builtin, Builtin};
use modelexp::rng;
use modelexp::suite::{rank_correlation, CORRELATION_LEVELS};
use serde_json::{json, Value};

use crate::artifact::{num, Artifacts};
use crate::config::RunConfig;
use crate::{resolve, Failure};

const SWEEP_PAIR: &str = "simple-reg-2obs";

/// The predictor-correlation sweep: exact MI and CMI of the expanded model
/// next to the Fisher-bound terms that track them.
fn sweep(cfg: &RunConfig, r: usize, delta: f64) -> Result<(String, Value), Failure> {
    let mut csv = String::from("c,mi_exact,cmi_exact,mi_bound_exp,cmi_term_exp,mi_bound_base,cmi_term_base\n");
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (i, &c) in CORRELATION_LEVELS.iter().enumerate() {
        let mut hp = cfg.hp.clone();
        hp.insert("c".into(), c);
        let Builtin::Pair(p) = builtin(SWEEP_PAIR, &hp)? else { unreachable!("registered as a pair") };
        let exact = gaussian_mi_cmi(p.expanded.as_ref())?;
        let t = tradeoff_report(&p, &cfg.budget.fisher, r, delta, rng::derive(cfg.seed, 100 + i as u64))?;
        csv += &format!(
            "{c},{},{},{},{},{},{}\n",
            exact.mi.value, exact.cmi.value, t.mi_bound_exp, t.cmi_term_exp, t.mi_bound_base, t.cmi_term_base
        );
        for (col, v) in cols.iter_mut().zip([exact.mi.value, exact.cmi.value, t.mi_bound_exp, t.cmi_term_exp]) {
            col.push(v);
        }
    }
    let summary = json!({
        "levels": CORRELATION_LEVELS,
        "rank_correlation_bound_terms": num(rank_correlation(&cols[2], &cols[3])),
        "rank_correlation_exact": num(rank_correlation(&cols[0], &cols[1])),
    });
    Ok((csv, summary))
}

pub fn run(cfg: &RunConfig, r: usize, delta: f64) -> Result<(), Failure> {
    let Builtin::Pair(pair) = resolve(cfg)? else {
        return Err(Failure::usage("expand-compare needs --pair"));
    };
    let fb = &cfg.budget.fisher;
    let t = tradeoff_report(&pair, fb, r, delta, rng::derive(cfg.seed, 1))?;
    let dil = dilution_matrix(&pair, fb, rng::derive(cfg.seed, 2))?;
    let matrix: Vec<Vec<Value>> = (0..dil.delta_dilute.nrows())
        .map(|i| (0..dil.delta_dilute.ncols()).map(|j| num(dil.delta_dilute[(i, j)])).collect())
        .collect();

    let mut out = Artifacts::new(cfg)?;
    let mut text = t.to_text();
    let mut terms = String::from("term,value\n");
    for (k, v) in [
        ("mi_bound_base", t.mi_bound_base),
        ("mi_bound_exp", t.mi_bound_exp),
        ("cmi_term_base", t.cmi_term_base),
        ("cmi_term_exp", t.cmi_term_exp),
        ("cmi_term_cond", t.cmi_term_cond),
        ("delta_i", t.delta_i),
        ("delta_f", t.delta_f),
        ("sum_delta_j", t.sum_delta_j),
        ("sum_delta_j_se", t.sum_delta_j_se),
    ] {
        terms += &format!("{k},{v}\n");
    }
    out.csv("terms", &terms)?;

    let mut result = json!({
        "report": t,
        "dilution": {
            "classification": dil.classification,
            "eigenvalues": dil.eigenvalues.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "eigen_se": dil.eigen_se.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "delta_dilute": matrix,
        },
    });
    if pair.name == SWEEP_PAIR {
        let (csv, summary) = sweep(cfg, r, delta)?;
        out.csv("sweep", &csv)?;
        text += &format!(
            "correlation sweep over c = {:?}: rank correlation of bound terms {}\n",
            CORRELATION_LEVELS, summary["rank_correlation_bound_terms"]
        );
        result["sweep"] = summary;
    }
    print!("{text}");
    out.txt("tradeoff", &text)?;
    out.json("tradeoff", result)?;

    if t.diluting_holds == Some(false) || t.nondiluting_holds == Some(false) {
        return Err(Failure::checks("the tradeoff inequality for this dilution class does not hold"));
    }
    Ok(())
}
