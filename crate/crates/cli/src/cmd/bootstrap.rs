use modelexp::bootstrap::{compare_schemes, regenerate_datasets, BootConfig, Comparison, Scheme, Source};
use modelexp::model::{builtin, DataSet, GroupedExpanded};
use modelexp::rng;
use serde_json::json;

use crate::artifact::{num, Artifacts};
use crate::config::RunConfig;
use crate::svg::{self, Series};
use crate::Failure;

const CELLS: [(Scheme, Source, &str); 4] = [
    (Scheme::SameSubpops, Source::Posterior, "same_posterior"),
    (Scheme::NewSubpops, Source::Posterior, "new_posterior"),
    (Scheme::SameSubpops, Source::Prior, "same_prior"),
    (Scheme::NewSubpops, Source::Prior, "new_prior"),
];

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::SameSubpops => "same-subpops",
        Scheme::NewSubpops => "new-subpops",
    }
}

fn source_name(s: Source) -> &'static str {
    match s {
        Source::Posterior => "posterior",
        Source::Prior => "prior",
    }
}

/// The expanded grouped model with scale hyperparameters from `--hp`; group
/// count and size follow the data.
fn model_for(cfg: &RunConfig, y: &DataSet) -> Result<GroupedExpanded, Failure> {
    let hp = &cfg.hp;
    // validates names and ranges through the registry
    builtin("grouped-expanded", hp)?;
    let l = y.n_groups();
    if l < 2 {
        return Err(Failure::usage("bootstrap needs grouped data (a group column with at least two groups)"));
    }
    let get = |k: &str, d: f64| hp.get(k).copied().unwrap_or(d);
    let (mu_sd, sigma_star, tau_mode) = (get("mu_sd", 2.0), get("sigma_star", 1.0), get("tau_mode", 1.0));
    Ok(GroupedExpanded::new(l, y.n() / l, mu_sd, sigma_star, tau_mode))
}

pub fn run(cfg: &RunConfig, data: Option<(DataSet, String)>) -> Result<(), Failure> {
    let sets: Vec<(DataSet, String)> = match data {
        Some(d) => vec![d],
        None => regenerate_datasets(cfg.seed)?.into_iter().map(|d| (d.clone(), d.name)).collect(),
    };
    let mut out = Artifacts::new(cfg)?;
    let mut comps: Vec<(String, Comparison)> = Vec::new();
    for (i, (y, name)) in sets.iter().enumerate() {
        let model = model_for(cfg, y)?;
        let bc = BootConfig { r: cfg.budget.boot_r, s: cfg.budget.boot_s, seed: rng::derive(cfg.seed, i as u64), ..Default::default() };
        if !bc.equal_cost(y.n_groups()) {
            eprintln!("note: {name}: the two schemes are not at equal cost for {} groups", y.n_groups());
        }
        comps.push((name.clone(), compare_schemes(y, &model, &bc)?));
        if cfg.options.get("data").and_then(|v| v.as_str()) == Some("generate") {
            out.csv(name, &y.to_csv())?;
        }
    }

    let mut table = String::from("dataset,variance_ratio");
    for (_, _, c) in CELLS {
        table += &format!(",{c}");
    }
    for (_, _, c) in CELLS {
        table += &format!(",{c}_se");
    }
    table += ",failed\n";
    let mut text = format!("{:<12} {:>8}", "dataset", "var.rat");
    for (_, _, c) in CELLS {
        text += &format!(" {c:>16}");
    }
    text += "\n";
    let mut hist = String::from("bin_left,bin_right,count,scheme,dataset,source\n");
    for (name, c) in &comps {
        let vr = c.variance_ratio.unwrap_or(f64::NAN);
        table += &format!("{name},{vr}");
        text += &format!("{name:<12} {vr:>8.3}");
        for (sc, so, _) in CELLS {
            let cell = c.cell(sc, so);
            table += &format!(",{}", cell.rho_bar);
            text += &format!(" {:>9.4} ± {:.4}", cell.rho_bar, cell.rho_se);
        }
        for (sc, so, _) in CELLS {
            table += &format!(",{}", c.cell(sc, so).rho_se);
        }
        table += &format!(",{}\n", c.cells.iter().map(|x| x.failed).sum::<usize>());
        text += "\n";
        for h in &c.histograms {
            for (k, n) in h.counts.iter().enumerate() {
                hist += &format!("{},{},{n},{},{name},{}\n", h.edges[k], h.edges[k + 1], scheme_name(h.scheme), source_name(h.source));
            }
        }
        let post: Vec<_> = c.histograms.iter().filter(|h| h.source == Source::Posterior).collect();
        if let (Some(same), Some(new)) = (
            post.iter().find(|h| h.scheme == Scheme::SameSubpops),
            post.iter().find(|h| h.scheme == Scheme::NewSubpops),
        ) {
            let svg = svg::histograms(
                &format!("{name}: posterior sd ratio after new data"),
                "rho = sigma_r / sigma_obs",
                &same.edges,
                &[
                    Series { label: "same subpopulations", counts: &same.counts, color: "#c0392b" },
                    Series { label: "new subpopulations", counts: &new.counts, color: "#1f5fa8" },
                ],
            );
            out.svg(&format!("hist-{name}"), &svg)?;
        }
    }
    print!("{text}");
    out.csv("table", &table)?;
    out.csv("histograms", &hist)?;
    out.txt("bootstrap", &text)?;
    let body: Vec<_> = comps
        .iter()
        .map(|(name, c)| {
            json!({
                "dataset": name,
                "variance_ratio": c.variance_ratio.map(num),
                "equal_cost": c.equal_cost,
                "cells": c.cells.iter().map(|cell| json!({
                    "scheme": cell.scheme,
                    "source": cell.source,
                    "rho_bar": num(cell.rho_bar),
                    "rho_se": num(cell.rho_se),
                    "rho_sd": num(cell.rho_sd),
                    "sigma_obs": num(cell.sigma_obs),
                    "failed": cell.failed,
                    "rho": cell.rho.iter().map(|&x| num(x)).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
                "config": c.cells.first().map(|x| json!(x.config)),
            })
        })
        .collect();
    out.json("bootstrap", json!({ "datasets": body }))?;
    Ok(())
}
