//! Grid, Metropolis and exact posteriors against the conjugate oracle on
//! every linear-Gaussian builtin.

use std::sync::Arc;

use modelexp::model::{builtin, builtin_names, Builtin, DataSet, Hyper, Model};
use modelexp::rng;
use modelexp::samplers::{batch_means_se, exact_draws, exact_gaussian_posterior, grid_posterior, posterior_draws, rwm_sample};

fn conjugate() -> Vec<Arc<dyn Model>> {
    let mut out: Vec<Arc<dyn Model>> = Vec::new();
    for name in builtin_names() {
        let ms = match builtin(name, &Hyper::new()).unwrap() {
            Builtin::Model(m) => vec![m],
            Builtin::Pair(p) => vec![p.base.clone(), p.expanded.clone()],
        };
        out.extend(ms.into_iter().filter(|m| m.linear_gaussian().is_some()));
    }
    out
}

fn data_for(m: &dyn Model, seed: u64) -> DataSet {
    let mut r = rng::seeded(seed);
    let p = m.sample_prior(&mut r);
    m.sample_data(&p, m.n_obs(), &mut r)
}

#[test]
fn metropolis_matches_oracle_on_conjugate_builtins() {
    let models = conjugate();
    assert!(models.len() >= 6);
    for (i, m) in models.iter().enumerate() {
        let y = data_for(m.as_ref(), i as u64);
        let oracle = exact_gaussian_posterior(m.as_ref(), &y).unwrap();
        let d = rwm_sample(m.as_ref(), &y, 40_000, 4_000, 100 + i as u64).unwrap();
        for j in 0..m.d_total() {
            let col = d.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let se = batch_means_se(&col);
            let sd_true = oracle.cov[(j, j)].sqrt();
            assert!((mean - oracle.mean[j]).abs() < 3.0 * se, "{} coord {j}: {mean} vs {} ± {se}", m.name(), oracle.mean[j]);
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!((sd / sd_true - 1.0).abs() < 0.1, "{} coord {j}: sd {sd} vs {sd_true}", m.name());
        }
    }
}

#[test]
fn exact_draws_match_oracle() {
    for (i, m) in conjugate().iter().enumerate() {
        let y = data_for(m.as_ref(), 50 + i as u64);
        let oracle = exact_gaussian_posterior(m.as_ref(), &y).unwrap();
        let Ok(d) = exact_draws(m.as_ref(), &y, 20_000, i as u64) else { continue };
        for j in 0..m.d_total() {
            let col = d.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let se = oracle.cov[(j, j)].sqrt() / (col.len() as f64).sqrt();
            assert!((mean - oracle.mean[j]).abs() < 3.0 * se.max(1e-12), "{} coord {j}", m.name());
        }
    }
}

#[test]
fn grid_matches_oracle_where_declared() {
    let mut checked = 0;
    for (i, m) in conjugate().iter().enumerate() {
        let Some(b) = m.grid_bounds() else { continue };
        if m.d_total() > 2 {
            continue;
        }
        let y = data_for(m.as_ref(), 7 + i as u64);
        let oracle = exact_gaussian_posterior(m.as_ref(), &y).unwrap();
        let d = grid_posterior(m.as_ref(), &y, &b, if m.d_total() == 1 { 2001 } else { 201 }).unwrap();
        let mean = d.mean();
        for j in 0..m.d_total() {
            let sd = oracle.cov[(j, j)].sqrt();
            assert!((mean[j] - oracle.mean[j]).abs() < 0.02 * sd.max(1e-3), "{} coord {j}", m.name());
        }
        checked += 1;
    }
    assert!(checked >= 1);
}

#[test]
fn fixed_seed_gives_identical_draws() {
    for name in ["normal-location", "student-t-outlier", "normal-gamma"] {
        let Builtin::Model(m) = builtin(name, &Hyper::new()).unwrap() else { unreachable!() };
        let y = data_for(m.as_ref(), 3);
        let a = posterior_draws(m.as_ref(), &y, 500, 11).unwrap();
        assert_eq!(a, posterior_draws(m.as_ref(), &y, 500, 11).unwrap(), "{name}");
        let b = rwm_sample(m.as_ref(), &y, 500, 500, 11).unwrap();
        assert_eq!(b, rwm_sample(m.as_ref(), &y, 500, 500, 11).unwrap(), "{name}");
        assert_ne!(b, rwm_sample(m.as_ref(), &y, 500, 500, 12).unwrap(), "{name}");
    }
}
