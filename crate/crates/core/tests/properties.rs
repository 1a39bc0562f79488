use modelexp::checks::{conditional_pppv, tail_p, Tail, TestStatistic};
use modelexp::fisher::{cmi_lower_bound_analytic, psi};
use modelexp::info::{gaussian_mi_cmi, JointGaussian};
use modelexp::linalg;
use modelexp::model::{builtin, builtin_names, default_probes, validate_expansion, Builtin, DataSet, Hyper, LinearGaussian};
use modelexp::rng;
use modelexp::samplers::{exact_draws, grid_posterior};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn spd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(d, d).prop_map(move |a| &a * a.transpose() + DMatrix::identity(d, d) * 0.1)
}

fn sized_spd(lo: usize, hi: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (lo..=hi).prop_flat_map(spd)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn chain_rule_on_three_blocks(a in 1usize..=2, b in 1usize..=2, c in 1usize..=2, seed in any::<u64>()) {
        let cov = {
            let mut r = rng::seeded(seed);
            let n = a + b + c;
            let m = DMatrix::from_fn(n, n, |_, _| modelexp::dist::std_normal(&mut r));
            &m * m.transpose() + DMatrix::identity(n, n) * 0.1
        };
        let j = JointGaussian::new(cov).unwrap();
        let ia: Vec<usize> = (0..a).collect();
        let ib: Vec<usize> = (a..a + b).collect();
        let ic: Vec<usize> = (a + b..a + b + c).collect();
        let whole = j.mi(&ia, &[ib.clone(), ic.clone()].concat()).unwrap();
        let parts = j.mi(&ia, &ib).unwrap() + j.cmi(&ia, &ic, &ib).unwrap();
        prop_assert!(close(whole, parts, 1e-9), "{whole} vs {parts}");
        prop_assert!(j.cmi(&ia, &ic, &ib).unwrap() >= -1e-10);
    }

    #[test]
    fn interlacing_of_principal_submatrices(a in sized_spd(2, 6), pick in any::<u64>()) {
        let n = a.nrows();
        let drop = (pick % n as u64) as usize;
        let keep: Vec<usize> = (0..n).filter(|&i| i != drop).collect();
        let la = linalg::eigenvalues(&a).unwrap();
        let lb = linalg::eigenvalues(&linalg::submatrix(&a, &keep)).unwrap();
        let tol = 1e-9 * la[n - 1];
        for i in 0..n - 1 {
            prop_assert!(lb[i] >= la[i] - tol && lb[i] <= la[i + 1] + tol);
        }
    }

    #[test]
    fn psi_monotone_and_concave(x in 0.0..100.0f64, h in 1e-3..10.0f64) {
        let (a, b, c) = (psi(x).unwrap(), psi(x + h).unwrap(), psi(x + 2.0 * h).unwrap());
        prop_assert!(b >= a);
        prop_assert!(c - b <= (b - a) + 1e-12);
    }

    #[test]
    fn cmi_lower_bound_below_trace_identity(iota in prop::collection::vec(0.0..50.0f64, 1..6), r in 1usize..5) {
        let lb = cmi_lower_bound_analytic(&iota, r).unwrap();
        // tr(E Σ · E I) for a unit-prior Gaussian with r replications:
        // posterior precision 1 + r ι_i, so the trace is Σ ι_i / (1 + r ι_i).
        let tr: f64 = iota.iter().map(|&x| x / (1.0 + r as f64 * x)).sum();
        prop_assert!(lb <= tr + 1e-12);
        prop_assert!(lb <= iota.len() as f64 / r as f64 + 1e-12);
    }

    #[test]
    fn tail_probabilities_are_probabilities(t in prop::collection::vec(-5.0..5.0f64, 1..50), obs in -6.0..6.0f64) {
        let (r, l, two) = (tail_p(&t, obs, Tail::Right), tail_p(&t, obs, Tail::Left), tail_p(&t, obs, Tail::Two));
        prop_assert!((0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&two));
        // ties count on both sides
        prop_assert!(r + l >= 1.0 - 1e-12);
        prop_assert_eq!(tail_p(&t, f64::NEG_INFINITY, Tail::Right), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// I(θ; y) does not change under θ → Aθ for invertible A.
    #[test]
    fn mi_invariant_under_linear_reparametrization(
        x in (1usize..5, 1usize..4).prop_flat_map(|(n, p)| (matrix(n, p), spd(p), matrix(p, p))),
        sd in 0.2..3.0f64,
    ) {
        let (x, prior, a) = x;
        let p = x.ncols();
        let a = a + DMatrix::identity(p, p) * 3.0;
        prop_assume!(a.clone().try_inverse().is_some() && a.determinant().abs() > 1e-3);
        let ainv = a.clone().try_inverse().unwrap();
        let m1 = LinearGaussian::new("m", x.clone(), sd, DVector::zeros(p), prior.clone(), p);
        let m2 = LinearGaussian::new("m", &x * &ainv, sd, DVector::zeros(p), &a * &prior * a.transpose(), p);
        let (i1, i2) = (gaussian_mi_cmi(&m1).unwrap(), gaussian_mi_cmi(&m2).unwrap());
        prop_assert!(close(i1.mi.value, i2.mi.value, 1e-8));
        prop_assert!(close(i1.cmi.value, i2.cmi.value, 1e-8));
    }

    #[test]
    fn sample_mean_carries_no_more_information(
        x in (1usize..4, 1usize..7).prop_flat_map(|(p, n)| (matrix(n, p), spd(p))),
        sd in 0.2..2.0f64,
    ) {
        let (x, prior) = x;
        let (n, p) = x.shape();
        let j = JointGaussian::linear(&prior, &[x], sd);
        let th: Vec<usize> = (0..p).collect();
        let ys: Vec<usize> = (p..p + n).collect();
        let j2 = j.append_linear(&ys, &DMatrix::from_element(1, n, 1.0 / n as f64));
        prop_assert!(j2.mi(&th, &[p + n]).unwrap() <= j2.mi(&th, &ys).unwrap() + 1e-10);
    }

    #[test]
    fn grouped_dataset_labels_are_dense(groups in prop::collection::vec(0usize..4, 1..20)) {
        let y = DataSet::new(vec![0.0; groups.len()]).unwrap().with_groups(groups.clone());
        let mut seen = groups.clone();
        seen.sort_unstable();
        seen.dedup();
        let dense = seen.iter().enumerate().all(|(i, &g)| i == g);
        prop_assert_eq!(y.is_ok(), dense);
        if let Ok(y) = y {
            let back = DataSet::from_csv(&y.to_csv()).unwrap();
            prop_assert_eq!(&back.values, &y.values);
            // a single group 0 reads back as ungrouped
            if seen.len() > 1 {
                prop_assert_eq!(back.n_groups(), seen.len());
            }
        }
    }
}

fn all_models() -> Vec<std::sync::Arc<dyn modelexp::model::Model>> {
    let mut out = Vec::new();
    for name in builtin_names() {
        match builtin(name, &Hyper::new()).unwrap() {
            Builtin::Model(m) => out.push(m),
            Builtin::Pair(p) => {
                out.push(p.base.clone());
                out.push(p.expanded.clone());
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Prior draws give finite densities, and simulated data a finite likelihood.
    #[test]
    fn simulated_data_has_finite_likelihood(seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        for m in all_models() {
            let p = m.sample_prior(&mut r);
            prop_assert_eq!(p.len(), m.d_total());
            prop_assert!(m.log_prior(&p).is_finite(), "{}", m.name());
            let y = m.sample_data(&p, m.n_obs(), &mut r);
            prop_assert!(m.log_lik(&y, &p).is_finite(), "{}", m.name());
        }
    }

    /// Weighted mean of the conditional p-values is the marginal p-value.
    #[test]
    fn conditional_p_values_average_to_marginal(y0 in -3.0..3.0f64, seed in any::<u64>(), two in any::<bool>()) {
        let Builtin::Model(m) = builtin("normal-location", &Hyper::new()).unwrap() else { unreachable!() };
        let y = DataSet::new(vec![y0]).unwrap();
        let d = exact_draws(m.as_ref(), &y, 40, seed).unwrap();
        let stat = TestStatistic::mean().with_tail(if two { Tail::Two } else { Tail::Right });
        let res = conditional_pppv(m.as_ref(), &y, &d, &stat, 100, seed).unwrap();
        prop_assert!(res.conditional_p.iter().all(|p| (0.0..=1.0).contains(p)));
        let avg: f64 = res.conditional_p.iter().enumerate().map(|(i, p)| d.weight(i) * p).sum();
        prop_assert!((avg - res.marginal_p).abs() < 1e-12);
    }

    #[test]
    fn grid_weights_normalized(y0 in -4.0..4.0f64, res in 20usize..200) {
        let Builtin::Model(m) = builtin("student-t-outlier", &Hyper::new()).unwrap() else { unreachable!() };
        let y = DataSet::new(vec![y0, -y0]).unwrap();
        let d = grid_posterior(m.as_ref(), &y, &[(-15.0, 15.0)], res).unwrap();
        let s: f64 = (0..d.len()).map(|i| d.weight(i)).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!((0..d.len()).all(|i| d.weight(i) >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_pair_reduces_to_its_base(seed in any::<u64>()) {
        for name in builtin_names() {
            if let Builtin::Pair(p) = builtin(name, &Hyper::new()).unwrap() {
                let rep = validate_expansion(&p, &default_probes(&p, seed), p.default_tolerance()).unwrap();
                prop_assert!(rep.pass, "{name}: {:?}", rep.ladder_discrepancy);
            }
        }
    }
}
