use meint::data::{all_entities, Dataset, FeatureSet};
use meint::interact::{cd_fit, km_weights, CdOptions};
use meint::io::{read_matrix_csv, write_matrix_csv};
use meint::par::Execution;
use meint::regulation::{estimate_regulation, kkt_report, lasso_column, soft_threshold, LambdaRule};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn standardize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
        let sd = c.norm();
        if sd > 0.0 {
            c /= sd;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn soft_threshold_shrinks_toward_zero(z in -10.0f64..10.0, t in 0.0f64..5.0) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert!((z.abs() - s.abs() - t.min(z.abs())).abs() < 1e-12);
    }

    #[test]
    fn lasso_solution_satisfies_kkt(r in matrix(20, 6), g in prop::collection::vec(-3.0f64..3.0, 20), frac in 0.05f64..0.9) {
        let r = standardize(&r);
        let g = DVector::from_vec(g);
        let lmax = r.tr_mul(&g).amax();
        prop_assume!(lmax > 1e-6);
        let lambda = frac * lmax;
        let theta = lasso_column(&r, &g, lambda).unwrap();
        prop_assert!(kkt_report(&r, &g, lambda, &theta).passes(lambda, 1e-6));
    }

    #[test]
    fn regulation_is_execution_independent(r in matrix(15, 5), g in matrix(15, 4)) {
        let ds = Dataset::new(standardize(&g), standardize(&r), DMatrix::zeros(15, 1), DVector::zeros(15), None).unwrap();
        let a = estimate_regulation(&ds, LambdaRule::PerColumnBic, Execution::Sequential);
        let b = estimate_regulation(&ds, LambdaRule::PerColumnBic, Execution::Parallel);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.theta, b.theta),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn km_weights_are_a_subprobability(
        times in prop::collection::vec(0.0f64..10.0, 2..40),
        seed in prop::collection::vec(any::<bool>(), 40),
    ) {
        let delta: Vec<bool> = seed[..times.len()].to_vec();
        let w = km_weights(&times, &delta);
        let by = w.by_subject();
        prop_assert!(by.iter().all(|v| *v >= 0.0));
        prop_assert!(w.total() <= 1.0 + 1e-12);
        for (i, d) in delta.iter().enumerate() {
            if !d {
                prop_assert_eq!(by[i], 0.0);
            }
        }
        if delta.iter().all(|d| *d) {
            prop_assert!((w.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hierarchical_fit_never_orphans_interactions(
        x in matrix(30, 4),
        e in matrix(30, 2),
        y in prop::collection::vec(-3.0f64..3.0, 30),
        l1 in 0.5f64..5.0,
        l2 in 0.5f64..5.0,
    ) {
        let ds = Dataset::new(standardize(&x.columns(0, 2).into_owned()), standardize(&x.columns(2, 2).into_owned()),
            standardize(&e), DVector::from_vec(y), None).unwrap();
        let fs = FeatureSet::individual(&ds, all_entities(ds.p(), ds.q()));
        let model = cd_fit(&fs, &ds.e, &ds.y, l1, l2, None, &CdOptions::default(), None).unwrap();
        prop_assert_eq!(model.hierarchy_violations(), 0);
        for d in 0..fs.p_z() {
            for m in 0..model.m() {
                prop_assert!(model.gamma[d] != 0.0 || model.individual_interaction(m, d) == 0.0);
            }
        }
    }

    #[test]
    fn matrix_csv_round_trips_exactly(m in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let values = DMatrix::from_vec(4, 3, m);
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        write_matrix_csv(&path, &names, &values).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        prop_assert_eq!(back.names, names);
        prop_assert_eq!(back.values, values);
    }
}
