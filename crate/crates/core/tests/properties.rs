use ccasched_core::dataset::split_rois;
use ccasched_core::features::pca;
use ccasched_core::scheduler::variation;
use ccasched_core::*;
use proptest::prelude::*;

fn column(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pearson_is_symmetric_and_affine_invariant(
        (x, y) in (3usize..40).prop_flat_map(|n| (column(n), column(n))),
        a in 0.01..50.0f64,
        b in -10.0..10.0f64,
    ) {
        let (Ok(r), Ok(r_sym)) = (pearson(&x, &y), pearson(&y, &x)) else { return Ok(()); };
        prop_assert!((r - r_sym).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
        let shifted: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&shifted, &y).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn rmae_is_zero_only_on_exact_predictions(actual in prop::collection::vec(0.01..100.0f64, 1..30), bump in 0.001..5.0f64) {
        prop_assert_eq!(rmae(&actual, &actual).unwrap(), 0.0);
        let off: Vec<f64> = actual.iter().map(|v| v + bump).collect();
        prop_assert!(rmae(&off, &actual).unwrap() > 0.0);
    }

    #[test]
    fn variation_rule_matches_its_definition(
        scores in prop::collection::vec(0.01..10.0f64, 48),
        threshold in 0.0..0.9f64,
    ) {
        let arch = Architecture { variation_threshold: threshold, ..Default::default() };
        let configs = arch.feasible_configs();
        let pairs: Vec<_> = configs.iter().copied().zip(scores.iter().copied()).collect();
        let d = decide(&RoiId::new("p", 1), pairs.clone(), &arch).unwrap();
        let min_of = |core: CoreType| pairs.iter().filter(|(c, _)| c.core == core).map(|p| p.1).fold(f64::INFINITY, f64::min);
        let (base, comp) = (min_of(CoreType::Base), min_of(CoreType::Composed));
        prop_assert_eq!(d.best_base.edp, base);
        prop_assert_eq!(d.best_comp.edp, comp);
        let want = if variation(base, comp).unwrap() >= threshold { CoreType::Composed } else { CoreType::Base };
        prop_assert_eq!(d.chosen.core, want);
        prop_assert!(feasible(&d.chosen, &arch));
    }

    #[test]
    fn scaler_maps_training_rows_into_unit_box(x in prop::collection::vec(column(4), 2..30)) {
        let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let s = Scaler::fit_rows(&rows).unwrap();
        for r in &rows {
            for v in s.apply(r).unwrap() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn roi_split_partitions_the_regions(n in 2u32..60, fraction in 0.05..0.95f64, seed in any::<u64>()) {
        let ids: Vec<RoiId> = (1..=n).map(|i| RoiId::new("w", i)).collect();
        let (train, test) = split_rois(&ids, fraction, seed).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        prop_assert_eq!(train.len() + test.len(), ids.len());
        prop_assert!(train.iter().all(|r| !test.contains(r)));
        prop_assert_eq!(split_rois(&ids, fraction, seed).unwrap(), (train, test));
    }

    #[test]
    fn pca_variance_shares_sum_to_one(x in prop::collection::vec(column(4), 5..40)) {
        let y = vec![1.0; x.len()];
        let table = dataset::TrainTable::from_matrix(x, y).unwrap();
        let Ok(r) = pca(&table) else { return Ok(()); };
        let total: f64 = r.explained_variance.iter().sum();
        prop_assert!(total == 0.0 || (total - 1.0).abs() < 1e-9);
        prop_assert!(r.eigenvalues.iter().all(|v| *v >= 0.0));
        prop_assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synthetic_csv_round_trips(seed in any::<u64>(), noise in 0.0..0.2f64) {
        let spec = SyntheticSpec { n_workloads: 2, rois_per_workload: 3, noise_sd: noise, seed, ..Default::default() };
        let (ds, oracle) = generate_synthetic(&spec, &Architecture::default()).unwrap();
        let text = ds.to_csv_string();
        let back = Dataset::read_csv(text.as_bytes(), "memory").unwrap();
        prop_assert_eq!(back.to_csv_string(), text);
        let otext = oracle.to_csv_string();
        prop_assert_eq!(OracleTable::read_csv(otext.as_bytes(), "memory").unwrap().to_csv_string(), otext);
    }
}
