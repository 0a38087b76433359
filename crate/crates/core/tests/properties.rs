use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use heartsense::aeho::{
    clan_update, mutate, run_aeho, separation_reinit, two_point_crossover, AehoConfig, Clan, Elephant,
};
use heartsense::dataio::{
    impute_missing, kfold_indices, parse_csv_str, write_csv, Attribute, AttributeKind, BinaryLabel, Dataset,
    MinMaxTable, Record,
};
use heartsense::mcfa::{decode_mask, logistic, optimize_continuous, McfaConfig};
use heartsense::metrics::{compute_metrics, prevalence_sweep, ConfusionMatrix};
use heartsense::network::{flatten, train_epochs, unflatten, DeltaMode, NetworkSpec, NetworkWeights, TrainParams};
use heartsense::Bounds;

fn value_for(attr: Attribute) -> BoxedStrategy<f64> {
    match attr.kind() {
        AttributeKind::Categorical(domain) => proptest::sample::select(domain.to_vec()).boxed(),
        AttributeKind::Numeric => (0u32..4000).prop_map(|v| v as f64 / 10.0).boxed(),
    }
}

fn record() -> impl Strategy<Value = Record> {
    let cells: Vec<BoxedStrategy<Option<f64>>> = Attribute::ALL
        .iter()
        .map(|&a| proptest::option::weighted(0.9, value_for(a)).boxed())
        .collect();
    (cells, 0u8..=4).prop_map(|(values, num)| Record { values, num })
}

fn dataset(max_rows: usize) -> impl Strategy<Value = Dataset> {
    proptest::collection::vec(record(), 1..max_rows).prop_map(|records| {
        let mut ds = Dataset::new("p", Attribute::ALL.to_vec());
        for r in records {
            ds.push(r).unwrap();
        }
        ds
    })
}

/// At least one present value per column, so imputation has donors.
fn imputable(ds: &Dataset) -> bool {
    (0..ds.schema.len()).all(|c| ds.records.iter().any(|r| r.values[c].is_some()))
}

fn spec_strategy() -> impl Strategy<Value = NetworkSpec> {
    (1usize..6, proptest::collection::vec(1usize..6, 1..3))
        .prop_map(|(inputs, hidden)| NetworkSpec::with_hidden(inputs, &hidden).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chaos_step_stays_in_unit_interval(delta in 1e-6f64..=4.0, x in 0.0f64..=1.0) {
        let y = logistic(delta, x);
        prop_assert!((0.0..=1.0).contains(&y));
    }

    #[test]
    fn csv_round_trip(ds in dataset(20)) {
        let back = parse_csv_str(&write_csv(&ds), &ds.schema, &ds.name).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn imputation_fills_and_is_idempotent(ds in dataset(25), k in 1usize..6) {
        prop_assume!(imputable(&ds));
        let once = impute_missing(&ds, k).unwrap();
        prop_assert_eq!(once.missing_count(), 0);
        for (a, b) in ds.records.iter().zip(&once.records) {
            for (x, y) in a.values.iter().zip(&b.values) {
                if let Some(x) = x {
                    prop_assert_eq!(Some(*x), *y);
                }
            }
        }
        for (col, attr) in once.schema.iter().enumerate() {
            for r in &once.records {
                prop_assert!(attr.accepts(r.values[col].unwrap()));
            }
        }
        prop_assert_eq!(impute_missing(&once, k).unwrap(), once);
    }

    #[test]
    fn scaled_values_in_unit_box(ds in dataset(25)) {
        prop_assume!(imputable(&ds));
        let full = impute_missing(&ds, 3).unwrap();
        let table = MinMaxTable::fit(&full).unwrap();
        for row in table.transform(&full, &full.schema).unwrap() {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn kfold_partitions_rows(labels in proptest::collection::vec(any::<bool>(), 4..60), k in 2usize..5, seed in any::<u64>()) {
        prop_assume!(k <= labels.len());
        let labels: Vec<BinaryLabel> = labels.into_iter().map(BinaryLabel::from).collect();
        let folds = kfold_indices(&labels, k, seed).unwrap();
        let mut seen: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.test.len(), labels.len());
        }
    }

    #[test]
    fn flatten_is_a_bijection(spec in spec_strategy(), seed in any::<u64>()) {
        let w = NetworkWeights::random(&spec, 3.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let flat = flatten(&w);
        prop_assert_eq!(flat.len(), spec.parameter_count());
        let back = unflatten(&spec, &flat).unwrap();
        prop_assert_eq!(flatten(&back), flat);
        prop_assert_eq!(back, w);
    }

    #[test]
    fn training_ignores_row_order(seed in any::<u64>(), rot in 0usize..8) {
        let spec = NetworkSpec::with_hidden(2, &[3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = NetworkWeights::random(&spec, 0.5, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 8.0, (i * 3 % 8) as f64 / 8.0]).collect();
        let targets: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let params = TrainParams { epochs: 3, learning_rate: 0.3, mode: DeltaMode::Derivative, seed };
        let (a, _) = train_epochs(&spec, &w, &inputs, &targets, &params).unwrap();
        let mut xi = inputs.clone();
        let mut ti = targets.clone();
        xi.rotate_left(rot);
        ti.rotate_left(rot);
        let (b, _) = train_epochs(&spec, &w, &xi, &ti, &params).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn crossover_conserves_slots(pair in (3usize..30).prop_flat_map(|n| (
        proptest::collection::vec(-5.0f64..5.0, n),
        proptest::collection::vec(-5.0f64..5.0, n),
    ))) {
        let (a, b) = pair;
        let (c1, c2) = two_point_crossover(&a, &b).unwrap();
        for i in 0..a.len() {
            let mut parents = [a[i], b[i]];
            let mut children = [c1[i], c2[i]];
            parents.sort_by(f64::total_cmp);
            children.sort_by(f64::total_cmp);
            prop_assert_eq!(parents, children);
        }
    }

    #[test]
    fn operators_respect_bounds(
        old in proptest::collection::vec(-10.0f64..10.0, 1..12),
        alpha in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let bounds = Bounds::new(-2.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let best: Vec<f64> = old.iter().map(|v| v * -1.5).collect();
        let rd: Vec<f64> = old.iter().map(|_| rand::Rng::random(&mut rng)).collect();
        prop_assert!(clan_update(&old, &best, alpha, &rd, bounds).iter().all(|&v| bounds.contains(v)));
        let clamped: Vec<f64> = old.iter().map(|&v| bounds.clamp(v)).collect();
        prop_assert!(mutate(&clamped, 0.3, bounds, &mut rng).iter().all(|&v| bounds.contains(v)));
        let clan = Clan {
            members: (0..4)
                .map(|i| Elephant { position: clamped.clone(), fitness: i as f64 })
                .collect(),
        };
        let (out, replaced) = separation_reinit(&clan, 2, bounds, &mut rng).unwrap();
        prop_assert_eq!(replaced, vec![0, 1]);
        for e in &out.members {
            prop_assert!(e.position.iter().all(|&v| bounds.contains(v)));
        }
    }

    #[test]
    fn decoded_mask_never_empty(points in proptest::collection::vec(0.0f64..=1.0, 1..20)) {
        let m = decode_mask(&points, 0.5);
        prop_assert!(m.count() >= 1);
        for (j, &p) in points.iter().enumerate() {
            if p > 0.5 {
                prop_assert!(m.is_selected(j));
            }
        }
    }

    #[test]
    fn metric_identities(tp in 1usize..500, tn in 1usize..500, fp in 1usize..500, fneg in 1usize..500) {
        let m = compute_metrics(&ConfusionMatrix { true_pos: tp, true_neg: tn, false_pos: fp, false_neg: fneg }).unwrap();
        let (acc, dp) = (m.accuracy.unwrap(), m.prevalence.unwrap());
        let (sens, spec) = (m.sensitivity.unwrap(), m.specificity.unwrap());
        prop_assert!((acc - (sens * dp + spec * (1.0 - dp))).abs() < 1e-12);
        let (p, r) = (m.ppv.unwrap(), sens);
        prop_assert!((m.f1.unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-12);
        prop_assert!((m.error.unwrap() + acc - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ppv_monotone_in_prevalence(sens in 0.01f64..=1.0, spec in 0.01f64..=1.0) {
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let pts = prevalence_sweep(sens, spec, &grid).unwrap();
        prop_assert!(pts.windows(2).all(|w| w[1].ppv >= w[0].ppv));
        prop_assert!(pts.windows(2).all(|w| w[1].npv <= w[0].npv));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn best_fitness_never_drops(seed in any::<u64>(), salt in any::<u64>()) {
        let noisy = move |x: &[f64]| {
            let h = x.iter().fold(salt, |h, v| (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3));
            (h >> 11) as f64 / (1u64 << 53) as f64
        };
        let mcfa = optimize_continuous(noisy, 4, &McfaConfig { population: 6, generations: 40, seed, ..Default::default() }).unwrap();
        prop_assert!(mcfa.history.windows(2).all(|w| w[1] >= w[0]));
        let cfg = AehoConfig { clans: 2, clan_size: 3, max_generations: 40, seed, ..Default::default() };
        let aeho = run_aeho(noisy, 4, &cfg).unwrap();
        prop_assert!(aeho.history.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(aeho.best.fitness >= *aeho.history.last().unwrap());
    }
}
