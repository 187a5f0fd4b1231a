mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use spectral_guard::detection::{
    calibrate_threshold, classify, config_flags, evaluate_config, search_features, Combinator, DetectorConfig, Direction,
    FeatureRule, Objective, SearchOptions, Strategy,
};
use spectral_guard::metrics::{BootstrapOptions, Confusion};
use spectral_guard::{FeatureKey, FeatureTable, Label, Metric};

fn key(layer: usize, metric: Metric) -> FeatureKey {
    FeatureKey::new(layer, metric)
}

fn random_table(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> FeatureTable {
    shifted_table(r, rows, cols, 0.5)
}

fn shifted_table(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize, signal: f64) -> FeatureTable {
    let keys: Vec<FeatureKey> = (0..cols).map(|c| key(c / 4, Metric::ALL[c % 4])).collect();
    let mut t = FeatureTable::new(keys);
    for i in 0..rows {
        let label = if i % 4 == 0 || i == 1 { Label::Hallucination } else { Label::Valid };
        let shift = if label == Label::Hallucination { signal } else { 0.0 };
        // Coarse values so ties occur.
        let values = (0..cols)
            .map(|c| ((r.random::<f64>() + shift * (c % 3) as f64) * 8.0).round() / 8.0)
            .collect();
        t.push_row(format!("s{i}"), label, values).unwrap();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recall_is_monotone_in_threshold(values in proptest::collection::vec(0.0f64..1.0, 4..40), seed in any::<u64>()) {
        let mut r = rng(seed);
        let pos: Vec<bool> = values.iter().map(|_| r.random::<bool>()).collect();
        prop_assume!(pos.iter().any(|&p| p));
        let mut taus = values.clone();
        taus.push(-1.0);
        taus.push(2.0);
        taus.sort_by(f64::total_cmp);
        let mut last = f64::INFINITY;
        for tau in taus {
            let flagged: Vec<bool> = values.iter().map(|&v| Direction::FlagIfAbove.fires(v, tau)).collect();
            let recall = Confusion::count(&flagged, &pos).recall();
            prop_assert!(recall <= last);
            last = recall;
        }
    }

    #[test]
    fn decisions_survive_monotone_transforms(v in -3.0f64..3.0, tau in -3.0f64..3.0) {
        for dir in Direction::BOTH {
            let rule = FeatureRule::new(key(0, Metric::Entropy), dir, tau);
            let moved = FeatureRule::new(key(0, Metric::Entropy), dir, tau.exp());
            prop_assert_eq!(rule.fires(v), moved.fires(v.exp()));
        }
    }

    #[test]
    fn combinator_recall_ordering(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = random_table(&mut r, 30, 4);
        let pos = t.positives();
        let rules: Vec<FeatureRule> = t.keys().iter().take(3).map(|&k| {
            let dir = if r.random::<bool>() { Direction::FlagIfAbove } else { Direction::FlagIfBelow };
            FeatureRule::new(k, dir, r.random_range(0.0..1.5))
        }).collect();
        let recall_of = |cfg: &DetectorConfig| Confusion::count(&config_flags(cfg, &t).unwrap(), &pos).recall();
        let any = DetectorConfig::new(rules.clone(), Combinator::AnyFires).unwrap();
        let all = DetectorConfig::new(rules.clone(), Combinator::AllFire).unwrap();
        for rule in &rules {
            let single = DetectorConfig::new(vec![*rule], Combinator::AnyFires).unwrap();
            prop_assert!(recall_of(&all) <= recall_of(&single));
            prop_assert!(recall_of(&any) >= recall_of(&single));
        }
    }
}

#[test]
fn calibration_matches_exhaustive_threshold_oracle() {
    let mut r = rng(4);
    for _ in 0..200 {
        let n = r.random_range(4..30);
        let values: Vec<f64> = (0..n).map(|_| (r.random::<f64>() * 6.0).round()).collect();
        let mut pos: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
        pos[0] = true;
        pos[1] = false;
        for objective in [Objective::Youden, Objective::recall_default(), Objective::Auc] {
            let got = calibrate_threshold(key(0, Metric::Hfer), &values, &pos, None, &objective).unwrap();
            let mut grid = values.clone();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
            cands.extend(grid.windows(2).map(|w| (w[0] + w[1]) / 2.0));
            let mut best = f64::NEG_INFINITY;
            let mut best_flagged = usize::MAX;
            for dir in Direction::BOTH {
                for &tau in &cands {
                    let flagged: Vec<bool> = values.iter().map(|&v| dir.fires(v, tau)).collect();
                    let c = Confusion::count(&flagged, &pos);
                    let v = objective.value(&c);
                    if v > best + 1e-12 || ((v - best).abs() <= 1e-12 && c.flagged() < best_flagged) {
                        best = v;
                        best_flagged = c.flagged();
                    }
                }
            }
            assert!((got.objective_value - best).abs() < 1e-12, "{objective}");
            assert_eq!(got.confusion.flagged(), best_flagged, "{objective}");
        }
    }
}

#[test]
fn perfectly_separating_feature_ranks_first() {
    let mut r = rng(9);
    let mut t = random_table(&mut r, 40, 8);
    let good: Vec<f64> = t.labels().iter().map(|&l| if l == Label::Hallucination { 2.0 } else { 1.0 } + r.random::<f64>() * 0.5).collect();
    let mut keys = t.keys().to_vec();
    keys.push(key(7, Metric::Smoothness));
    let mut cols: Vec<Vec<f64>> = (0..t.keys().len()).map(|c| t.column_at(c).to_vec()).collect();
    cols.push(good);
    t = FeatureTable::from_columns(t.sample_ids().to_vec(), t.labels().to_vec(), keys, cols).unwrap();
    for objective in [Objective::Youden, Objective::Auc] {
        let opts = SearchOptions {
            max_rules: 1,
            objective,
            ..SearchOptions::default()
        };
        let ranked = search_features(&t, &opts).unwrap();
        assert_eq!(ranked[0].config.keys(), vec![key(7, Metric::Smoothness)]);
        assert_eq!(ranked[0].objective_value, 1.0);
    }
}

#[test]
fn complementary_pair_reaches_full_recall() {
    // Feature A catches hallucinations 0..5, feature B catches 5..10; neither alone suffices.
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut labels = Vec::new();
    for i in 0..10 {
        labels.push(Label::Hallucination);
        a.push(if i < 5 { 10.0 } else { 0.0 + i as f64 * 0.01 });
        b.push(if i >= 5 { 10.0 } else { 0.0 + i as f64 * 0.01 });
    }
    for i in 0..40 {
        labels.push(Label::Valid);
        a.push(1.0 + i as f64 * 0.05);
        b.push(1.0 + (39 - i) as f64 * 0.05);
    }
    let ids = (0..labels.len()).map(|i| format!("s{i}")).collect();
    let t = FeatureTable::from_columns(ids, labels, vec![key(0, Metric::Entropy), key(1, Metric::Hfer)], vec![a, b]).unwrap();
    let opts = SearchOptions {
        max_rules: 2,
        objective: Objective::RecallAtPrecision { floor: 0.9 },
        combinator: Combinator::AnyFires,
        ..SearchOptions::default()
    };
    let ranked = search_features(&t, &opts).unwrap();
    assert_eq!(ranked[0].config.rules.len(), 2);
    assert_eq!(ranked[0].recall, 1.0);
    assert_eq!(ranked[0].precision, 1.0);
    let singles: Vec<_> = ranked.iter().filter(|r| r.config.rules.len() == 1).collect();
    assert!(singles.iter().all(|s| s.objective_value < 1.0));
}

#[test]
fn single_rule_search_equals_per_column_calibration() {
    let mut r = rng(12);
    let t = random_table(&mut r, 30, 6);
    let opts = SearchOptions {
        max_rules: 1,
        objective: Objective::Youden,
        ..SearchOptions::default()
    };
    let ranked = search_features(&t, &opts).unwrap();
    assert_eq!(ranked.len(), 6);
    for res in &ranked {
        let k = res.config.keys()[0];
        let c = calibrate_threshold(k, t.column(k).unwrap(), &t.positives(), None, &Objective::Youden).unwrap();
        assert_eq!(res.config.rules[0], c.rule);
        assert_eq!(res.objective_value, c.objective_value);
    }
}

#[test]
fn greedy_search_grows_configurations() {
    let mut r = rng(13);
    let t = shifted_table(&mut r, 60, 8, 0.1);
    let opts = SearchOptions {
        max_rules: 3,
        objective: Objective::Youden,
        strategy: Strategy::Greedy { beam: 3 },
        ..SearchOptions::default()
    };
    let ranked = search_features(&t, &opts).unwrap();
    assert!(ranked.iter().any(|r| r.config.rules.len() == 3));
    for w in ranked.windows(2) {
        assert!(w[0].rank_value >= w[1].rank_value);
    }
    assert_eq!(ranked, search_features(&t, &opts).unwrap());
}

#[test]
fn evaluation_on_hand_counted_table() {
    // values:   0.1 0.9 0.4 0.7 0.3 0.8 0.2 0.6
    // labels:    v   h   v   h   v   v   h   v
    let values = [0.1, 0.9, 0.4, 0.7, 0.3, 0.8, 0.2, 0.6];
    let labels = [
        Label::Valid,
        Label::Hallucination,
        Label::Valid,
        Label::Hallucination,
        Label::Valid,
        Label::Valid,
        Label::Hallucination,
        Label::Valid,
    ];
    let k = key(2, Metric::Fiedler);
    let ids = (0..8).map(|i| format!("s{i}")).collect();
    let t = FeatureTable::from_columns(ids, labels.to_vec(), vec![k], vec![values.to_vec()]).unwrap();
    let cfg = DetectorConfig::new(vec![FeatureRule::new(k, Direction::FlagIfAbove, 0.5)], Combinator::AnyFires).unwrap();
    let r = evaluate_config(&cfg, &t, &BootstrapOptions::default()).unwrap();
    // Flagged: 0.9 (h), 0.7 (h), 0.8 (v), 0.6 (v).
    assert_eq!((r.confusion.tp, r.confusion.fp, r.confusion.tn, r.confusion.fn_), (2, 2, 3, 1));
    assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.precision, 0.5);
    for i in 0..8 {
        let expect = if values[i] > 0.5 { Label::Hallucination } else { Label::Valid };
        assert_eq!(classify(&cfg, &t.row(i)).unwrap(), expect);
    }
}

#[test]
fn flag_everything_config_has_base_rate_precision() {
    let mut r = rng(14);
    let t = random_table(&mut r, 40, 1);
    let k = t.keys()[0];
    let cfg = DetectorConfig::new(vec![FeatureRule::new(k, Direction::FlagIfAbove, f64::NEG_INFINITY)], Combinator::AnyFires).unwrap();
    let rep = evaluate_config(&cfg, &t, &BootstrapOptions::default()).unwrap();
    let base = t.positives().iter().filter(|&&p| p).count() as f64 / t.len() as f64;
    assert_eq!(rep.recall, 1.0);
    assert!((rep.precision - base).abs() < 1e-15);
}

#[test]
fn exhaustive_pairs_match_brute_force_enumeration() {
    let mut r = rng(21);
    for trial in 0..6 {
        let cols = 4 + 2 * (trial % 5);
        let t = shifted_table(&mut r, 24, cols, 0.15);
        for (objective, combinator) in [
            (Objective::Youden, Combinator::AnyFires),
            (Objective::recall_default(), Combinator::AnyFires),
            (Objective::Youden, Combinator::AllFire),
        ] {
            let best = best_pair_objective(&t, &objective, combinator);
            let opts = SearchOptions {
                max_rules: 2,
                objective,
                combinator,
                ..SearchOptions::default()
            };
            let ranked = search_features(&t, &opts).unwrap();
            assert!((ranked[0].objective_value - best).abs() < 1e-12, "{objective} {combinator:?}: {} vs {best}", ranked[0].objective_value);
        }
    }
}
