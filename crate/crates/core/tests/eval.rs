mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabdp_core::codec::{ColumnData, ColumnSpec, Dataset, TableSchema};
use tabdp_core::eval::{
    fidelity, fidelity_column, fidelity_row, js_divergence, pearson, privacy_attacks, roc_auc, utility_phi,
    wasserstein_1, AttackConfig, Classifier, ClassifierKind, LogisticRegression, UtilityConfig,
};

#[test]
fn js_divergence_reference_value() {
    // scipy.spatial.distance.jensenshannon(p, q, base=2) ** 2
    let js = js_divergence(&[0.5, 0.5], &[0.75, 0.25]);
    assert!((js - 0.048_794_940_5).abs() < 1e-8, "{js}");
    assert_eq!(js_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-12);
}

#[test]
fn categorical_column_score_matches_divergence() {
    let a = ColumnData::Categorical(vec![0, 1, 0, 1]);
    let b = ColumnData::Categorical(vec![0, 0, 0, 1]);
    let s = fidelity_column(&a, &b).unwrap();
    assert!((s - (1.0 - 0.048_794_940_5)).abs() < 1e-8);
    assert_eq!(s, fidelity_column(&b, &a).unwrap());
}

#[test]
fn wasserstein_by_hand() {
    // sorted quantile matching: |1-2| + |2-3| + |3-4| over 3
    assert!((wasserstein_1(&[3.0, 1.0, 2.0], &[2.0, 4.0, 3.0]) - 1.0).abs() < 1e-12);
    // unequal sizes: CDF difference integral
    assert!((wasserstein_1(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]) - 0.0).abs() < 1e-12);
    assert!((wasserstein_1(&[0.0], &[0.0, 2.0]) - 1.0).abs() < 1e-12);
}

/// `n` values with exact mean 0 and population variance 1, orthogonal to `other`.
fn standardized(mut v: Vec<f64>, other: Option<&[f64]>) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter_mut().for_each(|x| *x -= m);
    if let Some(o) = other {
        let proj = v.iter().zip(o).map(|(a, b)| a * b).sum::<f64>() / o.iter().map(|b| b * b).sum::<f64>();
        v.iter_mut().zip(o).for_each(|(a, b)| *a -= proj * b);
    }
    let s = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    v.iter().map(|x| x / s).collect()
}

fn correlated_pair(rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = standardized((0..20).map(|_| rng.random::<f64>()).collect(), None);
    let u = standardized((0..20).map(|_| rng.random::<f64>()).collect(), Some(&x));
    let y = x.iter().zip(&u).map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b).collect();
    (x, y)
}

#[test]
fn pearson_pair_score_on_constructed_tables() {
    let (rx, ry) = correlated_pair(0.8, 1);
    let (sx, sy) = correlated_pair(-0.2, 2);
    assert!((pearson(&rx, &ry).unwrap() - 0.8).abs() < 1e-12);
    assert!((pearson(&sx, &sy).unwrap() + 0.2).abs() < 1e-12);
    let score = fidelity_row(
        &ColumnData::Numeric(rx),
        &ColumnData::Numeric(ry),
        &ColumnData::Numeric(sx),
        &ColumnData::Numeric(sy),
    )
    .unwrap()
    .unwrap();
    assert!((score - 0.5).abs() < 1e-12, "{score}");
}

#[test]
fn mixed_pairs_are_skipped() {
    let n = ColumnData::Numeric(vec![1.0, 2.0, 3.0]);
    let c = ColumnData::Categorical(vec![0, 1, 0]);
    assert_eq!(fidelity_row(&n, &c, &n, &c).unwrap(), None);
}

#[test]
fn shuffled_columns_keep_marginals_but_lose_dependence() {
    let real = common::mixture(2000, 4);
    let mut shuffled = real.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for col in shuffled.columns.iter_mut().skip(1) {
        match col {
            ColumnData::Numeric(v) => rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng),
            ColumnData::Categorical(v) => rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng),
        }
    }
    let r = fidelity(&real, &shuffled, &common::schema(false)).unwrap();
    assert!((r.omega_col - 1.0).abs() < 1e-12);
    assert!(r.omega_row < 0.8, "{}", r.omega_row);
}

#[test]
fn separable_task_logistic_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..400 {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        if (a + b).abs() < 0.1 {
            continue;
        }
        x.push(vec![a, b]);
        y.push(a + b > 0.0);
    }
    let mut lr = LogisticRegression::default();
    lr.fit(&x, &y);
    let scores: Vec<f64> = x.iter().map(|r| lr.score(r)).collect();
    let auc = roc_auc(&scores, &y).unwrap();
    assert!(auc > 0.99, "{auc}");
}

#[test]
fn noise_features_give_chance_utility() {
    let schema = common::schema(true);
    let mut phis = Vec::new();
    for seed in 0..5 {
        let real = common::mixture(1000, 20 + seed);
        let noise = common::noise_like(&real, 1000, 30 + seed);
        let cfg = UtilityConfig { seed, ..UtilityConfig::default() };
        phis.push(utility_phi(&noise, &real, &schema, &cfg).unwrap().phi);
    }
    let m = common::mean(&phis);
    assert!((m - 0.5).abs() < 0.05, "{phis:?}");
}

#[test]
fn real_data_beats_noise_for_utility() {
    let schema = common::schema(true);
    for seed in 0..5 {
        let train = common::mixture(1000, 40 + seed);
        let test = common::mixture(1000, 50 + seed);
        let noise = common::noise_like(&train, 1000, 60 + seed);
        let cfg = UtilityConfig { seed, ..UtilityConfig::default() };
        let real_phi = utility_phi(&train, &test, &schema, &cfg).unwrap().phi;
        let noise_phi = utility_phi(&noise, &test, &schema, &cfg).unwrap().phi;
        assert!(real_phi >= noise_phi, "{real_phi} < {noise_phi}");
    }
}

#[test]
fn utility_errors() {
    let real = common::mixture(100, 1);
    let unlabelled = common::schema(false);
    assert!(utility_phi(&real, &real, &unlabelled, &UtilityConfig::default()).is_err());
    let mut one_class = real.clone();
    one_class.columns[2] = ColumnData::Categorical(vec![0; 100]);
    let cfg = UtilityConfig { classifiers: vec![ClassifierKind::LogisticRegression], ..UtilityConfig::default() };
    assert!(utility_phi(&one_class, &real, &common::schema(true), &cfg).is_err());
}

#[test]
fn attacks_on_copy_and_noise() {
    let schema = common::schema(true);
    let real = common::mixture(800, 70);
    let holdout = common::mixture(800, 71);
    let copy = privacy_attacks(&real, &real, &holdout, &schema, &AttackConfig::default()).unwrap();
    assert!(copy.lr > 0.95, "{copy:?}");
    let noise = common::noise_like(&real, 800, 72);
    let r = privacy_attacks(&real, &noise, &holdout, &schema, &AttackConfig::default()).unwrap();
    for risk in [r.sor, r.lr, r.ir] {
        assert!(risk <= 0.05, "{r:?}");
    }
    let empty = holdout.select_rows(&[]);
    assert!(privacy_attacks(&real, &noise, &empty, &schema, &AttackConfig::default()).is_err());
    let missing = AttackConfig { secret_column: Some("nope".into()), ..AttackConfig::default() };
    assert!(privacy_attacks(&real, &noise, &holdout, &schema, &missing).is_err());
}

fn mixed_table() -> impl Strategy<Value = (Dataset, Dataset)> {
    let row = (-5.0..5.0f64, -5.0..5.0f64, 0usize..3, 0usize..2);
    (prop::collection::vec(row.clone(), 3..30), prop::collection::vec(row, 3..30)).prop_map(|(a, b)| {
        let build = |rows: Vec<(f64, f64, usize, usize)>| Dataset {
            columns: vec![
                ColumnData::Numeric(rows.iter().map(|r| r.0).collect()),
                ColumnData::Numeric(rows.iter().map(|r| r.1).collect()),
                ColumnData::Categorical(rows.iter().map(|r| r.2).collect()),
                ColumnData::Categorical(rows.iter().map(|r| r.3).collect()),
            ],
        };
        (build(a), build(b))
    })
}

fn mixed_schema() -> TableSchema {
    TableSchema::new(
        vec![
            ColumnSpec::numeric("a"),
            ColumnSpec::numeric("b"),
            ColumnSpec::categorical("c", ["x", "y", "z"]),
            ColumnSpec::categorical("d", ["u", "v"]),
        ],
        None,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn self_fidelity_is_one((x, _) in mixed_table()) {
        let r = fidelity(&x, &x, &mixed_schema()).unwrap();
        prop_assert!((r.omega_col - 1.0).abs() < 1e-9);
        prop_assert!((r.omega_row - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scores_are_bounded((x, y) in mixed_table()) {
        let r = fidelity(&x, &y, &mixed_schema()).unwrap();
        for s in r.columns.iter().map(|c| c.score).chain(r.pairs.iter().map(|p| p.score)) {
            prop_assert!((0.0..=1.0).contains(&s));
        }
        prop_assert!((0.0..=1.0).contains(&r.omega_total));
    }

    #[test]
    fn column_fidelity_ignores_row_order((x, y) in mixed_table(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut px: Vec<usize> = (0..x.n_rows()).collect();
        let mut py: Vec<usize> = (0..y.n_rows()).collect();
        rand::seq::SliceRandom::shuffle(px.as_mut_slice(), &mut rng);
        rand::seq::SliceRandom::shuffle(py.as_mut_slice(), &mut rng);
        let a = fidelity(&x, &y, &mixed_schema()).unwrap();
        let b = fidelity(&x.select_rows(&px), &y.select_rows(&py), &mixed_schema()).unwrap();
        prop_assert!((a.omega_col - b.omega_col).abs() < 1e-12);
    }

    #[test]
    fn categorical_score_is_symmetric((x, y) in mixed_table()) {
        for c in [2, 3] {
            let ab = fidelity_column(&x.columns[c], &y.columns[c]).unwrap();
            let ba = fidelity_column(&y.columns[c], &x.columns[c]).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
        }
    }
}
