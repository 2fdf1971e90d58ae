mod common;

use common::*;
use nrgboost::boosting::{
    boost_round_exact, fit_tree, line_search, line_search_objective, split_gain, train,
    train_with_validator, BoostConfig, EnergyModel, InitialModel, LineSearchGrid, ModelMasses,
    UpdateRule,
};
use nrgboost::data::{BinMatrix, DiscretizedDataset, Domain, Schema};
use nrgboost::inference::exact_log_partition;
use nrgboost::model_file::{ModelFile, SavedModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_loglik(model: &EnergyModel, data: &BinMatrix) -> f64 {
    let z = exact_log_partition(model).unwrap();
    data.rows().map(|x| model.energy(x)).sum::<f64>() / data.len() as f64 - z
}

fn dataset(domain: &Domain, rows: BinMatrix) -> DiscretizedDataset {
    DiscretizedDataset::new(Schema::from_domain(domain), rows).unwrap()
}

#[test]
fn fitted_trees_match_best_first_oracle_on_small_grid() {
    let dom = Domain::ordered(vec![4, 4, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..30 {
        let data = random_rows(&dom, rng.random_range(10..80), &mut rng);
        let pool = random_rows(&dom, rng.random_range(20..200), &mut rng);
        for rule in [UpdateRule::Nrgboost, UpdateRule::GreedyKl] {
            let cfg = BoostConfig {
                max_leaves: 6,
                max_ratio: 3.0,
                update_rule: rule,
                ..BoostConfig::default()
            };
            let fit = fit_tree(&dom, &data, &ModelMasses::Samples(&pool), &cfg).unwrap();
            let gain = |p: (f64, f64), l: (f64, f64), r: (f64, f64)| {
                let s = |(p, q): (f64, f64)| nrgboost::boosting::LeafStats {
                    p,
                    q,
                    n_data: 0,
                    n_model: 0,
                    volume: 0.0,
                };
                split_gain(&s(p), &s(l), &s(r), rule)
            };
            let oracle = oracle_best_first(
                &dom,
                &data,
                &OracleModel::Samples(&pool),
                &OracleParams {
                    max_leaves: 6,
                    min_data: 1,
                    min_model: 1,
                    max_ratio: Some(3.0),
                    gain: &gain,
                },
            );
            let got = realized_splits(&fit.tree, &fit.split_gains);
            assert!(same_splits(&got, &oracle, 1e-12), "{got:?} vs {oracle:?}");
        }
    }
}

#[test]
fn zero_expectation_and_leaf_range_of_fitted_trees() {
    let dom = Domain::new(vec![5, 4, 3], vec![false, true, false]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let data = random_rows(&dom, 200, &mut rng);
        let pool = random_rows(&dom, 500, &mut rng);
        let cfg = BoostConfig {
            max_leaves: 12,
            max_ratio: 2.5,
            ..BoostConfig::default()
        };
        let fit = fit_tree(&dom, &data, &ModelMasses::Samples(&pool), &cfg).unwrap();
        let (w, p, q) = fit.leaf_masses();
        assert!(w.iter().all(|&v| (-1.0..=1.5).contains(&v)));
        let clipped = p.iter().zip(&q).any(|(p, q)| p / q > 2.5);
        if !clipped {
            let s: f64 = w.iter().zip(&q).map(|(w, q)| w * q).sum();
            assert!(s.abs() < 1e-9);
        }
    }
}

#[test]
fn refined_line_search_matches_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = LineSearchGrid::default();
    let dense = LineSearchGrid {
        count: 100_000,
        refine: false,
        ..grid
    }
    .points();
    for _ in 0..20 {
        let k = rng.random_range(2..8);
        let mut p: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let mut q: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let sp: f64 = p.iter().sum();
        let sq: f64 = q.iter().sum();
        p.iter_mut().for_each(|v| *v /= sp);
        q.iter_mut().for_each(|v| *v /= sq);
        let w: Vec<f64> = p
            .iter()
            .zip(&q)
            .map(|(p, q)| (p / q).min(2.0) - 1.0)
            .collect();
        let r = line_search(&w, &p, &q, &grid);
        let best = dense
            .iter()
            .map(|&a| line_search_objective(a, &w, &p, &q))
            .fold(0.0, f64::max);
        assert!((r.objective - best).abs() < 1e-6);
    }
}

#[test]
fn exact_round_raises_likelihood_by_objective() {
    let dom = Domain::ordered(vec![2, 2]);
    let data = BinMatrix::from_rows(
        2,
        &[[0u8, 0u8], [0, 0], [0, 1], [1, 1], [0, 0], [1, 0], [0, 0]],
    );
    let ds = dataset(&dom, data.clone());
    let mut model = EnergyModel::new(ds.schema.clone(), InitialModel::fit(&ds, 0.1).unwrap());
    let cfg = BoostConfig {
        max_leaves: 3,
        shrinkage: 1.0,
        ..BoostConfig::default()
    };
    for _ in 0..5 {
        let before = exact_loglik(&model, &data);
        let rep = boost_round_exact(&mut model, &data, &cfg).unwrap();
        let after = exact_loglik(&model, &data);
        assert!(((after - before) - rep.objective).abs() < 1e-9);
        assert!(rep.objective >= 0.0);
    }
}

#[test]
fn zero_rounds_and_single_leaf_are_no_ops() {
    let dom = Domain::ordered(vec![3, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ds = dataset(&dom, random_rows(&dom, 50, &mut rng));
    let cfg = BoostConfig {
        num_rounds: 0,
        ..BoostConfig::default()
    };
    let (m, h) = train(&ds, None, &cfg, &mut rng).unwrap();
    assert!(m.stages.is_empty());
    assert!(h.rounds.is_empty());

    let cfg = BoostConfig {
        num_rounds: 3,
        max_leaves: 1,
        pool_size: Some(200),
        ..BoostConfig::default()
    };
    let (m, h) = train(&ds, None, &cfg, &mut rng).unwrap();
    let base = EnergyModel::new(ds.schema.clone(), InitialModel::fit(&ds, 0.1).unwrap());
    for r in &h.rounds {
        assert_eq!(r.alpha, 0.0);
    }
    for x in dom.enumerate().rows() {
        assert_eq!(m.energy(x), base.energy(x));
    }
}

#[test]
fn early_stopping_keeps_the_best_round() {
    let dom = Domain::ordered(vec![4, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ds = dataset(&dom, random_rows(&dom, 300, &mut rng));
    let scores = [0.1, 0.2, 0.5, 0.45, 0.4, 0.6, 0.3, 0.2, 0.1, 0.0, 0.0, 0.0];
    let mut calls = 0;
    let mut validator = |_: &EnergyModel| {
        let s = scores[calls];
        calls += 1;
        Ok(s)
    };
    let cfg = BoostConfig {
        num_rounds: 11,
        max_leaves: 4,
        pool_size: Some(500),
        early_stopping: nrgboost::boosting::EarlyStopping {
            patience: 3,
            ..Default::default()
        },
        ..BoostConfig::default()
    };
    let (m, h) = train_with_validator(&ds, &cfg, &mut rng, Some(&mut validator)).unwrap();
    assert_eq!(h.best_round, 5);
    assert_eq!(m.stages.len(), 5);
    assert_eq!(h.rounds.len(), 8);
    assert_eq!(h.validation.len(), 9);
}

#[test]
fn training_is_deterministic_under_a_seed() {
    let dom = Domain::new(vec![5, 4], vec![false, true]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ds = dataset(&dom, random_rows(&dom, 400, &mut rng));
    let cfg = BoostConfig {
        num_rounds: 6,
        max_leaves: 6,
        pool_size: Some(1000),
        ..BoostConfig::default()
    };
    let run = || {
        let (m, _) = train(&ds, None, &cfg, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        ModelFile::new(SavedModel::Nrgboost(m)).to_bytes()
    };
    assert_eq!(run(), run());
}
