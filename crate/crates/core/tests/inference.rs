mod common;

use common::*;
use nrgboost::boosting::{EnergyModel, InitialModel};
use nrgboost::data::{Domain, FeatureSpec, Schema};
use nrgboost::inference::{
    conditional, conditional_with_missing, exact_log_partition, exact_probabilities, predict,
    Prediction, Statistic, MARGINALIZATION_BUDGET,
};
use nrgboost::tree::{Node, SplitRule, Tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn conditional_matches_enumeration() {
    let dom = Domain::new(vec![4, 4], vec![false, true]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let model = random_model(&dom, 1, 6, &mut rng);
        let probs = brute_probabilities(&model);
        for x in dom.enumerate().rows() {
            for target in 0..2 {
                let c = conditional(&model, x, target);
                let mut y = x.to_vec();
                let joint: Vec<f64> = (0..4)
                    .map(|b| {
                        y[target] = b as u8;
                        probs[dom.index_of(&y) as usize]
                    })
                    .collect();
                let s: f64 = joint.iter().sum();
                for (a, b) in c.iter().zip(&joint) {
                    assert!((a - b / s).abs() < 1e-12);
                }
                assert!(c.iter().all(|&p| p > 0.0));
            }
        }
    }
}

#[test]
fn conditional_ignores_constant_shifts_of_a_stage() {
    let dom = Domain::ordered(vec![3, 5]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = random_model(&dom, 2, 5, &mut rng);
    let mut shifted = model.clone();
    shifted.stages[1].tree = shifted.stages[1].tree.map_leaves(|w| w + 3.0);
    let x = [1u8, 2];
    for t in 0..2 {
        let (a, b) = (conditional(&model, &x, t), conditional(&shifted, &x, t));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn missing_binary_feature_mixes_clamped_conditionals() {
    let dom = Domain::ordered(vec![3, 2, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let model = random_model(&dom, 2, 6, &mut rng);
        let x = [2u8, 0, 1];
        let got = conditional_with_missing(&model, &x, 0, &[1], MARGINALIZATION_BUDGET).unwrap();
        // weight of each clamped value of the missing feature
        let mut mix = [0.0; 3];
        let mut total = 0.0;
        for m in 0..2u8 {
            let y = [x[0], m, x[2]];
            let mass: f64 = (0..3u8).map(|b| model.energy(&[b, m, x[2]]).exp()).sum();
            let c = conditional(&model, &y, 0);
            for b in 0..3 {
                mix[b] += mass * c[b];
            }
            total += mass;
        }
        for b in 0..3 {
            assert!((got[b] - mix[b] / total).abs() < 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn marginalizing_an_unused_feature_changes_nothing() {
    let dom = Domain::ordered(vec![4, 3, 3]);
    let mut model = EnergyModel::new(Schema::from_domain(&dom), InitialModel::uniform(&dom));
    let t = Tree::from_nodes(vec![
        Node::Split {
            feature: 0,
            rule: SplitRule::Threshold(2),
            left: 1,
            right: 2,
        },
        Node::Leaf(0.5),
        Node::Split {
            feature: 1,
            rule: SplitRule::Threshold(1),
            left: 3,
            right: 4,
        },
        Node::Leaf(-0.3),
        Node::Leaf(1.1),
    ])
    .unwrap();
    model.push_stage(t, 0.8);
    let x = [1u8, 2, 0];
    let plain = conditional(&model, &x, 0);
    let got = conditional_with_missing(&model, &x, 0, &[2], MARGINALIZATION_BUDGET).unwrap();
    for (a, b) in plain.iter().zip(&got) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn empty_missing_set_is_exactly_the_conditional() {
    let dom = Domain::new(vec![5, 3], vec![true, false]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = random_model(&dom, 3, 5, &mut rng);
    for x in dom.enumerate().rows() {
        assert_eq!(
            conditional_with_missing(&model, x, 0, &[], MARGINALIZATION_BUDGET).unwrap(),
            conditional(&model, x, 0)
        );
    }
}

#[test]
fn predictions_match_monte_carlo() {
    let spec = FeatureSpec::ordered("y", vec![1.0, 1.5, 4.0, 4.2], -2.0, 7.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probs: Vec<f64> = {
        let w: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    };
    let n = 10_000_000;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut b = 4;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                b = i;
                break;
            }
        }
        let (lo, hi) = spec.bin_bounds(b);
        draws.push(lo + rng.random::<f64>() * (hi - lo));
    }
    let mc_mean = draws.iter().sum::<f64>() / n as f64;
    draws.sort_by(f64::total_cmp);
    let mc_median = draws[n / 2];
    let Prediction::Value(mean) = predict(&probs, &spec, Statistic::Mean).unwrap() else {
        panic!()
    };
    let Prediction::Value(median) = predict(&probs, &spec, Statistic::Median).unwrap() else {
        panic!()
    };
    assert!((mean - mc_mean).abs() < 1e-3, "{mean} vs {mc_mean}");
    assert!((median - mc_median).abs() < 1e-3, "{median} vs {mc_median}");
}

#[test]
fn partition_function_of_one_stage_matches_leaf_regions() {
    let dom = Domain::new(vec![4, 3, 5], vec![false, true, false]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let model = random_model(&dom, 1, 7, &mut rng);
        let s = &model.stages[0];
        let z: f64 = s
            .tree
            .leaf_regions(&dom)
            .iter()
            .map(|(r, &w)| model.initial.region_mass(r) * (s.step * w).exp())
            .sum();
        assert!((exact_log_partition(&model).unwrap() - z.ln()).abs() < 1e-12);
        let p = exact_probabilities(&model).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn shifting_the_energy_shifts_the_partition_function() {
    let dom = Domain::ordered(vec![3, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = random_model(&dom, 2, 4, &mut rng);
    let z = exact_log_partition(&model).unwrap();
    model.push_stage(Tree::leaf(1.0), 2.5);
    assert!((exact_log_partition(&model).unwrap() - (z + 2.5)).abs() < 1e-12);
}
