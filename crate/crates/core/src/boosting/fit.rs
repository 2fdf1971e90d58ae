use crate::data::{BinMatrix, Domain};
use crate::error::{Error, Result};
use crate::grow::{grow, Criterion, GrowParams, ModelSide};
use crate::tree::{EnergyTree, Tree};

pub use crate::grow::LeafStats;

use super::config::{BoostConfig, UpdateRule};
use super::InitialModel;

/// Floor on `p/q` before taking logs in the greedy leaf rules.
pub const GREEDY_MIN_RATIO: f64 = 1e-3;

/// Where the model masses of candidate regions come from.
pub enum ModelMasses<'a> {
    /// Exact masses of the initial model.
    Initial(&'a InitialModel),
    /// Sample fractions of a pool.
    Samples(&'a BinMatrix),
    /// Exact probabilities of enumerated points.
    Weighted(&'a BinMatrix, &'a [f64]),
}

impl UpdateRule {
    pub(crate) fn criterion(self) -> Criterion {
        match self {
            UpdateRule::Nrgboost | UpdateRule::GreedyChi2 => Criterion::Quadratic,
            UpdateRule::GreedyKl => Criterion::KullbackLeibler,
        }
    }
}

/// Improvement of the split criterion of `rule` from splitting `parent`.
pub fn split_gain(
    parent: &LeafStats,
    left: &LeafStats,
    right: &LeafStats,
    rule: UpdateRule,
) -> f64 {
    rule.criterion()
        .gain((parent.p, parent.q), (left.p, left.q), (right.p, right.q))
}

pub fn leaf_value(p: f64, q: f64, rule: UpdateRule, max_ratio: f64) -> Result<f64> {
    if q <= 0.0 {
        return Err(Error::ZeroModelMass);
    }
    let ratio = (p / q).min(max_ratio);
    Ok(match rule {
        UpdateRule::Nrgboost => ratio - 1.0,
        UpdateRule::GreedyKl | UpdateRule::GreedyChi2 => ratio.max(GREEDY_MIN_RATIO).ln(),
    })
}

#[derive(Debug, Clone)]
pub struct FittedTree {
    pub stats: Tree<LeafStats>,
    pub tree: EnergyTree,
    /// Gains of the realized splits in growth order.
    pub split_gains: Vec<f64>,
}

impl FittedTree {
    /// `(w, p, q)` per leaf, in node order.
    pub fn leaf_masses(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let w = self.tree.leaves().copied().collect();
        let p = self.stats.leaves().map(|s| s.p).collect();
        let q = self.stats.leaves().map(|s| s.q).collect();
        (w, p, q)
    }
}

/// Grow one tree best-first on data masses `count / n` against `masses`.
pub fn fit_tree(
    domain: &Domain,
    data: &BinMatrix,
    masses: &ModelMasses<'_>,
    config: &BoostConfig,
) -> Result<FittedTree> {
    let side = match masses {
        ModelMasses::Initial(m) => ModelSide::Measure(*m),
        ModelMasses::Samples(rows) => ModelSide::Samples(rows),
        ModelMasses::Weighted(rows, w) => ModelSide::Weighted(rows, w),
    };
    let mut params = GrowParams {
        max_leaves: config.max_leaves,
        criterion: config.update_rule.criterion(),
        min_data: config.min_data_in_leaf,
        min_model: config.min_model_in_leaf,
        max_ratio: Some(config.max_ratio),
        feature_chooser: None,
    };
    let grown = grow(domain, data, &side, &mut params);
    let mut values = Vec::new();
    for s in grown.tree.leaves() {
        values.push(leaf_value(s.p, s.q, config.update_rule, config.max_ratio)?);
    }
    let mut it = values.into_iter();
    let tree = grown.tree.map_leaves(|_| it.next().unwrap());
    Ok(FittedTree {
        stats: grown.tree,
        tree,
        split_gains: grown.gains,
    })
}
