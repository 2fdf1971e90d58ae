//! Density estimation trees and bagged forests of them.
//!
//! A density tree is a normalized piecewise-constant density: leaf `j` holds
//! the empirical mass `p_j` spread uniformly over its `V_j` domain points.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BinMatrix, DiscretizedDataset, Domain, Schema};
use crate::error::{Error, Result};
use crate::grow::{grow, Criterion, GrowParams, ModelSide, VolumeMeasure};
use crate::inference::LogDensity;
use crate::numeric::{sample_weights, LogSumExp};
use crate::sampling::chain_rng;
use crate::tree::{DimSet, Region, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetCriterion {
    /// Integrated squared error.
    Ise,
    Kl,
}

impl DetCriterion {
    fn criterion(self) -> Criterion {
        match self {
            DetCriterion::Ise => Criterion::Quadratic,
            DetCriterion::Kl => Criterion::KullbackLeibler,
        }
    }
}

impl std::str::FromStr for DetCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ise" => Ok(Self::Ise),
            "kl" => Ok(Self::Kl),
            _ => Err(Error::InvalidConfig(format!("unknown criterion `{s}`"))),
        }
    }
}

/// Split improvement for `(p, V)` pairs.
pub fn det_split_gain(
    parent: (f64, f64),
    left: (f64, f64),
    right: (f64, f64),
    criterion: DetCriterion,
) -> f64 {
    criterion.criterion().gain(parent, left, right)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityLeaf {
    /// Empirical probability mass.
    pub p: f64,
    /// Number of domain points in the leaf.
    pub volume: f64,
}

impl DensityLeaf {
    pub fn density(&self) -> f64 {
        self.p / self.volume
    }

    pub fn log_density(&self) -> f64 {
        self.p.ln() - self.volume.ln()
    }
}

pub type DensityTree = Tree<DensityLeaf>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetParams {
    pub max_leaves: usize,
    pub min_data_in_leaf: usize,
    pub criterion: DetCriterion,
}

impl Default for DetParams {
    fn default() -> Self {
        Self {
            max_leaves: 256,
            min_data_in_leaf: 1,
            criterion: DetCriterion::Ise,
        }
    }
}

fn fit_det_inner(
    domain: &Domain,
    data: &BinMatrix,
    params: &DetParams,
    chooser: Option<&mut dyn FnMut() -> Vec<usize>>,
) -> Result<(DensityTree, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyTable);
    }
    let side = ModelSide::Measure(&VolumeMeasure);
    let mut gp = GrowParams {
        max_leaves: params.max_leaves.max(1),
        criterion: params.criterion.criterion(),
        min_data: params.min_data_in_leaf,
        min_model: 0,
        max_ratio: None,
        feature_chooser: chooser,
    };
    let grown = grow(domain, data, &side, &mut gp);
    let tree = grown.tree.map_leaves(|s| DensityLeaf {
        p: s.p,
        volume: s.volume,
    });
    Ok((tree, grown.gains))
}

/// Fit one density tree best-first. With `feature_subset` only those
/// features are split on.
pub fn fit_det(
    domain: &Domain,
    data: &BinMatrix,
    params: &DetParams,
    feature_subset: Option<&[usize]>,
) -> Result<DensityTree> {
    Ok(fit_det_with_gains(domain, data, params, feature_subset)?.0)
}

/// [`fit_det`] also returning the realized split gains in growth order.
pub fn fit_det_with_gains(
    domain: &Domain,
    data: &BinMatrix,
    params: &DetParams,
    feature_subset: Option<&[usize]>,
) -> Result<(DensityTree, Vec<f64>)> {
    match feature_subset {
        None => fit_det_inner(domain, data, params, None),
        Some(subset) => {
            let mut s = subset.to_vec();
            s.sort_unstable();
            s.dedup();
            let mut choose = move || s.clone();
            fit_det_inner(domain, data, params, Some(&mut choose))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefConfig {
    pub n_trees: usize,
    pub max_leaves: usize,
    /// Fraction of features eligible at each node.
    pub feature_fraction: f64,
    pub min_data_in_leaf: usize,
    pub criterion: DetCriterion,
    pub bootstrap: bool,
}

impl Default for DefConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_leaves: 256,
            feature_fraction: 1.0,
            min_data_in_leaf: 1,
            criterion: DetCriterion::Ise,
            bootstrap: true,
        }
    }
}

impl DefConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "feature_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.max_leaves < 1 {
            return Err(Error::InvalidConfig("max_leaves must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Uniform mixture of density trees.
#[derive(Debug, Clone)]
pub struct DefEnsemble {
    pub schema: Schema,
    trees: Vec<DensityTree>,
    domain: Domain,
    leaf_tables: Vec<Vec<(Region, f64)>>,
}

impl PartialEq for DefEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.trees == other.trees
    }
}

impl DefEnsemble {
    pub fn new(schema: Schema, trees: Vec<DensityTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one tree".into(),
            ));
        }
        let domain = schema.domain();
        let leaf_tables = trees
            .iter()
            .map(|t| {
                t.leaf_regions(&domain)
                    .into_iter()
                    .map(|(r, l)| (r, l.p))
                    .collect()
            })
            .collect();
        Ok(Self {
            schema,
            trees,
            domain,
            leaf_tables,
        })
    }

    pub fn trees(&self) -> &[DensityTree] {
        &self.trees
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
}

/// Fit `n_trees` density trees, each on a bootstrap resample, choosing
/// `ceil(feature_fraction · d)` candidate features afresh at every node.
pub fn fit_def<R: Rng + ?Sized>(
    data: &DiscretizedDataset,
    config: &DefConfig,
    rng: &mut R,
) -> Result<DefEnsemble> {
    config.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let domain = data.domain();
    let d = domain.n_features();
    let k = ((config.feature_fraction * d as f64).ceil() as usize).clamp(1, d);
    let root: u64 = rng.random();
    let params = DetParams {
        max_leaves: config.max_leaves,
        min_data_in_leaf: config.min_data_in_leaf,
        criterion: config.criterion,
    };
    let trees: Result<Vec<DensityTree>> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = chain_rng(root, t as u64);
            let rows = if config.bootstrap {
                let n = data.n_rows();
                let mut m = BinMatrix::with_capacity(d, n);
                for _ in 0..n {
                    m.push_row(data.values.row(r.random_range(0..n)));
                }
                m
            } else {
                data.values.clone()
            };
            if k == d {
                return fit_det(&domain, &rows, &params, None);
            }
            let mut choose = || {
                let mut s = sample_indices(&mut r, d, k).into_vec();
                s.sort_unstable();
                s
            };
            Ok(fit_det_inner(&domain, &rows, &params, Some(&mut choose))?.0)
        })
        .collect();
    DefEnsemble::new(data.schema.clone(), trees?)
}

/// Log of the average leaf density across trees.
pub fn def_log_density(ensemble: &DefEnsemble, x: &[u8]) -> f64 {
    let mut acc = LogSumExp::new();
    for t in &ensemble.trees {
        acc.add(t.leaf_at(x).log_density());
    }
    acc.value() - (ensemble.trees.len() as f64).ln()
}

/// Exact draw: uniform tree, leaf with probability `p`, uniform point in it.
pub fn def_sample<R: Rng + ?Sized>(ensemble: &DefEnsemble, rng: &mut R) -> Vec<u8> {
    let t = rng.random_range(0..ensemble.trees.len());
    let table = &ensemble.leaf_tables[t];
    let weights: Vec<f64> = table.iter().map(|(_, p)| *p).collect();
    let total: f64 = weights.iter().sum();
    let (region, _) = &table[sample_weights(&weights, total, rng)];
    region
        .dims()
        .iter()
        .map(|d| match d {
            DimSet::Interval { lo, hi } => rng.random_range(*lo..*hi) as u8,
            DimSet::Set(s) => {
                let bins: Vec<usize> = s.iter().collect();
                bins[rng.random_range(0..bins.len())] as u8
            }
        })
        .collect()
}

/// `n` independent draws; each owns a stream of a root seed from `rng`.
pub fn def_sample_n<R: Rng + ?Sized>(ensemble: &DefEnsemble, n: usize, rng: &mut R) -> BinMatrix {
    let root: u64 = rng.random();
    let rows: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|i| def_sample(ensemble, &mut chain_rng(root, i as u64)))
        .collect();
    let mut m = BinMatrix::with_capacity(ensemble.domain.n_features(), n);
    for r in &rows {
        m.push_row(r);
    }
    m
}

impl LogDensity for DefEnsemble {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn log_density(&self, x: &[u8]) -> f64 {
        def_log_density(self, x)
    }

    fn log_slice(&self, x: &[u8], dim: usize, out: &mut [f64]) {
        let card = out.len();
        let mut acc = vec![LogSumExp::new(); card];
        for t in &self.trees {
            t.for_each_slice_leaf(x, dim, card, |mask, leaf| {
                let v = leaf.log_density();
                for b in mask.iter() {
                    acc[b].add(v);
                }
            });
        }
        let log_t = (self.trees.len() as f64).ln();
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a.value() - log_t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{conditional, exact_log_partition};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn det_gain_examples() {
        assert_eq!(
            det_split_gain((1.0, 4.0), (0.5, 2.0), (0.5, 2.0), DetCriterion::Ise),
            0.0
        );
        assert_eq!(
            det_split_gain((1.0, 4.0), (0.25, 1.0), (0.75, 3.0), DetCriterion::Kl),
            0.0
        );
        let g = det_split_gain((1.0, 4.0), (0.75, 1.0), (0.25, 3.0), DetCriterion::Ise);
        assert!((g - (0.5625 + 0.0625 / 3.0 - 0.25)).abs() < 1e-12);
        let g = det_split_gain((1.0, 4.0), (0.75, 1.0), (0.25, 3.0), DetCriterion::Kl);
        let want = 0.75 * 0.75f64.ln() + 0.25 * (1.0f64 / 12.0).ln() - 0.25f64.ln();
        assert!((g - want).abs() < 1e-12);
    }

    #[test]
    fn single_leaf_is_uniform() {
        let dom = Domain::ordered(vec![4, 4]);
        let data = BinMatrix::from_rows(2, &[[0u8, 1u8], [3, 3]]);
        let params = DetParams {
            max_leaves: 1,
            ..DetParams::default()
        };
        let t = fit_det(&dom, &data, &params, None).unwrap();
        assert_eq!(t.num_leaves(), 1);
        let e = DefEnsemble::new(Schema::from_domain(&dom), vec![t]).unwrap();
        assert!((def_log_density(&e, &[2, 2]) + 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn leaf_densities_are_count_over_n_volume() {
        let dom = Domain::ordered(vec![4, 3]);
        let rows: Vec<[u8; 2]> = vec![[0, 0], [0, 1], [3, 2], [3, 2], [1, 0]];
        let data = BinMatrix::from_rows(2, &rows);
        let t = fit_det(&dom, &data, &DetParams::default(), None).unwrap();
        for (region, leaf) in t.leaf_regions(&dom) {
            let count = rows.iter().filter(|r| region.contains(&r[..])).count();
            assert_eq!(leaf.p, count as f64 / 5.0);
            assert_eq!(leaf.volume, region.volume());
        }
    }

    #[test]
    fn subset_restricts_split_features() {
        let dom = Domain::ordered(vec![4, 4]);
        let rows: Vec<[u8; 2]> = vec![[0, 0], [0, 3], [3, 0], [1, 3]];
        let data = BinMatrix::from_rows(2, &rows);
        let t = fit_det(&dom, &data, &DetParams::default(), Some(&[1])).unwrap();
        for n in t.nodes() {
            if let crate::tree::Node::Split { feature, .. } = n {
                assert_eq!(*feature, 1);
            }
        }
    }

    fn random_data(dom: &Domain, n: usize, rng: &mut impl Rng) -> DiscretizedDataset {
        let mut m = BinMatrix::with_capacity(dom.n_features(), n);
        for _ in 0..n {
            // skewed towards low bins
            let row: Vec<u8> = (0..dom.n_features())
                .map(|j| {
                    let c = dom.cardinality(j);
                    rng.random_range(0..c).min(rng.random_range(0..c)) as u8
                })
                .collect();
            m.push_row(&row);
        }
        DiscretizedDataset::new(Schema::from_domain(dom), m).unwrap()
    }

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let dom = Domain::new(vec![4, 5], vec![false, true]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_data(&dom, 200, &mut rng);
        let cfg = DefConfig {
            n_trees: 1,
            feature_fraction: 1.0,
            bootstrap: false,
            max_leaves: 8,
            ..DefConfig::default()
        };
        let forest = fit_def(&data, &cfg, &mut rng).unwrap();
        let params = DetParams {
            max_leaves: 8,
            ..DetParams::default()
        };
        let single = fit_det(&dom, &data.values, &params, None).unwrap();
        assert_eq!(forest.trees()[0], single);
    }

    #[test]
    fn forest_slices_match_pointwise_densities() {
        let dom = Domain::new(vec![4, 5, 3], vec![false, true, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_data(&dom, 300, &mut rng);
        let cfg = DefConfig {
            n_trees: 5,
            feature_fraction: 0.5,
            max_leaves: 10,
            ..DefConfig::default()
        };
        let forest = fit_def(&data, &cfg, &mut rng).unwrap();
        assert!(exact_log_partition(&forest).unwrap().abs() < 1e-9);
        let x = [1u8, 2, 0];
        for dim in 0..3 {
            let mut out = vec![0.0; dom.cardinality(dim)];
            forest.log_slice(&x, dim, &mut out);
            let mut y = x;
            for (b, &o) in out.iter().enumerate() {
                y[dim] = b as u8;
                assert!((o - def_log_density(&forest, &y)).abs() < 1e-12);
            }
            assert!((conditional(&forest, &x, dim).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn ise_gain_is_nonnegative(pl in 0.0f64..1.0, vl in 1u32..100, pr in 0.0f64..1.0, vr in 1u32..100) {
            let (vl, vr) = (vl as f64, vr as f64);
            let g = det_split_gain((pl + pr, vl + vr), (pl, vl), (pr, vr), DetCriterion::Ise);
            prop_assert!(g >= 0.0);
        }
    }
}
