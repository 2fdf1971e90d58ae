#![allow(dead_code)]

use nrgboost::boosting::{EnergyModel, InitialModel};
use nrgboost::data::{BinMatrix, Domain, Schema};
use nrgboost::tree::{CategorySet, DimSet, EnergyTree, Node, Region, SplitRule, Tree};
use rand::Rng;

/// Random tree made by repeatedly splitting a random open leaf.
pub fn random_tree(domain: &Domain, leaves: usize, rng: &mut impl Rng) -> EnergyTree {
    let mut nodes = vec![Node::Leaf(rng.random_range(-2.0..2.0))];
    let mut regions = vec![domain.full_region()];
    let mut open = vec![0usize];
    for _ in 1..leaves {
        let mut choices = Vec::new();
        for (k, &i) in open.iter().enumerate() {
            for j in 0..domain.n_features() {
                if regions[i].dim(j).size() >= 2 {
                    choices.push((k, j));
                }
            }
        }
        if choices.is_empty() {
            break;
        }
        let (k, j) = choices[rng.random_range(0..choices.len())];
        let i = open.swap_remove(k);
        let rule = match *regions[i].dim(j) {
            DimSet::Interval { lo, hi } => SplitRule::Threshold(rng.random_range(lo + 1..hi)),
            DimSet::Set(s) => {
                let bins: Vec<usize> = s.iter().collect();
                let cut = rng.random_range(1..bins.len());
                SplitRule::Categories(CategorySet::from_bins(bins[..cut].iter().copied()))
            }
        };
        let (lr, rr) = regions[i].split(j, &rule);
        let l = nodes.len();
        nodes[i] = Node::Split {
            feature: j,
            rule,
            left: l,
            right: l + 1,
        };
        nodes.push(Node::Leaf(rng.random_range(-2.0..2.0)));
        nodes.push(Node::Leaf(rng.random_range(-2.0..2.0)));
        regions.push(lr);
        regions.push(rr);
        open.push(l);
        open.push(l + 1);
    }
    Tree::from_nodes(nodes).unwrap()
}

pub fn random_marginals(domain: &Domain, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    domain
        .cardinalities()
        .iter()
        .map(|&c| {
            let w: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn random_model(
    domain: &Domain,
    stages: usize,
    leaves: usize,
    rng: &mut impl Rng,
) -> EnergyModel {
    let initial =
        InitialModel::new(random_marginals(domain, rng), rng.random_range(0.05..1.0)).unwrap();
    let mut m = EnergyModel::new(Schema::from_domain(domain), initial);
    for _ in 0..stages {
        let t = random_tree(domain, leaves, rng);
        m.push_stage(t, rng.random_range(0.1..1.0));
    }
    m
}

/// Exact model probabilities by direct enumeration of `exp(f)`.
pub fn brute_probabilities(model: &EnergyModel) -> Vec<f64> {
    let pts = model.domain().enumerate();
    let f: Vec<f64> = pts.rows().map(|x| model.energy(x)).collect();
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = f.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn empirical(domain: &Domain, rows: &BinMatrix) -> Vec<f64> {
    let mut counts = vec![0.0; domain.size() as usize];
    for r in rows.rows() {
        counts[domain.index_of(r) as usize] += 1.0;
    }
    let n = rows.len() as f64;
    counts.into_iter().map(|c| c / n).collect()
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Rows drawn from a random categorical distribution over the domain.
pub fn random_rows(domain: &Domain, n: usize, rng: &mut impl Rng) -> BinMatrix {
    let size = domain.size() as usize;
    let w: Vec<f64> = (0..size).map(|_| rng.random::<f64>().powi(3)).collect();
    let total: f64 = w.iter().sum();
    let mut m = BinMatrix::with_capacity(domain.n_features(), n);
    let mut row = vec![0u8; domain.n_features()];
    for _ in 0..n {
        let mut u = rng.random::<f64>() * total;
        let mut idx = size - 1;
        for (i, &wi) in w.iter().enumerate() {
            if u < wi {
                idx = i;
                break;
            }
            u -= wi;
        }
        domain.row_at(idx as u64, &mut row);
        m.push_row(&row);
    }
    m
}

fn count_in(rows: &BinMatrix, region: &Region) -> usize {
    rows.rows().filter(|r| region.contains(r)).count()
}

pub type GainFn<'a> = dyn Fn((f64, f64), (f64, f64), (f64, f64)) -> f64 + 'a;

/// A split realized by a best-first grower.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSplit {
    pub node: usize,
    pub feature: usize,
    pub threshold: u16,
    pub gain: f64,
}

/// Reference masses for the oracle.
pub enum OracleModel<'a> {
    Samples(&'a BinMatrix),
    Volume,
}

pub struct OracleParams<'a> {
    pub max_leaves: usize,
    pub min_data: usize,
    pub min_model: usize,
    pub max_ratio: Option<f64>,
    pub gain: &'a GainFn<'a>,
}

/// Exhaustive best-first growth over ordered features: every leaf's best
/// split is recomputed from scratch by direct counting each step.
pub fn oracle_best_first(
    domain: &Domain,
    data: &BinMatrix,
    model: &OracleModel<'_>,
    params: &OracleParams<'_>,
) -> Vec<OracleSplit> {
    let n = data.len() as f64;
    let stats = |region: &Region| -> (f64, f64, usize, usize) {
        let nd = count_in(data, region);
        match model {
            OracleModel::Samples(m) => {
                let nm = count_in(m, region);
                (nd as f64 / n, nm as f64 / m.len() as f64, nd, nm)
            }
            OracleModel::Volume => (nd as f64 / n, region.volume(), nd, 0),
        }
    };
    let admissible = |s: &(f64, f64, usize, usize)| {
        s.2 >= params.min_data
            && (matches!(model, OracleModel::Volume) || s.3 >= params.min_model)
            && s.1 > 0.0
            && params.max_ratio.is_none_or(|r| s.0 / s.1 <= r)
    };
    let best_for = |region: &Region| -> Option<(f64, usize, u16)> {
        let parent = stats(region);
        let mut best: Option<(f64, usize, u16)> = None;
        for j in 0..domain.n_features() {
            let DimSet::Interval { lo, hi } = *region.dim(j) else {
                panic!("oracle handles ordered features only")
            };
            for t in lo + 1..hi {
                let (l, r) = region.split(j, &SplitRule::Threshold(t));
                let (sl, sr) = (stats(&l), stats(&r));
                if !admissible(&sl) || !admissible(&sr) {
                    continue;
                }
                let g = (params.gain)((parent.0, parent.1), (sl.0, sl.1), (sr.0, sr.1));
                if g > best.map_or(0.0, |b| b.0) {
                    best = Some((g, j, t));
                }
            }
        }
        best
    };
    let mut leaves: Vec<(usize, Region)> = vec![(0, domain.full_region())];
    let mut next = 1;
    let mut out = Vec::new();
    while leaves.len() < params.max_leaves {
        let mut pick: Option<(usize, (f64, usize, u16))> = None;
        for (k, (node, region)) in leaves.iter().enumerate() {
            if let Some(c) = best_for(region) {
                let better = match pick {
                    None => true,
                    Some((pk, pc)) => c.0 > pc.0 || (c.0 == pc.0 && *node < leaves[pk].0),
                };
                if better {
                    pick = Some((k, c));
                }
            }
        }
        let Some((k, (g, j, t))) = pick else { break };
        let (node, region) = leaves.remove(k);
        let (l, r) = region.split(j, &SplitRule::Threshold(t));
        out.push(OracleSplit {
            node,
            feature: j,
            threshold: t,
            gain: g,
        });
        leaves.push((next, l));
        leaves.push((next + 1, r));
        next += 2;
    }
    out
}

/// Realized splits of a fitted tree in growth order.
pub fn realized_splits<L>(tree: &Tree<L>, gains: &[f64]) -> Vec<OracleSplit> {
    let mut splits: Vec<(usize, usize, usize, u16)> = tree
        .nodes()
        .iter()
        .enumerate()
        .filter_map(|(i, n)| match n {
            Node::Split {
                feature,
                rule: SplitRule::Threshold(t),
                left,
                ..
            } => Some((*left, i, *feature, *t)),
            Node::Split { .. } => panic!("unexpected categorical split"),
            Node::Leaf(_) => None,
        })
        .collect();
    splits.sort();
    splits
        .into_iter()
        .zip(gains)
        .map(|((_, node, feature, threshold), &gain)| OracleSplit {
            node,
            feature,
            threshold,
            gain,
        })
        .collect()
}

/// Whether two split sequences agree, gains within `tol`.
pub fn same_splits(a: &[OracleSplit], b: &[OracleSplit], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.node == y.node
                && x.feature == y.feature
                && x.threshold == y.threshold
                && (x.gain - y.gain).abs() <= tol
        })
}
