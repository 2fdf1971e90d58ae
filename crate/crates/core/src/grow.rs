//! Best-first tree growth shared by boosting trees and density trees.
//!
//! Both fitters score a split from the empirical mass `p` and a reference
//! mass `q` of each child: the model probability for boosting, the region
//! volume for density trees.

use crate::data::{BinMatrix, Domain};
use crate::tree::{CategorySet, DimSet, Node, Region, SplitRule, Tree};

/// Split criterion over `(p, q)` pairs of the parent and both children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// `Σ p²/q` terms.
    Quadratic,
    /// `Σ p log(p/q)` terms.
    KullbackLeibler,
}

impl Criterion {
    #[inline]
    fn term(self, p: f64, q: f64) -> f64 {
        if p == 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Quadratic => p * p / q,
            Criterion::KullbackLeibler => p * (p / q).ln(),
        }
    }

    /// Children terms minus the parent term. Results within round-off of zero
    /// (relative to the magnitude of the terms) are reported as exactly zero.
    pub fn gain(self, parent: (f64, f64), left: (f64, f64), right: (f64, f64)) -> f64 {
        let tl = self.term(left.0, left.1);
        let tr = self.term(right.0, right.1);
        let tp = self.term(parent.0, parent.1);
        let g = tl + tr - tp;
        if g.abs() <= 1e-12 * (tl.abs() + tr.abs() + tp.abs()) {
            0.0
        } else {
            g
        }
    }
}

/// Statistics of one leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafStats {
    /// Empirical probability mass.
    pub p: f64,
    /// Reference mass: model probability or region volume.
    pub q: f64,
    pub n_data: usize,
    pub n_model: usize,
    /// Number of domain points in the leaf region.
    pub volume: f64,
}

/// Measure of a region known in closed form, additive over the bins of any
/// single dimension.
pub trait RegionMeasure {
    fn mass(&self, region: &Region) -> f64;
    /// `out[b]` = mass of `region` with dimension `k` restricted to bin `b`,
    /// for every admitted bin `b` of that dimension. Other entries untouched.
    fn dim_masses(&self, region: &Region, k: usize, out: &mut [f64]);
}

/// Counting measure on domain points.
pub struct VolumeMeasure;

impl RegionMeasure for VolumeMeasure {
    fn mass(&self, region: &Region) -> f64 {
        region.volume()
    }

    fn dim_masses(&self, region: &Region, k: usize, out: &mut [f64]) {
        let rest: f64 = region
            .dims()
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, d)| d.size() as f64)
            .product();
        for b in region.dim(k).bins() {
            out[b] = rest;
        }
    }
}

/// Source of the reference mass `q`.
pub enum ModelSide<'a> {
    /// Unweighted samples; `q` is the sample fraction.
    Samples(&'a BinMatrix),
    /// Weighted points; `q` is the weight sum.
    Weighted(&'a BinMatrix, &'a [f64]),
    /// Closed-form measure.
    Measure(&'a dyn RegionMeasure),
}

pub struct GrowParams<'a> {
    pub max_leaves: usize,
    pub criterion: Criterion,
    pub min_data: usize,
    /// Only enforced for sample-based model masses.
    pub min_model: usize,
    /// Children with `p/q` above this are inadmissible.
    pub max_ratio: Option<f64>,
    /// Features eligible at each node; called once per new leaf, in node
    /// order. Must return ascending indices.
    pub feature_chooser: Option<&'a mut dyn FnMut() -> Vec<usize>>,
}

pub struct Grown {
    pub tree: Tree<LeafStats>,
    /// Gains of the realized splits in the order they were made.
    pub gains: Vec<f64>,
}

#[derive(Clone)]
struct Candidate {
    gain: f64,
    feature: usize,
    rule: SplitRule,
    left: LeafStats,
    right: LeafStats,
}

struct OpenLeaf {
    node: usize,
    region: Region,
    data_rows: Vec<u32>,
    model_rows: Vec<u32>,
    stats: LeafStats,
    best: Option<Candidate>,
}

struct Grower<'a, 'b> {
    domain: &'a Domain,
    data: &'a BinMatrix,
    model: &'a ModelSide<'a>,
    params: &'a mut GrowParams<'b>,
    n_total: f64,
    m_total: f64,
}

/// Side statistics accumulated for a set of bins.
#[derive(Clone, Copy, Default)]
struct Acc {
    nd: usize,
    nm: usize,
    q: f64,
}

impl Grower<'_, '_> {
    fn stats(&self, acc: Acc, volume: f64) -> LeafStats {
        let q = match self.model {
            ModelSide::Samples(_) => acc.nm as f64 / self.m_total,
            _ => acc.q,
        };
        LeafStats {
            p: acc.nd as f64 / self.n_total,
            q,
            n_data: acc.nd,
            n_model: acc.nm,
            volume,
        }
    }

    fn admissible(&self, s: &LeafStats) -> bool {
        if s.n_data < self.params.min_data {
            return false;
        }
        if matches!(self.model, ModelSide::Samples(_)) && s.n_model < self.params.min_model {
            return false;
        }
        if s.q <= 0.0 {
            return false;
        }
        match self.params.max_ratio {
            Some(r) => s.p / s.q <= r,
            None => true,
        }
    }

    fn best_split(&mut self, leaf: &OpenLeaf) -> Option<Candidate> {
        let features = match self.params.feature_chooser.as_mut() {
            Some(choose) => choose(),
            None => (0..self.domain.n_features()).collect(),
        };
        let mut best: Option<Candidate> = None;
        let mut best_gain = 0.0;
        for k in features {
            let dim = *leaf.region.dim(k);
            if dim.size() < 2 {
                continue;
            }
            let card = self.domain.cardinality(k);
            let mut hist = vec![Acc::default(); card];
            for &r in &leaf.data_rows {
                hist[self.data.row(r as usize)[k] as usize].nd += 1;
            }
            match self.model {
                ModelSide::Samples(m) => {
                    for &r in &leaf.model_rows {
                        hist[m.row(r as usize)[k] as usize].nm += 1;
                    }
                }
                ModelSide::Weighted(m, w) => {
                    for &r in &leaf.model_rows {
                        let h = &mut hist[m.row(r as usize)[k] as usize];
                        h.nm += 1;
                        h.q += w[r as usize];
                    }
                }
                ModelSide::Measure(measure) => {
                    let mut out = vec![0.0; card];
                    measure.dim_masses(&leaf.region, k, &mut out);
                    for (h, o) in hist.iter_mut().zip(out) {
                        h.q = o;
                    }
                }
            }
            // bins in scan order
            let order: Vec<usize> = match dim {
                DimSet::Interval { .. } => dim.bins(),
                DimSet::Set(_) => {
                    let mut bins = dim.bins();
                    let key = |b: usize| -> (u8, f64) {
                        let s = self.stats(hist[b], 0.0);
                        if s.q > 0.0 {
                            (0, s.p / s.q)
                        } else if s.p > 0.0 {
                            (1, 0.0)
                        } else {
                            (2, 0.0)
                        }
                    };
                    bins.sort_by(|&a, &b| {
                        let (ka, kb) = (key(a), key(b));
                        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
                    });
                    bins
                }
            };
            let mut suffix = vec![Acc::default(); order.len() + 1];
            for i in (0..order.len()).rev() {
                let h = hist[order[i]];
                let s = suffix[i + 1];
                suffix[i] = Acc {
                    nd: s.nd + h.nd,
                    nm: s.nm + h.nm,
                    q: s.q + h.q,
                };
            }
            let mut prefix = Acc::default();
            let rest_volume = leaf.stats.volume / dim.size() as f64;
            let parent = self.stats(suffix[0], leaf.stats.volume);
            for i in 1..order.len() {
                let h = hist[order[i - 1]];
                prefix = Acc {
                    nd: prefix.nd + h.nd,
                    nm: prefix.nm + h.nm,
                    q: prefix.q + h.q,
                };
                let left = self.stats(prefix, rest_volume * i as f64);
                let right = self.stats(suffix[i], rest_volume * (order.len() - i) as f64);
                if !self.admissible(&left) || !self.admissible(&right) {
                    continue;
                }
                let gain = self.params.criterion.gain(
                    (parent.p, parent.q),
                    (left.p, left.q),
                    (right.p, right.q),
                );
                if gain > best_gain {
                    best_gain = gain;
                    let rule = match dim {
                        DimSet::Interval { .. } => SplitRule::Threshold(order[i] as u16),
                        DimSet::Set(_) => SplitRule::Categories(CategorySet::from_bins(
                            order[..i].iter().copied(),
                        )),
                    };
                    best = Some(Candidate {
                        gain,
                        feature: k,
                        rule,
                        left,
                        right,
                    });
                }
            }
        }
        best
    }
}

/// Grow a tree best-first. Data masses are `count / data.len()`.
pub fn grow(
    domain: &Domain,
    data: &BinMatrix,
    model: &ModelSide<'_>,
    params: &mut GrowParams<'_>,
) -> Grown {
    let (model_rows, m_total, root_q): (Vec<u32>, f64, f64) = match model {
        ModelSide::Samples(m) => ((0..m.len() as u32).collect(), m.len() as f64, 1.0),
        ModelSide::Weighted(m, w) => ((0..m.len() as u32).collect(), 1.0, w.iter().sum()),
        ModelSide::Measure(measure) => (Vec::new(), 1.0, measure.mass(&domain.full_region())),
    };
    let n_total = data.len() as f64;
    let region = domain.full_region();
    let root_stats = LeafStats {
        p: if data.is_empty() { 0.0 } else { 1.0 },
        q: root_q,
        n_data: data.len(),
        n_model: model_rows.len(),
        volume: region.volume(),
    };
    let mut g = Grower {
        domain,
        data,
        model,
        params,
        n_total,
        m_total,
    };
    let mut nodes: Vec<Node<LeafStats>> = vec![Node::Leaf(root_stats)];
    let mut root = OpenLeaf {
        node: 0,
        region,
        data_rows: (0..data.len() as u32).collect(),
        model_rows,
        stats: root_stats,
        best: None,
    };
    let mut gains = Vec::new();
    let mut open = Vec::new();
    if g.params.max_leaves > 1 {
        root.best = g.best_split(&root);
        open.push(root);
    }
    let mut n_leaves = 1;
    while n_leaves < g.params.max_leaves {
        // highest gain, ties to lowest node index
        let mut pick: Option<usize> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(c) = &leaf.best {
                let better = match pick {
                    None => true,
                    Some(j) => {
                        let cj = open[j].best.as_ref().unwrap();
                        c.gain > cj.gain || (c.gain == cj.gain && leaf.node < open[j].node)
                    }
                };
                if better {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let leaf = open.swap_remove(i);
        let c = leaf.best.clone().unwrap();
        let (lr, rr) = leaf.region.split(c.feature, &c.rule);
        let goes_left = |row: &[u8]| c.rule.goes_left(row[c.feature]);
        let (ld, rd): (Vec<u32>, Vec<u32>) = leaf
            .data_rows
            .iter()
            .partition(|&&r| goes_left(data.row(r as usize)));
        let model_matrix = match model {
            ModelSide::Samples(m) | ModelSide::Weighted(m, _) => Some(*m),
            ModelSide::Measure(_) => None,
        };
        let (lm, rm): (Vec<u32>, Vec<u32>) = match model_matrix {
            Some(m) => leaf
                .model_rows
                .iter()
                .partition(|&&r| goes_left(m.row(r as usize))),
            None => (Vec::new(), Vec::new()),
        };
        let l = nodes.len();
        nodes[leaf.node] = Node::Split {
            feature: c.feature,
            rule: c.rule,
            left: l,
            right: l + 1,
        };
        nodes.push(Node::Leaf(c.left));
        nodes.push(Node::Leaf(c.right));
        gains.push(c.gain);
        n_leaves += 1;
        for (node, region, data_rows, model_rows, stats) in
            [(l, lr, ld, lm, c.left), (l + 1, rr, rd, rm, c.right)]
        {
            let mut child = OpenLeaf {
                node,
                region,
                data_rows,
                model_rows,
                stats,
                best: None,
            };
            if n_leaves < g.params.max_leaves {
                child.best = g.best_split(&child);
            }
            open.push(child);
        }
    }
    Grown {
        tree: Tree::from_nodes(nodes).expect("grown nodes form a tree"),
        gains,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gain_by_hand() {
        let g = Criterion::Quadratic.gain((1.0, 1.0), (0.75, 0.25), (0.25, 0.75));
        assert!((g - (2.25 + 1.0 / 12.0 - 1.0)).abs() < 1e-12);
        assert_eq!(
            Criterion::Quadratic.gain((1.0, 1.0), (0.5, 0.5), (0.5, 0.5)),
            0.0
        );
    }

    #[test]
    fn volume_measure_split() {
        let dom = Domain::ordered(vec![4, 3]);
        let mut out = vec![0.0; 4];
        VolumeMeasure.dim_masses(&dom.full_region(), 0, &mut out);
        assert_eq!(out, vec![3.0; 4]);
    }

    #[test]
    fn four_bin_example_splits_after_first_bin() {
        let dom = Domain::ordered(vec![4]);
        let data = BinMatrix::from_rows(1, &[[0u8], [3u8]]);
        let model = BinMatrix::from_rows(1, &[[0u8], [1], [2], [3]]);
        let mut params = GrowParams {
            max_leaves: 2,
            criterion: Criterion::Quadratic,
            min_data: 0,
            min_model: 1,
            max_ratio: Some(2.0),
            feature_chooser: None,
        };
        let g = grow(&dom, &data, &ModelSide::Samples(&model), &mut params);
        assert_eq!(g.gains.len(), 1);
        assert!((g.gains[0] - 1.0 / 3.0).abs() < 1e-12);
        match &g.tree.nodes()[0] {
            Node::Split { rule, .. } => assert_eq!(*rule, SplitRule::Threshold(1)),
            _ => panic!("expected split"),
        }
    }
}
