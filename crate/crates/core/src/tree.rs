//! Binary trees over the discretized domain.
//!
//! A [`Tree`] partitions the domain into leaf regions; the leaf payload is
//! generic so the same structure carries energy increments ([`EnergyTree`])
//! and density leaves (see `def`).

use crate::data::Domain;
use crate::error::{Error, Result};

/// Bit set over at most 256 bins or categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CategorySet([u64; 4]);

impl CategorySet {
    pub const fn empty() -> Self {
        Self([0; 4])
    }

    /// `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        Self::below(n)
    }

    /// `{0, .., t-1}`.
    pub fn below(t: usize) -> Self {
        let mut words = [0u64; 4];
        for (w, word) in words.iter_mut().enumerate() {
            let lo = w * 64;
            if t >= lo + 64 {
                *word = u64::MAX;
            } else if t > lo {
                *word = (1u64 << (t - lo)) - 1;
            }
        }
        Self(words)
    }

    pub fn from_bins(bins: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty();
        for b in bins {
            s.insert(b);
        }
        s
    }

    pub fn from_words(words: [u64; 4]) -> Self {
        Self(words)
    }

    pub fn words(&self) -> [u64; 4] {
        self.0
    }

    #[inline]
    pub fn contains(&self, b: usize) -> bool {
        (self.0[b >> 6] >> (b & 63)) & 1 == 1
    }

    pub fn insert(&mut self, b: usize) {
        self.0[b >> 6] |= 1 << (b & 63);
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn intersect(&self, other: &Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] & other.0[i]))
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] & !other.0[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(w * 64 + b)
                }
            })
        })
    }
}

/// How a split routes a bin value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    /// Ordered feature: bins `< t` go left.
    Threshold(u16),
    /// Categorical feature: members go left.
    Categories(CategorySet),
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, v: u8) -> bool {
        match self {
            SplitRule::Threshold(t) => (v as u16) < *t,
            SplitRule::Categories(set) => set.contains(v as usize),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<L> {
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf(L),
}

/// Flat, append-only node array with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<L> {
    nodes: Vec<Node<L>>,
}

/// Piecewise-constant energy increment.
pub type EnergyTree = Tree<f64>;

impl<L> Tree<L> {
    pub fn leaf(value: L) -> Self {
        Self {
            nodes: vec![Node::Leaf(value)],
        }
    }

    /// Build from raw nodes, checking that every node except the root has
    /// exactly one parent and that children come after their parents.
    pub fn from_nodes(nodes: Vec<Node<L>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                for &c in [left, right] {
                    if c <= i || c >= nodes.len() {
                        return Err(Error::InvalidArgument(format!(
                            "node {i} has invalid child {c}"
                        )));
                    }
                    parents[c] += 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::InvalidArgument("nodes do not form a tree".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node<L>] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    /// Index of the leaf node containing `x`.
    #[inline]
    pub fn locate(&self, x: &[u8]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    i = if rule.goes_left(x[*feature]) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    #[inline]
    pub fn leaf_at(&self, x: &[u8]) -> &L {
        match &self.nodes[self.locate(x)] {
            Node::Leaf(l) => l,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Leaf payloads in node order.
    pub fn leaves(&self) -> impl Iterator<Item = &L> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Split { .. } => None,
        })
    }

    pub fn map_leaves<M>(&self, mut f: impl FnMut(&L) -> M) -> Tree<M> {
        Tree {
            nodes: self
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Leaf(l) => Node::Leaf(f(l)),
                    Node::Split {
                        feature,
                        rule,
                        left,
                        right,
                    } => Node::Split {
                        feature: *feature,
                        rule: *rule,
                        left: *left,
                        right: *right,
                    },
                })
                .collect(),
        }
    }

    /// Leaf regions in node order. The regions partition the domain.
    pub fn leaf_regions(&self, domain: &Domain) -> Vec<(Region, &L)> {
        let mut out = Vec::with_capacity(self.num_leaves());
        let mut stack = vec![(0usize, domain.full_region())];
        // depth-first, left before right, then sorted back to node order
        let mut tagged = Vec::new();
        while let Some((i, region)) = stack.pop() {
            match &self.nodes[i] {
                Node::Leaf(l) => tagged.push((i, region, l)),
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    let (l, r) = region.split(*feature, rule);
                    stack.push((*right, r));
                    stack.push((*left, l));
                }
            }
        }
        tagged.sort_by_key(|(i, _, _)| *i);
        out.extend(tagged.into_iter().map(|(_, r, l)| (r, l)));
        out
    }

    /// Visit every leaf reachable when `x[dim]` ranges over all of its bins,
    /// passing the set of `dim` bins that reach it. Other coordinates are
    /// held at `x`. Returns the number of nodes visited.
    pub fn for_each_slice_leaf(
        &self,
        x: &[u8],
        dim: usize,
        cardinality: usize,
        mut f: impl FnMut(&CategorySet, &L),
    ) -> usize {
        let mut visits = 0;
        self.slice_rec(
            0,
            x,
            dim,
            CategorySet::full(cardinality),
            &mut f,
            &mut visits,
        );
        visits
    }

    fn slice_rec(
        &self,
        i: usize,
        x: &[u8],
        dim: usize,
        mask: CategorySet,
        f: &mut impl FnMut(&CategorySet, &L),
        visits: &mut usize,
    ) {
        *visits += 1;
        match &self.nodes[i] {
            Node::Leaf(l) => f(&mask, l),
            Node::Split {
                feature,
                rule,
                left,
                right,
            } => {
                if *feature != dim {
                    let next = if rule.goes_left(x[*feature]) {
                        *left
                    } else {
                        *right
                    };
                    self.slice_rec(next, x, dim, mask, f, visits);
                    return;
                }
                let left_set = match rule {
                    SplitRule::Threshold(t) => CategorySet::below(*t as usize),
                    SplitRule::Categories(s) => *s,
                };
                let lm = mask.intersect(&left_set);
                let rm = mask.difference(&left_set);
                if !lm.is_empty() {
                    self.slice_rec(*left, x, dim, lm, f, visits);
                }
                if !rm.is_empty() {
                    self.slice_rec(*right, x, dim, rm, f, visits);
                }
            }
        }
    }
}

impl Tree<f64> {
    #[inline]
    pub fn evaluate(&self, x: &[u8]) -> f64 {
        *self.leaf_at(x)
    }

    /// Values of the tree along `dim` with the other coordinates fixed.
    pub fn conditional_slice(&self, x: &[u8], dim: usize, cardinality: usize) -> Vec<f64> {
        let mut out = vec![0.0; cardinality];
        self.add_slice(x, dim, 1.0, &mut out);
        out
    }

    /// `out[b] += scale * tree(x with x[dim] = b)`, in one traversal.
    /// Returns the number of nodes visited.
    pub fn add_slice(&self, x: &[u8], dim: usize, scale: f64, out: &mut [f64]) -> usize {
        let card = out.len();
        let mut visits = 0;
        self.add_slice_rec(0, x, dim, 0, card as u16, scale, out, &mut visits);
        visits
    }

    // Ordered-dimension fast path: the reachable bins stay an interval until
    // a categorical split on `dim` is hit.
    #[allow(clippy::too_many_arguments)]
    fn add_slice_rec(
        &self,
        i: usize,
        x: &[u8],
        dim: usize,
        lo: u16,
        hi: u16,
        scale: f64,
        out: &mut [f64],
        visits: &mut usize,
    ) {
        *visits += 1;
        match &self.nodes[i] {
            Node::Leaf(w) => {
                let v = scale * w;
                for o in &mut out[lo as usize..hi as usize] {
                    *o += v;
                }
            }
            Node::Split {
                feature,
                rule,
                left,
                right,
            } => {
                if *feature != dim {
                    let next = if rule.goes_left(x[*feature]) {
                        *left
                    } else {
                        *right
                    };
                    self.add_slice_rec(next, x, dim, lo, hi, scale, out, visits);
                    return;
                }
                match rule {
                    SplitRule::Threshold(t) => {
                        let t = (*t).clamp(lo, hi);
                        if lo < t {
                            self.add_slice_rec(*left, x, dim, lo, t, scale, out, visits);
                        }
                        if t < hi {
                            self.add_slice_rec(*right, x, dim, t, hi, scale, out, visits);
                        }
                    }
                    SplitRule::Categories(set) => {
                        let mask = CategorySet::below(hi as usize)
                            .difference(&CategorySet::below(lo as usize));
                        let lm = mask.intersect(set);
                        let rm = mask.difference(set);
                        if !lm.is_empty() {
                            self.add_slice_set(*left, x, dim, lm, scale, out, visits);
                        }
                        if !rm.is_empty() {
                            self.add_slice_set(*right, x, dim, rm, scale, out, visits);
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn add_slice_set(
        &self,
        i: usize,
        x: &[u8],
        dim: usize,
        mask: CategorySet,
        scale: f64,
        out: &mut [f64],
        visits: &mut usize,
    ) {
        *visits += 1;
        match &self.nodes[i] {
            Node::Leaf(w) => {
                let v = scale * w;
                for b in mask.iter() {
                    out[b] += v;
                }
            }
            Node::Split {
                feature,
                rule,
                left,
                right,
            } => {
                if *feature != dim {
                    let next = if rule.goes_left(x[*feature]) {
                        *left
                    } else {
                        *right
                    };
                    self.add_slice_set(next, x, dim, mask, scale, out, visits);
                    return;
                }
                let left_set = match rule {
                    SplitRule::Threshold(t) => CategorySet::below(*t as usize),
                    SplitRule::Categories(s) => *s,
                };
                let lm = mask.intersect(&left_set);
                let rm = mask.difference(&left_set);
                if !lm.is_empty() {
                    self.add_slice_set(*left, x, dim, lm, scale, out, visits);
                }
                if !rm.is_empty() {
                    self.add_slice_set(*right, x, dim, rm, scale, out, visits);
                }
            }
        }
    }

    pub fn max_leaf_value(&self) -> f64 {
        self.leaves().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Admitted bins of one dimension of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimSet {
    /// Ordered dimension: bins `lo..hi`.
    Interval { lo: u16, hi: u16 },
    /// Categorical dimension: admitted categories.
    Set(CategorySet),
}

impl DimSet {
    pub fn size(&self) -> usize {
        match self {
            DimSet::Interval { lo, hi } => (hi - lo) as usize,
            DimSet::Set(s) => s.len(),
        }
    }

    #[inline]
    pub fn contains(&self, b: usize) -> bool {
        match self {
            DimSet::Interval { lo, hi } => (*lo as usize) <= b && b < *hi as usize,
            DimSet::Set(s) => s.contains(b),
        }
    }

    pub fn bins(&self) -> Vec<usize> {
        match self {
            DimSet::Interval { lo, hi } => (*lo as usize..*hi as usize).collect(),
            DimSet::Set(s) => s.iter().collect(),
        }
    }
}

/// Axis-aligned subset of the domain: one [`DimSet`] per feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    dims: Vec<DimSet>,
}

impl Region {
    pub fn new(dims: Vec<DimSet>) -> Self {
        Self { dims }
    }

    pub fn dims(&self) -> &[DimSet] {
        &self.dims
    }

    pub fn dim(&self, j: usize) -> &DimSet {
        &self.dims[j]
    }

    pub fn contains(&self, x: &[u8]) -> bool {
        self.dims
            .iter()
            .zip(x)
            .all(|(d, &v)| d.contains(v as usize))
    }

    /// Number of domain points in the region.
    pub fn volume(&self) -> f64 {
        self.dims.iter().map(|d| d.size() as f64).product()
    }

    pub fn log_volume(&self) -> f64 {
        self.dims.iter().map(|d| (d.size() as f64).ln()).sum()
    }

    /// Children of a split of this region.
    pub fn split(&self, feature: usize, rule: &SplitRule) -> (Region, Region) {
        let mut left = self.clone();
        let mut right = self.clone();
        match (self.dims[feature], rule) {
            (DimSet::Interval { lo, hi }, SplitRule::Threshold(t)) => {
                let t = (*t).clamp(lo, hi);
                left.dims[feature] = DimSet::Interval { lo, hi: t };
                right.dims[feature] = DimSet::Interval { lo: t, hi };
            }
            (DimSet::Set(s), SplitRule::Categories(c)) => {
                left.dims[feature] = DimSet::Set(s.intersect(c));
                right.dims[feature] = DimSet::Set(s.difference(c));
            }
            (DimSet::Interval { lo, hi }, SplitRule::Categories(c)) => {
                let s =
                    CategorySet::below(hi as usize).difference(&CategorySet::below(lo as usize));
                left.dims[feature] = DimSet::Set(s.intersect(c));
                right.dims[feature] = DimSet::Set(s.difference(c));
            }
            (DimSet::Set(s), SplitRule::Threshold(t)) => {
                let below = CategorySet::below(*t as usize);
                left.dims[feature] = DimSet::Set(s.intersect(&below));
                right.dims[feature] = DimSet::Set(s.difference(&below));
            }
        }
        (left, right)
    }
}
