//! Tabular ingestion and discretization.
//!
//! Every model in this crate works over a finite discrete domain: numerical
//! columns are binned by empirical quantiles and categorical columns are
//! label-encoded, so each row becomes a vector of small bin indices.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{CategorySet, DimSet, Region};

/// Largest number of bins or categories per feature.
pub const MAX_CARDINALITY: usize = 256;

/// Raw table of string cells, as read from a CSV file with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Self { headers, rows }
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    fn check_rectangular(&self) -> Result<()> {
        let expected = self.headers.len();
        for (row, cells) in self.rows.iter().enumerate() {
            if cells.len() != expected {
                return Err(Error::RaggedTable {
                    row,
                    expected,
                    found: cells.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    OrderedNumeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Number of bins (ordered) or categories (categorical).
    pub cardinality: usize,
    /// Right-exclusive bin boundaries: a value `v` falls in bin `k` when
    /// `edges[k-1] <= v < edges[k]`.
    pub bin_edges: Vec<f64>,
    pub categories: Vec<String>,
    /// Observed training range, used as the outer bounds of the first and
    /// last bins.
    pub lower: f64,
    pub upper: f64,
}

impl FeatureSpec {
    pub fn ordered(name: impl Into<String>, bin_edges: Vec<f64>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::OrderedNumeric,
            cardinality: bin_edges.len() + 1,
            bin_edges,
            categories: Vec::new(),
            lower,
            upper,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            cardinality: categories.len(),
            bin_edges: Vec::new(),
            categories,
            lower: 0.0,
            upper: 0.0,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    /// Raw-space interval `[lo, hi)` covered by an ordered bin.
    pub fn bin_bounds(&self, bin: usize) -> (f64, f64) {
        let lo = if bin == 0 {
            self.lower
        } else {
            self.bin_edges[bin - 1]
        };
        let hi = if bin + 1 >= self.cardinality {
            self.upper
        } else {
            self.bin_edges[bin]
        };
        (lo, hi.max(lo))
    }

    pub fn bin_midpoint(&self, bin: usize) -> f64 {
        let (lo, hi) = self.bin_bounds(bin);
        0.5 * (lo + hi)
    }

    /// Map a raw cell to its bin or category index.
    pub fn encode(&self, cell: &str, row: usize) -> Result<u8> {
        if cell.is_empty() {
            return Err(Error::MissingValue {
                feature: self.name.clone(),
                row,
            });
        }
        match self.kind {
            FeatureKind::OrderedNumeric => {
                let v = parse_number(cell).ok_or_else(|| Error::InvalidNumber {
                    feature: self.name.clone(),
                    row,
                    value: cell.to_string(),
                })?;
                Ok(self.encode_value(v))
            }
            FeatureKind::Categorical => self
                .categories
                .iter()
                .position(|c| c == cell)
                .map(|i| i as u8)
                .ok_or_else(|| Error::UnknownCategory {
                    feature: self.name.clone(),
                    label: cell.to_string(),
                }),
        }
    }

    pub fn encode_value(&self, v: f64) -> u8 {
        self.bin_edges.partition_point(|&e| e <= v) as u8
    }

    fn validate(&self) -> Result<()> {
        if !(2..=MAX_CARDINALITY).contains(&self.cardinality) {
            return Err(Error::InvalidArgument(format!(
                "feature `{}` has cardinality {}",
                self.name, self.cardinality
            )));
        }
        match self.kind {
            FeatureKind::OrderedNumeric => {
                if self.bin_edges.len() + 1 != self.cardinality
                    || self.bin_edges.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(Error::InvalidArgument(format!(
                        "feature `{}` has malformed bin edges",
                        self.name
                    )));
                }
            }
            FeatureKind::Categorical => {
                let distinct: BTreeSet<_> = self.categories.iter().collect();
                if distinct.len() != self.categories.len()
                    || self.categories.len() != self.cardinality
                {
                    return Err(Error::InvalidArgument(format!(
                        "feature `{}` has duplicate categories",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    /// Feature used for validation metrics only.
    pub target_index: Option<usize>,
    /// Columns removed while fitting the discretizer.
    pub dropped: Vec<String>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = Self {
            features,
            target_index: None,
            dropped: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
            f.validate()?;
        }
        if let Some(t) = self.target_index {
            if t >= self.features.len() {
                return Err(Error::InvalidArgument(format!(
                    "target index {t} out of range"
                )));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn with_target(mut self, name: &str) -> Result<Self> {
        self.target_index = Some(self.feature_index(name)?);
        Ok(self)
    }

    pub fn domain(&self) -> Domain {
        Domain::new(
            self.features.iter().map(|f| f.cardinality).collect(),
            self.features.iter().map(|f| f.is_categorical()).collect(),
        )
    }

    /// Schema over a bare domain: ordered feature `j` has unit-width bins
    /// `[k, k+1)` and categorical features are labelled `0..c`. Features are
    /// named `x0, x1, ..`.
    pub fn from_domain(domain: &Domain) -> Self {
        let features = (0..domain.n_features())
            .map(|j| {
                let c = domain.cardinality(j);
                let name = format!("x{j}");
                if domain.is_categorical(j) {
                    FeatureSpec::categorical(name, (0..c).map(|k| k.to_string()).collect())
                } else {
                    FeatureSpec::ordered(name, (1..c).map(|k| k as f64).collect(), 0.0, c as f64)
                }
            })
            .collect();
        Self {
            features,
            target_index: None,
            dropped: Vec::new(),
        }
    }
}

/// Per-feature kind overrides for schema inference.
pub type ColumnHints = HashMap<String, FeatureKind>;

/// Row-major matrix of bin indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BinMatrix {
    n_features: usize,
    values: Vec<u8>,
}

impl BinMatrix {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            values: Vec::new(),
        }
    }

    pub fn with_capacity(n_features: usize, rows: usize) -> Self {
        Self {
            n_features,
            values: Vec::with_capacity(n_features * rows),
        }
    }

    pub fn from_rows<R: AsRef<[u8]>>(n_features: usize, rows: &[R]) -> Self {
        let mut m = Self::with_capacity(n_features, rows.len());
        for r in rows {
            m.push_row(r.as_ref());
        }
        m
    }

    pub fn from_flat(n_features: usize, values: Vec<u8>) -> Result<Self> {
        if n_features == 0 || !values.len().is_multiple_of(n_features) {
            return Err(Error::InvalidArgument(
                "flat buffer is not a multiple of the row width".into(),
            ));
        }
        Ok(Self { n_features, values })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.n_features).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn push_row(&mut self, row: &[u8]) {
        debug_assert_eq!(row.len(), self.n_features);
        self.values.extend_from_slice(row);
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.values.chunks_exact(self.n_features.max(1))
    }

    pub fn as_flat(&self) -> &[u8] {
        &self.values
    }

    pub fn truncate(&mut self, rows: usize) {
        self.values.truncate(rows * self.n_features);
    }

    pub fn extend(&mut self, other: &BinMatrix) {
        debug_assert_eq!(other.n_features, self.n_features);
        self.values.extend_from_slice(&other.values);
    }

    /// Keep rows whose flag is true, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        let d = self.n_features;
        let mut write = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                self.values.copy_within(i * d..(i + 1) * d, write * d);
                write += 1;
            }
        }
        self.values.truncate(write * d);
    }
}

/// The finite discrete input space: per-feature cardinalities and kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    cardinalities: Vec<usize>,
    categorical: Vec<bool>,
}

impl Domain {
    pub fn new(cardinalities: Vec<usize>, categorical: Vec<bool>) -> Self {
        assert_eq!(cardinalities.len(), categorical.len());
        Self {
            cardinalities,
            categorical,
        }
    }

    /// All-ordered domain, handy for tests.
    pub fn ordered(cardinalities: Vec<usize>) -> Self {
        let n = cardinalities.len();
        Self::new(cardinalities, vec![false; n])
    }

    pub fn n_features(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinality(&self, j: usize) -> usize {
        self.cardinalities[j]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn is_categorical(&self, j: usize) -> bool {
        self.categorical[j]
    }

    /// Number of points in the domain.
    pub fn size(&self) -> u128 {
        self.cardinalities
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }

    pub fn log_volume(&self) -> f64 {
        self.cardinalities.iter().map(|&c| (c as f64).ln()).sum()
    }

    /// Mixed-radix index of a row; the last feature varies fastest.
    pub fn index_of(&self, row: &[u8]) -> u64 {
        row.iter()
            .zip(&self.cardinalities)
            .fold(0u64, |acc, (&v, &c)| acc * c as u64 + v as u64)
    }

    pub fn row_at(&self, mut index: u64, out: &mut [u8]) {
        for j in (0..self.n_features()).rev() {
            let c = self.cardinalities[j] as u64;
            out[j] = (index % c) as u8;
            index /= c;
        }
    }

    pub fn full_region(&self) -> Region {
        Region::new(
            (0..self.n_features())
                .map(|j| {
                    let c = self.cardinalities[j];
                    if self.categorical[j] {
                        DimSet::Set(CategorySet::full(c))
                    } else {
                        DimSet::Interval {
                            lo: 0,
                            hi: c as u16,
                        }
                    }
                })
                .collect(),
        )
    }

    /// Enumerate every point (only sensible for tiny domains).
    pub fn enumerate(&self) -> BinMatrix {
        let size = self.size() as u64;
        let mut m = BinMatrix::with_capacity(self.n_features(), size as usize);
        let mut row = vec![0u8; self.n_features()];
        for i in 0..size {
            self.row_at(i, &mut row);
            m.push_row(&row);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedDataset {
    pub schema: Schema,
    pub values: BinMatrix,
}

impl DiscretizedDataset {
    pub fn new(schema: Schema, values: BinMatrix) -> Result<Self> {
        if values.n_features() != schema.n_features() {
            return Err(Error::LengthMismatch(
                values.n_features(),
                schema.n_features(),
            ));
        }
        for row in values.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v as usize >= schema.features[j].cardinality {
                    return Err(Error::InvalidArgument(format!(
                        "bin {v} out of range for feature `{}`",
                        schema.features[j].name
                    )));
                }
            }
        }
        Ok(Self { schema, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn domain(&self) -> Domain {
        self.schema.domain()
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut m = BinMatrix::with_capacity(self.values.n_features(), indices.len());
        for &i in indices {
            m.push_row(self.values.row(i));
        }
        Self {
            schema: self.schema.clone(),
            values: m,
        }
    }
}

/// A raw-space cell produced by [`undiscretize`].
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Number(f64),
    Label(String),
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Number(v) => write!(f, "{v}"),
            RawValue::Label(s) => f.write_str(s),
        }
    }
}

pub(crate) fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Classify each column as ordered-numeric or categorical.
///
/// A column is numeric when every cell parses as a finite number, unless a
/// hint says otherwise. Numeric columns get their bins later, in
/// [`fit_discretizer`].
pub fn infer_schema(table: &RawTable, hints: Option<&ColumnHints>) -> Result<Schema> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    table.check_rectangular()?;
    let mut features = Vec::with_capacity(table.headers.len());
    for (col, name) in table.headers.iter().enumerate() {
        for (row, cells) in table.rows.iter().enumerate() {
            if cells[col].is_empty() {
                return Err(Error::MissingValue {
                    feature: name.clone(),
                    row,
                });
            }
        }
        let hinted = hints.and_then(|h| h.get(name)).copied();
        let all_numeric = table.rows.iter().all(|r| parse_number(&r[col]).is_some());
        let kind = hinted.unwrap_or(if all_numeric {
            FeatureKind::OrderedNumeric
        } else {
            FeatureKind::Categorical
        });
        match kind {
            FeatureKind::OrderedNumeric => {
                if let Some((row, cells)) = table
                    .rows
                    .iter()
                    .enumerate()
                    .find(|(_, r)| parse_number(&r[col]).is_none())
                {
                    return Err(Error::InvalidNumber {
                        feature: name.clone(),
                        row,
                        value: cells[col].clone(),
                    });
                }
                features.push(FeatureSpec {
                    name: name.clone(),
                    kind,
                    cardinality: 0,
                    bin_edges: Vec::new(),
                    categories: Vec::new(),
                    lower: 0.0,
                    upper: 0.0,
                });
            }
            FeatureKind::Categorical => {
                let labels: BTreeSet<&str> = table.rows.iter().map(|r| r[col].as_str()).collect();
                if labels.len() > MAX_CARDINALITY {
                    return Err(Error::CardinalityOverflow {
                        feature: name.clone(),
                        count: labels.len(),
                    });
                }
                let categories = labels.into_iter().map(str::to_string).collect();
                features.push(FeatureSpec::categorical(name.clone(), categories));
            }
        }
    }
    Ok(Schema {
        features,
        target_index: None,
        dropped: Vec::new(),
    })
}

fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin edges for one numeric column.
///
/// With at most `max_bins` distinct values every value gets its own bin, with
/// edges at the midpoints between consecutive values. Otherwise the edges are
/// the empirical quantiles at levels `k / max_bins`, deduplicated.
pub fn quantile_edges(name: &str, values: &[f64], max_bins: usize) -> Result<Vec<f64>> {
    if !(2..=MAX_CARDINALITY).contains(&max_bins) {
        return Err(Error::InvalidArgument(format!(
            "max_bins must be in [2, 256], got {max_bins}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::ConstantColumn {
            feature: name.to_string(),
        });
    }
    if distinct.len() <= max_bins {
        return Ok(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect());
    }
    let min = distinct[0];
    let mut edges: Vec<f64> = (1..max_bins)
        .map(|k| quantile_sorted(&sorted, k as f64 / max_bins as f64))
        .filter(|&e| e > min)
        .collect();
    edges.dedup();
    if edges.is_empty() {
        edges.push(0.5 * (distinct[0] + distinct[1]));
    }
    Ok(edges)
}

/// Populate bin edges for every numeric feature.
///
/// Features with fewer than two distinct values are dropped (with a
/// warning) and listed in [`Schema::dropped`].
pub fn fit_discretizer(table: &RawTable, schema: &Schema, max_bins: usize) -> Result<Schema> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(2..=MAX_CARDINALITY).contains(&max_bins) {
        return Err(Error::InvalidArgument(format!(
            "max_bins must be in [2, 256], got {max_bins}"
        )));
    }
    let mut features = Vec::new();
    let mut dropped = schema.dropped.clone();
    for spec in &schema.features {
        let col = table.column_index(&spec.name)?;
        match spec.kind {
            FeatureKind::OrderedNumeric => {
                let mut values = Vec::with_capacity(table.n_rows());
                for (row, cells) in table.rows.iter().enumerate() {
                    let v = parse_number(&cells[col]).ok_or_else(|| Error::InvalidNumber {
                        feature: spec.name.clone(),
                        row,
                        value: cells[col].clone(),
                    })?;
                    values.push(v);
                }
                match quantile_edges(&spec.name, &values, max_bins) {
                    Ok(edges) => {
                        let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
                        let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        features.push(FeatureSpec::ordered(spec.name.clone(), edges, lower, upper));
                    }
                    Err(Error::ConstantColumn { feature }) => {
                        log::warn!("dropping constant column `{feature}`");
                        dropped.push(feature);
                    }
                    Err(e) => return Err(e),
                }
            }
            FeatureKind::Categorical => {
                if spec.cardinality < 2 {
                    log::warn!("dropping constant column `{}`", spec.name);
                    dropped.push(spec.name.clone());
                } else {
                    features.push(spec.clone());
                }
            }
        }
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("no usable features".into()));
    }
    let target_name = schema.target_index.map(|t| schema.features[t].name.clone());
    let mut fitted = Schema {
        features,
        target_index: None,
        dropped,
    };
    if let Some(name) = target_name {
        fitted.target_index = Some(fitted.feature_index(&name)?);
    }
    fitted.validate()?;
    Ok(fitted)
}

/// Map every row to bin indices. Columns are matched to features by name.
pub fn discretize(table: &RawTable, schema: &Schema) -> Result<DiscretizedDataset> {
    table.check_rectangular()?;
    let cols = schema
        .features
        .iter()
        .map(|f| table.column_index(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let mut values = BinMatrix::with_capacity(schema.n_features(), table.n_rows());
    let mut row_bins = vec![0u8; schema.n_features()];
    for (r, cells) in table.rows.iter().enumerate() {
        for (j, (&col, spec)) in cols.iter().zip(&schema.features).enumerate() {
            row_bins[j] = spec.encode(&cells[col], r)?;
        }
        values.push_row(&row_bins);
    }
    Ok(DiscretizedDataset {
        schema: schema.clone(),
        values,
    })
}

/// Map a bin row back to raw space. Numeric values are drawn uniformly
/// inside their bin.
pub fn undiscretize<R: Rng + ?Sized>(bins: &[u8], schema: &Schema, rng: &mut R) -> Vec<RawValue> {
    bins.iter()
        .zip(&schema.features)
        .map(|(&b, spec)| match spec.kind {
            FeatureKind::Categorical => RawValue::Label(spec.categories[b as usize].clone()),
            FeatureKind::OrderedNumeric => {
                let (lo, hi) = spec.bin_bounds(b as usize);
                let u: f64 = rng.random();
                let mut v = lo + u * (hi - lo);
                // rounding can land on the exclusive upper edge
                if v >= hi {
                    v = lo;
                }
                RawValue::Number(v)
            }
        })
        .collect()
}

/// Per-feature empirical probability vectors.
pub fn empirical_marginals(data: &DiscretizedDataset) -> Vec<Vec<f64>> {
    let n = data.n_rows() as f64;
    let mut counts: Vec<Vec<u64>> = data
        .schema
        .features
        .iter()
        .map(|f| vec![0; f.cardinality])
        .collect();
    for row in data.values.rows() {
        for (j, &v) in row.iter().enumerate() {
            counts[j][v as usize] += 1;
        }
    }
    counts
        .into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / n).collect())
        .collect()
}
