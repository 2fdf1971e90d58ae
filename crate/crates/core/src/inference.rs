//! Conditionals, marginalization over missing features, point predictions
//! and exact normalization on small domains.

use crate::boosting::{EnergyModel, ValidationMetric};
use crate::data::{DiscretizedDataset, Domain, FeatureSpec};
use crate::error::{Error, Result};
use crate::metrics;
use crate::numeric::{softmax_in_place, LogSumExp};

/// Default cap on the number of joint values enumerated when marginalizing.
pub const MARGINALIZATION_BUDGET: u64 = 1_000_000;

/// Largest domain [`exact_log_partition`] will enumerate.
pub const PARTITION_LIMIT: u64 = 10_000_000;

/// A (possibly unnormalized) log-density over a discrete domain.
pub trait LogDensity {
    fn domain(&self) -> &Domain;
    fn log_density(&self, x: &[u8]) -> f64;
    /// `out[b] = log_density(x with x[dim] = b)`.
    fn log_slice(&self, x: &[u8], dim: usize, out: &mut [f64]);
}

impl LogDensity for EnergyModel {
    fn domain(&self) -> &Domain {
        EnergyModel::domain(self)
    }

    fn log_density(&self, x: &[u8]) -> f64 {
        self.energy(x)
    }

    fn log_slice(&self, x: &[u8], dim: usize, out: &mut [f64]) {
        self.energy_slice(x, dim, out);
    }
}

pub fn unnormalized_log_density(model: &EnergyModel, x: &[u8]) -> f64 {
    model.energy(x)
}

/// Distribution of `x[target]` given every other coordinate of `x`.
pub fn conditional<M: LogDensity + ?Sized>(model: &M, x: &[u8], target: usize) -> Vec<f64> {
    let mut out = vec![0.0; model.domain().cardinality(target)];
    model.log_slice(x, target, &mut out);
    softmax_in_place(&mut out);
    out
}

/// Distribution of `x[target]` given the coordinates not in `missing`,
/// summing the model over every joint value of the missing features.
pub fn conditional_with_missing<M: LogDensity + ?Sized>(
    model: &M,
    x: &[u8],
    target: usize,
    missing: &[usize],
    budget: u64,
) -> Result<Vec<f64>> {
    let mut missing: Vec<usize> = missing.iter().copied().filter(|&j| j != target).collect();
    missing.sort_unstable();
    missing.dedup();
    if missing.is_empty() {
        return Ok(conditional(model, x, target));
    }
    let domain = model.domain();
    let size = missing.iter().fold(1u128, |acc, &j| {
        acc.saturating_mul(domain.cardinality(j) as u128)
    });
    if size > budget as u128 {
        return Err(Error::MarginalizationBudgetExceeded { size, budget });
    }
    let card = domain.cardinality(target);
    let mut acc = vec![LogSumExp::new(); card];
    let mut slice = vec![0.0; card];
    let mut y = x.to_vec();
    for &j in &missing {
        y[j] = 0;
    }
    for _ in 0..size as u64 {
        model.log_slice(&y, target, &mut slice);
        for (a, &s) in acc.iter_mut().zip(&slice) {
            a.add(s);
        }
        // odometer over the missing coordinates, last fastest
        for &j in missing.iter().rev() {
            y[j] += 1;
            if (y[j] as usize) < domain.cardinality(j) {
                break;
            }
            y[j] = 0;
        }
    }
    let mut out: Vec<f64> = acc.iter().map(|a| a.value()).collect();
    softmax_in_place(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Median,
    Mode,
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            "mode" => Ok(Self::Mode),
            _ => Err(Error::InvalidArgument(format!("unknown statistic `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Value(f64),
    Category { index: usize, label: String },
}

/// Index of the largest probability, ties to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Mean of the piecewise-uniform distribution over the bins of `spec`.
pub fn piecewise_mean(probs: &[f64], spec: &FeatureSpec) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(b, &p)| p * spec.bin_midpoint(b))
        .sum()
}

/// Median of the piecewise-uniform distribution over the bins of `spec`.
pub fn piecewise_median(probs: &[f64], spec: &FeatureSpec) -> f64 {
    let total: f64 = probs.iter().sum();
    let half = 0.5 * total;
    let mut cum = 0.0;
    let mut last = 0;
    for (b, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = b;
        if cum + p >= half {
            let (lo, hi) = spec.bin_bounds(b);
            return lo + ((half - cum) / p).clamp(0.0, 1.0) * (hi - lo);
        }
        cum += p;
    }
    spec.bin_bounds(last).1
}

/// Point prediction from a conditional over the bins of `spec`.
pub fn predict(probs: &[f64], spec: &FeatureSpec, statistic: Statistic) -> Result<Prediction> {
    if spec.is_categorical() {
        return match statistic {
            Statistic::Mode => {
                let index = argmax(probs);
                Ok(Prediction::Category {
                    index,
                    label: spec.categories[index].clone(),
                })
            }
            _ => Err(Error::InvalidArgument(format!(
                "{statistic:?} needs a numeric target, `{}` is categorical",
                spec.name
            ))),
        };
    }
    Ok(Prediction::Value(match statistic {
        Statistic::Mean => piecewise_mean(probs, spec),
        Statistic::Median => piecewise_median(probs, spec),
        Statistic::Mode => spec.bin_midpoint(argmax(probs)),
    }))
}

fn check_enumerable(domain: &Domain) -> Result<u64> {
    let size = domain.size();
    if size > PARTITION_LIMIT as u128 {
        return Err(Error::DomainTooLarge {
            size,
            limit: PARTITION_LIMIT,
        });
    }
    Ok(size as u64)
}

/// `log Σ_x exp(f(x))` by enumeration.
pub fn exact_log_partition<M: LogDensity + ?Sized>(model: &M) -> Result<f64> {
    let domain = model.domain();
    let size = check_enumerable(domain)?;
    let mut acc = LogSumExp::new();
    let mut row = vec![0u8; domain.n_features()];
    for i in 0..size {
        domain.row_at(i, &mut row);
        acc.add(model.log_density(&row));
    }
    Ok(acc.value())
}

/// Normalized probability of every domain point, in [`Domain::enumerate`]
/// order.
pub fn exact_probabilities<M: LogDensity + ?Sized>(model: &M) -> Result<Vec<f64>> {
    let domain = model.domain();
    let size = check_enumerable(domain)?;
    let mut row = vec![0u8; domain.n_features()];
    let mut out = Vec::with_capacity(size as usize);
    for i in 0..size {
        domain.row_at(i, &mut row);
        out.push(model.log_density(&row));
    }
    softmax_in_place(&mut out);
    Ok(out)
}

/// Score of the conditional of `target` on `data` (higher is better). Numeric
/// targets are represented by their bin midpoints.
pub fn validation_metric<M: LogDensity + ?Sized>(
    model: &M,
    data: &DiscretizedDataset,
    target: usize,
    metric: ValidationMetric,
) -> Result<f64> {
    let spec = &data.schema.features[target];
    let conds: Vec<Vec<f64>> = data
        .values
        .rows()
        .map(|x| conditional(model, x, target))
        .collect();
    let truth: Vec<usize> = data.values.rows().map(|x| x[target] as usize).collect();
    match metric {
        ValidationMetric::R2 => {
            if spec.is_categorical() {
                return Err(Error::InvalidConfig("r2 needs a numeric target".into()));
            }
            let pred: Vec<f64> = conds.iter().map(|c| piecewise_mean(c, spec)).collect();
            let y: Vec<f64> = truth.iter().map(|&b| spec.bin_midpoint(b)).collect();
            metrics::r2(&pred, &y)
        }
        ValidationMetric::Auc => {
            if spec.cardinality != 2 {
                return Err(Error::InvalidConfig("auc needs a binary target".into()));
            }
            let scores: Vec<f64> = conds.iter().map(|c| c[1]).collect();
            let labels: Vec<bool> = truth.iter().map(|&b| b == 1).collect();
            metrics::auc(&scores, &labels)
        }
        ValidationMetric::Accuracy => {
            let pred: Vec<usize> = conds.iter().map(|c| argmax(c)).collect();
            metrics::accuracy(&pred, &truth)
        }
        ValidationMetric::LogLikelihood => {
            if truth.is_empty() {
                return Err(Error::EmptyTable);
            }
            Ok(conds
                .iter()
                .zip(&truth)
                .map(|(c, &b)| c[b].ln())
                .sum::<f64>()
                / truth.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::InitialModel;
    use crate::data::Schema;
    use crate::tree::Tree;

    fn spec2() -> FeatureSpec {
        FeatureSpec::ordered("y", vec![1.0], 0.0, 2.0)
    }

    #[test]
    fn uniform_model_basics() {
        let dom = Domain::ordered(vec![4, 4]);
        let mut m = EnergyModel::new(Schema::from_domain(&dom), InitialModel::uniform(&dom));
        assert!((unnormalized_log_density(&m, &[1, 2]) - (1.0f64 / 16.0).ln()).abs() < 1e-12);
        assert!(exact_log_partition(&m).unwrap().abs() < 1e-12);
        let c = conditional(&m, &[0, 0], 1);
        assert!(c.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        m.push_stage(Tree::leaf(0.7), 1.0);
        assert!(
            (unnormalized_log_density(&m, &[1, 2]) - ((1.0f64 / 16.0).ln() + 0.7)).abs() < 1e-12
        );
        assert!((exact_log_partition(&m).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(
            conditional_with_missing(&m, &[0, 0], 1, &[], MARGINALIZATION_BUDGET).unwrap(),
            conditional(&m, &[0, 0], 1)
        );
    }

    #[test]
    fn too_large_domains_are_rejected() {
        let dom = Domain::ordered(vec![256; 4]);
        let m = EnergyModel::new(Schema::from_domain(&dom), InitialModel::uniform(&dom));
        assert!(matches!(
            exact_log_partition(&m),
            Err(Error::DomainTooLarge { .. })
        ));
        assert!(matches!(
            conditional_with_missing(&m, &[0; 4], 0, &[1, 2, 3], MARGINALIZATION_BUDGET),
            Err(Error::MarginalizationBudgetExceeded { .. })
        ));
    }

    #[test]
    fn predictions_on_simple_conditionals() {
        let spec = spec2();
        assert_eq!(
            predict(&[1.0, 0.0], &spec, Statistic::Mean).unwrap(),
            Prediction::Value(0.5)
        );
        assert_eq!(
            predict(&[0.0, 1.0], &spec, Statistic::Median).unwrap(),
            Prediction::Value(1.5)
        );
        assert_eq!(
            predict(&[0.5, 0.5], &spec, Statistic::Mean).unwrap(),
            Prediction::Value(1.0)
        );
        assert_eq!(
            predict(&[0.5, 0.5], &spec, Statistic::Median).unwrap(),
            Prediction::Value(1.0)
        );
        assert_eq!(
            predict(&[0.5, 0.5], &spec, Statistic::Mode).unwrap(),
            Prediction::Value(0.5)
        );
        let cat = FeatureSpec::categorical("c", vec!["a".into(), "b".into(), "c".into()]);
        assert_eq!(
            predict(&[0.2, 0.4, 0.4], &cat, Statistic::Mode).unwrap(),
            Prediction::Category {
                index: 1,
                label: "b".into()
            }
        );
        assert!(predict(&[0.2, 0.4, 0.4], &cat, Statistic::Mean).is_err());
    }
}
