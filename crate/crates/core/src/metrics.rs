//! Evaluation metrics.

use crate::data::FeatureSpec;
use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(a, b));
    }
    Ok(())
}

/// Coefficient of determination `1 − SSE/SST`.
pub fn r2(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    same_len(predictions.len(), targets.len())?;
    if targets.len() < 2 {
        return Err(Error::DegenerateTargets);
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let sst: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Err(Error::DegenerateTargets);
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum();
    Ok(1.0 - sse / sst)
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties counting 1/2.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    same_len(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn accuracy<T: PartialEq>(predicted: &[T], labels: &[T]) -> Result<f64> {
    same_len(predicted.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyTable);
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    same_len(predictions.len(), targets.len())?;
    if targets.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / targets.len() as f64)
}

/// Distribution with uniform density inside each bin `[edges[k], edges[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseUniform {
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PiecewiseUniform {
    pub fn new(edges: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if edges.len() != probs.len() + 1 || edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(
                "need ascending edges, one more than probabilities".into(),
            ));
        }
        Ok(Self { edges, probs })
    }

    /// Forecast over the bins of an ordered feature.
    pub fn from_spec(spec: &FeatureSpec, probs: Vec<f64>) -> Result<Self> {
        let mut edges = Vec::with_capacity(probs.len() + 1);
        for b in 0..spec.cardinality {
            edges.push(spec.bin_bounds(b).0);
        }
        edges.push(spec.bin_bounds(spec.cardinality - 1).1);
        Self::new(edges, probs)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let mut f = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            let (a, b) = (self.edges[k], self.edges[k + 1]);
            if x >= b {
                f += p;
            } else {
                if x > a {
                    f += p * (x - a) / (b - a);
                }
                break;
            }
        }
        f
    }
}

/// `∫ (F(x) − 1{x ≥ y})² dx` in closed form, `y` clamped into the support.
pub fn crps(forecast: &PiecewiseUniform, y: f64) -> f64 {
    let e = &forecast.edges;
    let y = y.clamp(e[0], e[e.len() - 1]);
    // integral of a squared linear function from h0 to h1 over length len
    let seg = |len: f64, h0: f64, h1: f64| len * (h0 * h0 + h0 * h1 + h1 * h1) / 3.0;
    let mut total = 0.0;
    let mut f0 = 0.0;
    for (k, &p) in forecast.probs.iter().enumerate() {
        let (a, b) = (e[k], e[k + 1]);
        let f1 = f0 + p;
        if y <= a {
            total += seg(b - a, f0 - 1.0, f1 - 1.0);
        } else if y >= b {
            total += seg(b - a, f0, f1);
        } else {
            let fy = f0 + p * (y - a) / (b - a);
            total += seg(y - a, f0, fy) + seg(b - y, fy - 1.0, f1 - 1.0);
        }
        f0 = f1;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r2_cases() {
        let y = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&[3.0; 4], &y).unwrap(), 0.0);
        // SSE = 0.25 + 0 + 1 + 1 = 2.25, SST = 4 + 1 + 0 + 9 = 14
        let v = r2(&[1.5, 2.0, 4.0, 5.0], &y).unwrap();
        assert!((v - (1.0 - 2.25 / 14.0)).abs() < 1e-15);
        assert!(matches!(
            r2(&[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::DegenerateTargets)
        ));
    }

    fn auc_pairs(s: &[f64], l: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_cases() {
        assert_eq!(
            auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        let s = [0.1, 0.4, 0.4, 0.4, 0.7, 0.9];
        let l = [false, true, false, true, false, true];
        assert_eq!(auc(&s, &l).unwrap(), auc_pairs(&s, &l));
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn accuracy_and_mae_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        let a: Vec<u8> = (0..10).collect();
        let b: Vec<u8> = (0..10).map(|i| if i < 5 { i } else { 0 }).collect();
        assert_eq!(accuracy(&a, &b).unwrap(), 0.5);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mae(&[1.5, 2.5], &[1.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((mae(&[0.0, 1.0, 5.0], &[1.0, 1.0, 2.0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn crps_cases() {
        let u = PiecewiseUniform::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        assert!((crps(&u, 0.0) - 1.0 / 3.0).abs() < 1e-15);
        let eps = 1e-4;
        let narrow =
            PiecewiseUniform::new(vec![-1.0, 0.5, 0.5 + eps, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(crps(&narrow, 0.5) < eps);
        // far from a point-like forecast CRPS tends to the absolute error
        assert!((crps(&narrow, 1.7) - (1.7 - 0.5)).abs() < 2.0 * eps);
    }

    fn quadrature(f: &PiecewiseUniform, y: f64, n: usize) -> f64 {
        let (a, b) = (f.edges[0], f.edges[f.edges.len() - 1]);
        let y = y.clamp(a, b);
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| {
                let x = a + (i as f64 + 0.5) * h;
                let ind = if x >= y { 1.0 } else { 0.0 };
                (f.cdf(x) - ind).powi(2) * h
            })
            .sum()
    }

    #[test]
    fn crps_matches_quadrature() {
        let f =
            PiecewiseUniform::new(vec![0.0, 0.7, 1.0, 2.5, 4.0], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        for y in [-1.0, 0.3, 1.0, 2.2, 3.9, 5.0] {
            assert!((crps(&f, y) - quadrature(&f, y, 1_000_000)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            s in proptest::collection::vec(-5.0f64..5.0, 2..40),
            seed in any::<u64>()
        ) {
            let l: Vec<bool> = (0..s.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let t: Vec<f64> = s.iter().map(|v| (v * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
        }

        #[test]
        fn crps_nonnegative(
            w in proptest::collection::vec(0.01f64..1.0, 1..8),
            p in proptest::collection::vec(0.0f64..1.0, 8),
            y in -2.0f64..10.0
        ) {
            let mut edges = vec![0.0];
            for x in &w { edges.push(edges.last().unwrap() + x); }
            let probs: Vec<f64> = p[..w.len()].to_vec();
            let s: f64 = probs.iter().sum();
            prop_assume!(s > 0.0);
            let probs = probs.iter().map(|v| v / s).collect();
            let f = PiecewiseUniform::new(edges, probs).unwrap();
            prop_assert!(crps(&f, y) >= 0.0);
        }
    }
}
