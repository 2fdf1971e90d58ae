use rand::Rng;

use crate::data::{empirical_marginals, DiscretizedDataset, Domain};
use crate::error::{Error, Result};
use crate::grow::RegionMeasure;
use crate::numeric::sample_weights;
use crate::tree::{DimSet, Region};

/// Mixture of the uniform distribution and the product of per-feature
/// marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialModel {
    marginals: Vec<Vec<f64>>,
    uniform_mix: f64,
    log_marginals: Vec<Vec<f64>>,
    log_uniform: f64,
}

impl InitialModel {
    pub fn new(marginals: Vec<Vec<f64>>, uniform_mix: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&uniform_mix) {
            return Err(Error::InvalidArgument(format!(
                "uniform_mix {uniform_mix} outside [0, 1]"
            )));
        }
        for (j, m) in marginals.iter().enumerate() {
            let s: f64 = m.iter().sum();
            if m.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "marginal {j} is not a probability vector"
                )));
            }
        }
        let log_marginals = marginals
            .iter()
            .map(|m| m.iter().map(|v| v.ln()).collect())
            .collect();
        let log_uniform = -marginals.iter().map(|m| (m.len() as f64).ln()).sum::<f64>();
        Ok(Self {
            marginals,
            uniform_mix,
            log_marginals,
            log_uniform,
        })
    }

    pub fn fit(data: &DiscretizedDataset, uniform_mix: f64) -> Result<Self> {
        if data.n_rows() == 0 {
            return Err(Error::EmptyTable);
        }
        Self::new(empirical_marginals(data), uniform_mix)
    }

    pub fn uniform(domain: &Domain) -> Self {
        let marginals = domain
            .cardinalities()
            .iter()
            .map(|&c| vec![1.0 / c as f64; c])
            .collect();
        Self::new(marginals, 1.0).expect("uniform marginals are valid")
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    pub fn uniform_mix(&self) -> f64 {
        self.uniform_mix
    }

    pub fn n_features(&self) -> usize {
        self.marginals.len()
    }

    fn mix(&self, log_uniform: f64, log_product: f64) -> f64 {
        let u = self.uniform_mix;
        let a = if u > 0.0 {
            u.ln() + log_uniform
        } else {
            f64::NEG_INFINITY
        };
        let b = if u < 1.0 {
            (1.0 - u).ln() + log_product
        } else {
            f64::NEG_INFINITY
        };
        let m = a.max(b);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + ((a - m).exp() + (b - m).exp()).ln()
    }

    pub fn log_density(&self, x: &[u8]) -> f64 {
        let lp: f64 = x
            .iter()
            .zip(&self.log_marginals)
            .map(|(&v, lm)| lm[v as usize])
            .sum();
        self.mix(self.log_uniform, lp)
    }

    /// `out[b] = log q0(x with x[dim] = b)`.
    pub fn log_slice(&self, x: &[u8], dim: usize, out: &mut [f64]) {
        let rest: f64 = x
            .iter()
            .zip(&self.log_marginals)
            .enumerate()
            .filter(|&(j, _)| j != dim)
            .map(|(_, (&v, lm))| lm[v as usize])
            .sum();
        for (o, &lm) in out.iter_mut().zip(&self.log_marginals[dim]) {
            *o = self.mix(self.log_uniform, rest + lm);
        }
    }

    /// Exact draw: with probability `uniform_mix` every coordinate is uniform,
    /// otherwise every coordinate follows its marginal.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        let uniform = self.uniform_mix > 0.0 && rng.random::<f64>() < self.uniform_mix;
        for (o, m) in out.iter_mut().zip(&self.marginals) {
            *o = if uniform {
                rng.random_range(0..m.len()) as u8
            } else {
                sample_weights(m, 1.0, rng) as u8
            };
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        let mut out = vec![0; self.n_features()];
        self.sample_into(rng, &mut out);
        out
    }

    /// Probability of a region, in closed form.
    pub fn region_mass(&self, region: &Region) -> f64 {
        RegionMeasure::mass(self, region)
    }

    fn dim_fraction(&self, d: &DimSet, j: usize) -> (f64, f64) {
        let c = self.marginals[j].len() as f64;
        let m: f64 = match d {
            DimSet::Interval { lo, hi } => {
                self.marginals[j][*lo as usize..*hi as usize].iter().sum()
            }
            DimSet::Set(s) => s.iter().map(|b| self.marginals[j][b]).sum(),
        };
        (d.size() as f64 / c, m)
    }
}

impl RegionMeasure for InitialModel {
    fn mass(&self, region: &Region) -> f64 {
        let (mut a, mut b) = (1.0, 1.0);
        for (j, d) in region.dims().iter().enumerate() {
            let (fu, fm) = self.dim_fraction(d, j);
            a *= fu;
            b *= fm;
        }
        self.uniform_mix * a + (1.0 - self.uniform_mix) * b
    }

    fn dim_masses(&self, region: &Region, k: usize, out: &mut [f64]) {
        let (mut a, mut b) = (1.0, 1.0);
        for (j, d) in region.dims().iter().enumerate() {
            if j != k {
                let (fu, fm) = self.dim_fraction(d, j);
                a *= fu;
                b *= fm;
            }
        }
        let c = self.marginals[k].len() as f64;
        for bin in region.dim(k).bins() {
            out[bin] =
                self.uniform_mix * a / c + (1.0 - self.uniform_mix) * b * self.marginals[k][bin];
        }
    }
}
