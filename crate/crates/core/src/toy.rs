//! Two-dimensional toy data: eight unit-variance Gaussians evenly spaced on a
//! circle of radius 8, discretized on a 100 × 100 grid over `[-11, 11]²`.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{BinMatrix, DiscretizedDataset, FeatureSpec, Schema};

pub const N_MODES: usize = 8;
pub const RADIUS: f64 = 8.0;
pub const N_BINS: usize = 100;
pub const LOWER: f64 = -11.0;
pub const UPPER: f64 = 11.0;

pub fn mode_centers() -> [(f64, f64); N_MODES] {
    std::array::from_fn(|k| {
        let a = 2.0 * std::f64::consts::PI * k as f64 / N_MODES as f64;
        (RADIUS * a.cos(), RADIUS * a.sin())
    })
}

/// Interior bin edges of either axis.
pub fn bin_edges() -> Vec<f64> {
    let w = (UPPER - LOWER) / N_BINS as f64;
    (1..N_BINS).map(|k| LOWER + w * k as f64).collect()
}

pub fn toy_schema() -> Schema {
    let axis = |name: &str| FeatureSpec::ordered(name, bin_edges(), LOWER, UPPER);
    Schema::new(vec![axis("x"), axis("y")]).expect("toy schema is valid")
}

/// Raw samples with the index of the mode each was drawn from.
pub fn toy_samples<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<([f64; 2], usize)> {
    let centers = mode_centers();
    (0..n)
        .map(|_| {
            let k = rng.random_range(0..N_MODES);
            let (cx, cy) = centers[k];
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            ([cx + dx, cy + dy], k)
        })
        .collect()
}

/// Discretize raw points; values outside `[-11, 11]` land in the edge bins.
pub fn discretize_points(points: &[[f64; 2]]) -> DiscretizedDataset {
    let schema = toy_schema();
    let mut m = BinMatrix::with_capacity(2, points.len());
    for p in points {
        m.push_row(&[
            schema.features[0].encode_value(p[0]),
            schema.features[1].encode_value(p[1]),
        ]);
    }
    DiscretizedDataset::new(schema, m).expect("bins are in range")
}

pub fn toy_dataset<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DiscretizedDataset {
    let pts: Vec<[f64; 2]> = toy_samples(n, rng).into_iter().map(|(p, _)| p).collect();
    discretize_points(&pts)
}

/// Probability of each bin of one axis under `N(mu, 1)`, with the tails
/// folded into the outer bins.
fn axis_masses(mu: f64) -> Vec<f64> {
    let normal = Normal::new(mu, 1.0).expect("unit normal");
    let edges = bin_edges();
    let mut cdf: Vec<f64> = vec![0.0];
    cdf.extend(edges.iter().map(|&e| normal.cdf(e)));
    cdf.push(1.0);
    cdf.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Exact probability of every grid cell, row-major with `x` slowest
/// (matching domain enumeration order).
pub fn exact_density_grid() -> Vec<f64> {
    let mut grid = vec![0.0; N_BINS * N_BINS];
    for (cx, cy) in mode_centers() {
        let mx = axis_masses(cx);
        let my = axis_masses(cy);
        for i in 0..N_BINS {
            for j in 0..N_BINS {
                grid[i * N_BINS + j] += mx[i] * my[j] / N_MODES as f64;
            }
        }
    }
    grid
}
