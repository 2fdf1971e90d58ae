//! Gibbs sampling from energy models and the amortized sample pool.
//!
//! Every chain or pool slot owns a ChaCha stream derived from a root seed
//! drawn from the caller's generator, so results do not depend on how work
//! is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boosting::{EnergyModel, InitialModel};
use crate::data::BinMatrix;
use crate::error::{Error, Result};
use crate::grow::RegionMeasure;
use crate::numeric::sample_log_weights;
use crate::tree::EnergyTree;

/// Below this expected acceptance rate pool initialization gives up.
pub const MIN_EXPECTED_ACCEPTANCE: f64 = 1e-6;

pub(crate) fn chain_rng(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// Fixed-size set of approximate model samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    pub capacity: usize,
    pub rows: BinMatrix,
}

impl SamplePool {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanOrder {
    Ascending,
    /// Random permutation per sweep.
    Random,
}

/// Resample every coordinate once from its exact conditional, in ascending
/// feature order.
pub fn gibbs_sweep<R: Rng + ?Sized>(model: &EnergyModel, x: &mut [u8], rng: &mut R) {
    let mut buf = [0.0f64; 256];
    for dim in 0..x.len() {
        resample_dim(model, x, dim, &mut buf, rng);
    }
}

pub fn gibbs_sweep_with_order<R: Rng + ?Sized>(
    model: &EnergyModel,
    x: &mut [u8],
    order: ScanOrder,
    rng: &mut R,
) {
    match order {
        ScanOrder::Ascending => gibbs_sweep(model, x, rng),
        ScanOrder::Random => {
            let mut dims: Vec<usize> = (0..x.len()).collect();
            rand::seq::SliceRandom::shuffle(dims.as_mut_slice(), rng);
            let mut buf = [0.0f64; 256];
            for dim in dims {
                resample_dim(model, x, dim, &mut buf, rng);
            }
        }
    }
}

#[inline]
fn resample_dim<R: Rng + ?Sized>(
    model: &EnergyModel,
    x: &mut [u8],
    dim: usize,
    buf: &mut [f64; 256],
    rng: &mut R,
) {
    let e = &mut buf[..model.domain().cardinality(dim)];
    model.energy_slice(x, dim, e);
    x[dim] = sample_log_weights(e, rng) as u8;
}

pub fn exact_sample_initial<R: Rng + ?Sized>(initial: &InitialModel, rng: &mut R) -> Vec<u8> {
    initial.sample(rng)
}

/// `exp(step · (tree(x) − max leaf))`.
pub fn acceptance_probability(tree: &EnergyTree, step: f64, x: &[u8]) -> f64 {
    accept_with_max(tree, step, tree.max_leaf_value(), x)
}

#[inline]
fn accept_with_max(tree: &EnergyTree, step: f64, max_leaf: f64, x: &[u8]) -> f64 {
    if step == 0.0 {
        return 1.0;
    }
    (step * (tree.evaluate(x) - max_leaf)).exp()
}

/// Exact acceptance rate of rejection sampling from `q0` against one stage.
pub fn expected_acceptance(
    initial: &InitialModel,
    tree: &EnergyTree,
    step: f64,
    domain: &crate::data::Domain,
) -> f64 {
    let max_leaf = tree.max_leaf_value();
    tree.leaf_regions(domain)
        .iter()
        .map(|(r, &w)| initial.mass(r) * (step * (w - max_leaf)).exp())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolReport {
    /// Accepted over tested rows in the rejection step.
    pub acceptance_rate: f64,
    /// Rows carried over from the previous pool.
    pub kept: usize,
    /// Rows generated to restore the capacity.
    pub refilled: usize,
}

/// Exact samples of a one-stage model by rejection from `q0`.
pub fn init_pool<R: Rng + ?Sized>(
    model: &EnergyModel,
    capacity: usize,
    rng: &mut R,
) -> Result<(SamplePool, PoolReport)> {
    if model.stages.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "pool initialization needs a one-stage model, got {} stages",
            model.stages.len()
        )));
    }
    let stage = &model.stages[0];
    let expected = expected_acceptance(&model.initial, &stage.tree, stage.step, model.domain());
    if expected < MIN_EXPECTED_ACCEPTANCE {
        return Err(Error::AcceptanceStall { expected });
    }
    let root: u64 = rng.random();
    let d = model.n_features();
    let max_leaf = stage.tree.max_leaf_value();
    let results: Vec<(Vec<u8>, u64)> = (0..capacity)
        .into_par_iter()
        .map(|i| {
            let mut r = chain_rng(root, i as u64);
            let mut x = vec![0u8; d];
            let mut tries = 0u64;
            loop {
                tries += 1;
                model.initial.sample_into(&mut r, &mut x);
                let a = accept_with_max(&stage.tree, stage.step, max_leaf, &x);
                if a >= 1.0 || r.random::<f64>() < a {
                    return (x, tries);
                }
            }
        })
        .collect();
    let mut rows = BinMatrix::with_capacity(d, capacity);
    let mut tries = 0u64;
    for (x, t) in &results {
        rows.push_row(x);
        tries += t;
    }
    Ok((
        SamplePool { capacity, rows },
        PoolReport {
            acceptance_rate: if tries == 0 {
                1.0
            } else {
                capacity as f64 / tries as f64
            },
            kept: 0,
            refilled: capacity,
        },
    ))
}

/// `n` rows from fresh `q0` starts, each followed by `sweeps` Gibbs sweeps.
pub fn fresh_chains(model: &EnergyModel, n: usize, sweeps: usize, root: u64) -> BinMatrix {
    let d = model.n_features();
    let rows: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = chain_rng(root, i as u64);
            let mut x = model.initial.sample(&mut r);
            for _ in 0..sweeps {
                gibbs_sweep(model, &mut x, &mut r);
            }
            x
        })
        .collect();
    let mut m = BinMatrix::with_capacity(d, n);
    for x in &rows {
        m.push_row(x);
    }
    m
}

/// Carry the pool over to the model after its newest stage.
///
/// Each row is first dropped with probability `p_refresh`, then kept with
/// the acceptance probability of `last_tree` at `last_step`. The pool is
/// refilled to capacity from fresh `q0` starts followed by `burn_in` sweeps
/// of the full `model`.
#[allow(clippy::too_many_arguments)]
pub fn refresh_pool<R: Rng + ?Sized>(
    pool: &mut SamplePool,
    model: &EnergyModel,
    last_tree: &EnergyTree,
    last_step: f64,
    p_refresh: f64,
    burn_in: usize,
    rng: &mut R,
) -> PoolReport {
    let root: u64 = rng.random();
    let refill_root: u64 = rng.random();
    let max_leaf = last_tree.max_leaf_value();
    let decisions: Vec<(bool, bool)> = (0..pool.rows.len())
        .into_par_iter()
        .map(|i| {
            let mut r = chain_rng(root, i as u64);
            if r.random::<f64>() < p_refresh {
                return (false, false);
            }
            let a = accept_with_max(last_tree, last_step, max_leaf, pool.rows.row(i));
            (true, a >= 1.0 || r.random::<f64>() < a)
        })
        .collect();
    let tested = decisions.iter().filter(|d| d.0).count();
    let keep: Vec<bool> = decisions.iter().map(|d| d.1).collect();
    let kept = keep.iter().filter(|&&k| k).count();
    pool.rows.retain_rows(&keep);
    pool.rows.truncate(pool.capacity);
    let kept = kept.min(pool.capacity);
    let missing = pool.capacity - pool.rows.len();
    let fresh = fresh_chains(model, missing, burn_in, refill_root);
    pool.rows.extend(&fresh);
    PoolReport {
        acceptance_rate: if tested == 0 {
            1.0
        } else {
            kept as f64 / tested as f64
        },
        kept,
        refilled: missing,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// One fresh chain per sample.
    Independent,
    /// `n_parallel` long chains emitting every `thin`-th state round-robin.
    Thinned { thin: usize },
}

/// Output of [`sample_detailed`].
#[derive(Debug, Clone)]
pub struct Sampled {
    pub rows: BinMatrix,
    /// Gibbs sweeps run by each chain.
    pub sweeps_per_chain: Vec<usize>,
}

pub fn sample<R: Rng + ?Sized>(
    model: &EnergyModel,
    n: usize,
    burn_in: usize,
    mode: SampleMode,
    n_parallel: usize,
    rng: &mut R,
) -> Result<BinMatrix> {
    Ok(sample_detailed(model, n, burn_in, mode, n_parallel, rng)?.rows)
}

pub fn sample_detailed<R: Rng + ?Sized>(
    model: &EnergyModel,
    n: usize,
    burn_in: usize,
    mode: SampleMode,
    n_parallel: usize,
    rng: &mut R,
) -> Result<Sampled> {
    if burn_in < 1 {
        return Err(Error::InvalidArgument("burn-in must be at least 1".into()));
    }
    let root: u64 = rng.random();
    let d = model.n_features();
    match mode {
        SampleMode::Independent => Ok(Sampled {
            rows: fresh_chains(model, n, burn_in, root),
            sweeps_per_chain: vec![burn_in; n],
        }),
        SampleMode::Thinned { thin } => {
            if thin < 1 || n_parallel < 1 {
                return Err(Error::InvalidArgument(
                    "thinning and chain count must be at least 1".into(),
                ));
            }
            let per_chain = n.div_ceil(n_parallel);
            let chains: Vec<(Vec<Vec<u8>>, usize)> = (0..n_parallel)
                .into_par_iter()
                .map(|c| {
                    let mut r = chain_rng(root, c as u64);
                    let mut x = model.initial.sample(&mut r);
                    let mut sweeps = 0;
                    for _ in 0..burn_in {
                        gibbs_sweep(model, &mut x, &mut r);
                        sweeps += 1;
                    }
                    let mut out = Vec::with_capacity(per_chain);
                    for _ in 0..per_chain {
                        for _ in 0..thin {
                            gibbs_sweep(model, &mut x, &mut r);
                            sweeps += 1;
                        }
                        out.push(x.clone());
                    }
                    (out, sweeps)
                })
                .collect();
            let mut rows = BinMatrix::with_capacity(d, n);
            'outer: for k in 0..per_chain {
                for (chain, _) in &chains {
                    if rows.len() == n {
                        break 'outer;
                    }
                    rows.push_row(&chain[k]);
                }
            }
            Ok(Sampled {
                rows,
                sweeps_per_chain: chains.iter().map(|c| c.1).collect(),
            })
        }
    }
}
