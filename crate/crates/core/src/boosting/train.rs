use rand::Rng;

use crate::data::{BinMatrix, DiscretizedDataset};
use crate::error::{Error, Result};
use crate::inference::{exact_probabilities, validation_metric};
use crate::sampling::{fresh_chains, init_pool, refresh_pool, PoolReport, SamplePool};

use super::config::BoostConfig;
use super::fit::{fit_tree, ModelMasses};
use super::line_search::line_search;
use super::{EnergyModel, InitialModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundReport {
    /// 1-based round number (equals the stage count after the round).
    pub round: usize,
    /// Sum of the realized split gains.
    pub gain: f64,
    pub alpha: f64,
    /// Shrinkage times `alpha`.
    pub step: f64,
    /// Line-search objective at `alpha`.
    pub objective: f64,
    pub leaves: usize,
    /// Rejection acceptance rate of the pool update, if one took place.
    pub acceptance_rate: Option<f64>,
    pub refilled: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rounds: Vec<RoundReport>,
    /// Validation metric after round `i` at index `i` (index 0 is the
    /// initial model). Empty without validation.
    pub validation: Vec<f64>,
    /// Round whose model was returned.
    pub best_round: usize,
}

pub fn init_model(data: &DiscretizedDataset, uniform_mix: f64) -> Result<EnergyModel> {
    let initial = InitialModel::fit(data, uniform_mix)?;
    Ok(EnergyModel::new(data.schema.clone(), initial))
}

fn finish_round(
    model: &mut EnergyModel,
    data: &BinMatrix,
    masses: &ModelMasses<'_>,
    config: &BoostConfig,
    pool: Option<PoolReport>,
) -> Result<RoundReport> {
    let fit = fit_tree(model.domain(), data, masses, config)?;
    let (w, p, q) = fit.leaf_masses();
    let ls = line_search(&w, &p, &q, &config.line_search_grid);
    let step = config.shrinkage * ls.alpha;
    let leaves = fit.tree.num_leaves();
    let gain = fit.split_gains.iter().sum();
    model.push_stage(fit.tree, step);
    let report = RoundReport {
        round: model.stages.len(),
        gain,
        alpha: ls.alpha,
        step,
        objective: ls.objective,
        leaves,
        acceptance_rate: pool.map(|r| r.acceptance_rate),
        refilled: pool.map_or(0, |r| r.refilled),
    };
    Ok(report)
}

/// One boosting round. The first round uses exact initial-model masses, the
/// second builds the pool by rejection from `q0`, later rounds carry the pool
/// over and refill it by Gibbs sampling.
pub fn boost_round<R: Rng + ?Sized>(
    model: &mut EnergyModel,
    pool: &mut Option<SamplePool>,
    data: &BinMatrix,
    config: &BoostConfig,
    rng: &mut R,
) -> Result<RoundReport> {
    let capacity = config.resolved_pool_size(data.len());
    if model.stages.is_empty() {
        let initial = model.initial.clone();
        return finish_round(model, data, &ModelMasses::Initial(&initial), config, None);
    }
    let report = match pool.as_mut() {
        Some(p) => {
            let last = model.stages.last().expect("model has stages");
            let (tree, step) = (last.tree.clone(), last.step);
            refresh_pool(
                p,
                model,
                &tree,
                step,
                config.p_refresh,
                config.burn_in_refill,
                rng,
            )
        }
        None if model.stages.len() == 1 => {
            let (p, r) = init_pool(model, capacity, rng)?;
            *pool = Some(p);
            r
        }
        None => {
            let rows = fresh_chains(model, capacity, config.burn_in_refill, rng.random());
            *pool = Some(SamplePool { capacity, rows });
            PoolReport {
                acceptance_rate: 1.0,
                kept: 0,
                refilled: capacity,
            }
        }
    };
    let rows = pool.as_ref().expect("pool exists").rows.clone();
    finish_round(
        model,
        data,
        &ModelMasses::Samples(&rows),
        config,
        Some(report),
    )
}

/// One round with every model mass computed exactly by enumerating the
/// domain.
pub fn boost_round_exact(
    model: &mut EnergyModel,
    data: &BinMatrix,
    config: &BoostConfig,
) -> Result<RoundReport> {
    let points = model.domain().enumerate();
    let probs = exact_probabilities(model)?;
    finish_round(
        model,
        data,
        &ModelMasses::Weighted(&points, &probs),
        config,
        None,
    )
}

/// Run up to `num_rounds` rounds, with early stopping on `val` when patience
/// is positive.
pub fn train<R: Rng + ?Sized>(
    data: &DiscretizedDataset,
    val: Option<&DiscretizedDataset>,
    config: &BoostConfig,
    rng: &mut R,
) -> Result<(EnergyModel, History)> {
    match val {
        None => train_with_validator(data, config, rng, None),
        Some(v) => {
            let target = data.schema.target_index.ok_or_else(|| {
                Error::InvalidConfig("validation requires a target feature".into())
            })?;
            let metric = config.early_stopping.metric;
            let mut f = |m: &EnergyModel| validation_metric(m, v, target, metric);
            train_with_validator(data, config, rng, Some(&mut f))
        }
    }
}

/// Validation score of a model (higher is better).
pub type Validator<'a> = &'a mut dyn FnMut(&EnergyModel) -> Result<f64>;

/// [`train`] with an arbitrary validation score (higher is better).
pub fn train_with_validator<R: Rng + ?Sized>(
    data: &DiscretizedDataset,
    config: &BoostConfig,
    rng: &mut R,
    mut validator: Option<Validator<'_>>,
) -> Result<(EnergyModel, History)> {
    config.validate()?;
    let mut model = init_model(data, config.uniform_mix)?;
    let mut history = History::default();
    let mut pool = None;
    let patience = config.early_stopping.patience;
    let mut best = (0usize, f64::NEG_INFINITY);
    if let Some(v) = validator.as_mut() {
        let m = v(&model)?;
        history.validation.push(m);
        best = (0, m);
    }
    for _ in 0..config.num_rounds {
        let report = boost_round(&mut model, &mut pool, &data.values, config, rng)?;
        let round = report.round;
        history.rounds.push(report);
        let acceptance = report
            .acceptance_rate
            .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        let mut line = format!(
            "round {round} gain {:.6e} alpha {:.4} acceptance {acceptance} leaves {}",
            report.gain, report.alpha, report.leaves
        );
        let score = match validator.as_mut() {
            Some(v) => Some(v(&model)?),
            None => None,
        };
        if let Some(m) = score {
            line.push_str(&format!(" validation {m:.6}"));
        }
        log::info!("{line}");
        if let Some(m) = score {
            history.validation.push(m);
            if m > best.1 || (best.1.is_nan() && !m.is_nan()) {
                best = (round, m);
            } else if patience > 0 && round - best.0 >= patience {
                break;
            }
        }
    }
    history.best_round = model.stages.len();
    if validator.is_some() && patience > 0 {
        model.truncate(best.0);
        history.best_round = best.0;
    }
    Ok((model, history))
}
