//! Boosted energy models: initial distribution, tree fitting, line search and
//! the training loop.

mod config;
mod fit;
mod initial;
mod line_search;
mod model;
mod train;

pub use config::{BoostConfig, EarlyStopping, LineSearchGrid, UpdateRule, ValidationMetric};
pub use fit::{
    fit_tree, leaf_value, split_gain, FittedTree, LeafStats, ModelMasses, GREEDY_MIN_RATIO,
};
pub use initial::InitialModel;
pub use line_search::{line_search, line_search_objective, LineSearchResult};
pub use model::{EnergyModel, Stage};
pub use train::{
    boost_round, boost_round_exact, init_model, train, train_with_validator, History, RoundReport,
    Validator,
};
