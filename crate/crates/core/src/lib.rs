//! Energy-based generative boosting and density estimation forests for
//! discretized tabular data.
//!
//! Numeric columns are quantile-binned and categorical columns label-encoded
//! into bin rows (see [`data`]). An [`boosting::EnergyModel`] is fitted by
//! boosting piecewise-constant trees on the log-density, sampled with Gibbs
//! sweeps ([`sampling`]) and queried for conditionals ([`inference`]).
//! [`def`] provides a normalized baseline built from bagged density trees.

pub mod boosting;
pub mod data;
pub mod def;
pub mod error;
mod grow;
pub mod inference;
pub mod metrics;
pub mod model_file;
pub mod numeric;
pub mod sampling;
pub mod toy;
pub mod tree;

pub use error::{Error, Result};
