use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    Nrgboost,
    GreedyKl,
    GreedyChi2,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nrgboost" => Ok(Self::Nrgboost),
            "greedy_kl" => Ok(Self::GreedyKl),
            "greedy_chi2" => Ok(Self::GreedyChi2),
            _ => Err(Error::InvalidConfig(format!("unknown update rule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchGrid {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
    /// Polish the best grid point by maximizing the (concave) objective
    /// between its neighbours.
    pub refine: bool,
}

impl Default for LineSearchGrid {
    fn default() -> Self {
        Self {
            count: 101,
            lo: 1e-3,
            hi: 10.0,
            refine: true,
        }
    }
}

impl LineSearchGrid {
    /// Log-spaced step sizes, ascending.
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.count)
            .map(|i| (a + (b - a) * i as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    /// R² of the conditional mean (numeric target).
    R2,
    /// AUC of the probability of the last category (binary target).
    Auc,
    /// Accuracy of the conditional mode.
    Accuracy,
    /// Average conditional log-likelihood of the target.
    LogLikelihood,
}

impl std::str::FromStr for ValidationMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r2" => Ok(Self::R2),
            "auc" => Ok(Self::Auc),
            "accuracy" => Ok(Self::Accuracy),
            "log_likelihood" => Ok(Self::LogLikelihood),
            _ => Err(Error::InvalidConfig(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopping {
    /// Rounds without improvement before stopping; 0 disables.
    pub patience: usize,
    pub metric: ValidationMetric,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: 0,
            metric: ValidationMetric::R2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub num_rounds: usize,
    pub max_leaves: usize,
    pub max_ratio: f64,
    pub shrinkage: f64,
    /// `None` picks `max(80_000, n_train)`.
    pub pool_size: Option<usize>,
    pub p_refresh: f64,
    pub min_data_in_leaf: usize,
    pub min_model_in_leaf: usize,
    pub uniform_mix: f64,
    pub update_rule: UpdateRule,
    pub line_search_grid: LineSearchGrid,
    pub early_stopping: EarlyStopping,
    /// Gibbs sweeps applied to each pool refill sample.
    pub burn_in_refill: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            num_rounds: 200,
            max_leaves: 256,
            max_ratio: 2.0,
            shrinkage: 0.15,
            pool_size: None,
            p_refresh: 0.1,
            min_data_in_leaf: 1,
            min_model_in_leaf: 1,
            uniform_mix: 0.1,
            update_rule: UpdateRule::Nrgboost,
            line_search_grid: LineSearchGrid::default(),
            early_stopping: EarlyStopping::default(),
            burn_in_refill: 5,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.max_leaves < 1 {
            return bad("max_leaves must be at least 1");
        }
        if !(self.max_ratio > 1.0) {
            return bad("max_ratio must exceed 1");
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return bad("shrinkage must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.p_refresh) {
            return bad("p_refresh must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.uniform_mix) {
            return bad("uniform_mix must lie in [0, 1]");
        }
        if self.pool_size == Some(0) {
            return bad("pool_size must be positive");
        }
        let g = &self.line_search_grid;
        if g.count < 1 || !(g.lo > 0.0) || !(g.hi >= g.lo) || !g.hi.is_finite() {
            return bad("line_search_grid needs count >= 1 and 0 < lo <= hi");
        }
        Ok(())
    }

    pub fn resolved_pool_size(&self, n_train: usize) -> usize {
        self.pool_size.unwrap_or(n_train.max(80_000))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_log_spaced() {
        let p = LineSearchGrid::default().points();
        assert_eq!(p.len(), 101);
        assert!((p[0] - 1e-3).abs() < 1e-15);
        assert!((p[100] - 10.0).abs() < 1e-12);
        assert!((p[50] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = BoostConfig {
            pool_size: Some(1234),
            ..BoostConfig::default()
        };
        cfg.early_stopping.patience = 7;
        let s = cfg.to_toml_string();
        assert_eq!(BoostConfig::from_toml_str(&s).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg =
            BoostConfig::from_toml_str("max_leaves = 16\nupdate_rule = \"greedy_kl\"\n").unwrap();
        assert_eq!(cfg.max_leaves, 16);
        assert_eq!(cfg.update_rule, UpdateRule::GreedyKl);
        assert_eq!(cfg.max_ratio, 2.0);
        assert!(BoostConfig::from_toml_str("bogus = 1").is_err());
        assert!(BoostConfig::from_toml_str("max_ratio = 1.0").is_err());
    }
}
