use crate::data::{Domain, Schema};
use crate::tree::EnergyTree;

use super::InitialModel;

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub tree: EnergyTree,
    /// Shrinkage times the line-search step.
    pub step: f64,
}

/// `f(x) = log q0(x) + Σ step_t · tree_t(x)`, defined up to a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub schema: Schema,
    pub initial: InitialModel,
    pub stages: Vec<Stage>,
    domain: Domain,
}

impl EnergyModel {
    pub fn new(schema: Schema, initial: InitialModel) -> Self {
        let domain = schema.domain();
        assert_eq!(domain.n_features(), initial.n_features());
        Self {
            schema,
            initial,
            stages: Vec::new(),
            domain,
        }
    }

    pub fn with_stages(schema: Schema, initial: InitialModel, stages: Vec<Stage>) -> Self {
        let mut m = Self::new(schema, initial);
        m.stages = stages;
        m
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n_features(&self) -> usize {
        self.domain.n_features()
    }

    pub fn push_stage(&mut self, tree: EnergyTree, step: f64) {
        self.stages.push(Stage { tree, step });
    }

    pub fn truncate(&mut self, n_stages: usize) {
        self.stages.truncate(n_stages);
    }

    /// Unnormalized log-density.
    pub fn energy(&self, x: &[u8]) -> f64 {
        let mut f = self.initial.log_density(x);
        for s in &self.stages {
            if s.step != 0.0 {
                f += s.step * s.tree.evaluate(x);
            }
        }
        f
    }

    /// `out[b] = f(x with x[dim] = b)`. Returns the number of tree nodes
    /// visited.
    pub fn energy_slice(&self, x: &[u8], dim: usize, out: &mut [f64]) -> usize {
        self.initial.log_slice(x, dim, out);
        let mut visits = 0;
        for s in &self.stages {
            if s.step != 0.0 {
                visits += s.tree.add_slice(x, dim, s.step, out);
            }
        }
        visits
    }
}
