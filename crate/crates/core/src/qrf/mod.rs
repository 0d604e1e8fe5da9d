//! Quantile regression forest over two covariates, lead time and model label.
//!
//! Trees are grown on per-tree random subsamples with the variance splitting
//! rule. Leaves keep the indices of the training rows that reach them, and a
//! query's conditional distribution is the weighted empirical distribution
//! of training errors, each row weighted by its share of the query's leaf,
//! averaged over trees.

mod forest;
mod oob;
mod persist;
mod tree;

pub use forest::{weighted_quantiles, Forest};
pub use oob::{oob_coverage, CoverageCell, OobCoverage};
pub use tree::{Node, SplitRule, Tree};

use serde::{Deserialize, Serialize};

use crate::combine::CombineError;

/// Number of covariates: lead hours (index 0) and model label (index 1).
pub const NUM_COVARIATES: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum QrfError {
    #[error("training table is empty")]
    EmptyTable,
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("sample_count {sample_count} exceeds {rows} training rows (sampling without replacement)")]
    SampleTooLarge { sample_count: usize, rows: usize },
    #[error(transparent)]
    Levels(#[from] CombineError),
    #[error("table does not match the forest's training data")]
    TableMismatch,
    #[error("forest file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// Covariates drawn as split candidates at each node.
    pub mtry: usize,
    /// Smallest allowed child size; nodes with fewer than twice this many rows
    /// are not split.
    pub min_node_size: usize,
    /// Rows drawn for each tree.
    pub sample_count: usize,
    pub seed: u64,
    /// Draw with replacement (bootstrap) instead of subsampling.
    pub replace: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 250,
            mtry: 1,
            min_node_size: 1,
            sample_count: 128,
            seed: 1,
            replace: false,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, rows: usize) -> Result<(), QrfError> {
        let bad = |m: &str| Err(QrfError::InvalidConfig(m.to_string()));
        if self.num_trees == 0 {
            return bad("num_trees must be positive");
        }
        if self.mtry == 0 || self.mtry > NUM_COVARIATES {
            return bad("mtry must be 1 or 2");
        }
        if self.min_node_size == 0 {
            return bad("min_node_size must be positive");
        }
        if self.sample_count == 0 {
            return bad("sample_count must be positive");
        }
        if !self.replace && self.sample_count > rows {
            return Err(QrfError::SampleTooLarge {
                sample_count: self.sample_count,
                rows,
            });
        }
        Ok(())
    }
}

/// A query point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CovariateVector {
    pub lead_hours: u32,
    pub model_label: String,
}

impl CovariateVector {
    pub fn new(lead_hours: u32, model_label: impl Into<String>) -> Self {
        CovariateVector {
            lead_hours,
            model_label: model_label.into(),
        }
    }
}
