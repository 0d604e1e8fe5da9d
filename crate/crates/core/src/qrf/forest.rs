use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Columns, Tree, UNKNOWN_LABEL};
use super::{CovariateVector, ForestConfig, QrfError};
use crate::combine::{check_levels, QuantileVector};
use crate::error_model::ErrorTable;

/// Slack on cumulative weight comparisons, absorbing summation rounding.
const WEIGHT_EPS: f64 = 1e-12;

/// A trained forest together with the training table it indexes into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub(crate) config: ForestConfig,
    /// Sorted distinct labels; a row's label is an index into this list.
    pub(crate) label_names: Vec<String>,
    pub(crate) leads: Vec<u32>,
    pub(crate) labels: Vec<u32>,
    pub(crate) responses: Vec<f64>,
    pub(crate) trees: Vec<Tree>,
    /// Sorted in-bag row indices per tree, with repeats under replacement.
    pub(crate) inbag: Vec<Vec<u32>>,
}

impl Forest {
    /// Grows `config.num_trees` trees, each on its own sample drawn from a
    /// generator seeded with `config.seed + tree index`. Trees are grown in
    /// parallel on the current rayon pool; the result does not depend on the
    /// pool size.
    pub fn train(table: &ErrorTable, config: &ForestConfig) -> Result<Forest, QrfError> {
        if table.is_empty() {
            return Err(QrfError::EmptyTable);
        }
        let n = table.len();
        config.validate(n)?;

        let label_names = table.label_set.clone();
        let labels: Vec<u32> = table
            .rows
            .iter()
            .map(|r| {
                label_names
                    .binary_search(&r.model_label)
                    .map(|i| i as u32)
                    .map_err(|_| QrfError::TableMismatch)
            })
            .collect::<Result<_, _>>()?;
        let leads: Vec<u32> = table.rows.iter().map(|r| r.lead_hours).collect();
        let responses: Vec<f64> = table.rows.iter().map(|r| r.error).collect();

        let columns = Columns {
            leads: &leads,
            labels: &labels,
            responses: &responses,
        };
        let grown: Vec<(Tree, Vec<u32>)> = (0..config.num_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(t as u64));
                let mut sample: Vec<u32> = if config.replace {
                    (0..config.sample_count)
                        .map(|_| rng.random_range(0..n) as u32)
                        .collect()
                } else {
                    index::sample(&mut rng, n, config.sample_count)
                        .into_iter()
                        .map(|i| i as u32)
                        .collect()
                };
                sample.sort_unstable();
                let tree = Tree::grow(&columns, sample.clone(), config, &mut rng);
                (tree, sample)
            })
            .collect();
        let (trees, inbag) = grown.into_iter().unzip();

        Ok(Forest {
            config: *config,
            label_names,
            leads,
            labels,
            responses,
            trees,
            inbag,
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn num_rows(&self) -> usize {
        self.responses.len()
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Sorted in-bag rows of tree `t`.
    pub fn inbag(&self, t: usize) -> &[u32] {
        &self.inbag[t]
    }

    pub fn knows_label(&self, label: &str) -> bool {
        self.label_index(label).is_some()
    }

    pub(crate) fn label_index(&self, label: &str) -> Option<u32> {
        self.label_names
            .binary_search_by(|l| l.as_str().cmp(label))
            .ok()
            .map(|i| i as u32)
    }

    pub(crate) fn encode(&self, x: &CovariateVector) -> (u32, u32) {
        (
            x.lead_hours,
            self.label_index(&x.model_label).unwrap_or(UNKNOWN_LABEL),
        )
    }

    /// Per-row weights for a query: the average over trees of
    /// `1 / leaf size` for every in-bag occurrence of the row in the query's
    /// leaf. Non-negative, summing to one.
    pub fn predict_weights(&self, x: &CovariateVector) -> Vec<f64> {
        let mut w = vec![0.0; self.num_rows()];
        for (row, weight) in self.contributions(x, 0..self.trees.len()) {
            w[row as usize] += weight;
        }
        w
    }

    /// Weighted empirical quantiles of the training errors under
    /// [`Forest::predict_weights`]: the `q` quantile is the smallest error
    /// whose cumulative weight reaches `q`.
    pub fn predict_quantiles(
        &self,
        x: &CovariateVector,
        levels: &[f64],
    ) -> Result<QuantileVector, QrfError> {
        check_levels(levels)?;
        let dist = self.distribution_from(self.contributions(x, 0..self.trees.len()));
        let values = weighted_quantiles(&dist, levels);
        Ok(QuantileVector::new(levels.to_vec(), values)?)
    }

    /// `(row, weight)` pairs contributed by the chosen trees, normalised over
    /// those trees.
    fn contributions(
        &self,
        x: &CovariateVector,
        trees: impl Iterator<Item = usize> + Clone,
    ) -> Vec<(u32, f64)> {
        let (lead, label) = self.encode(x);
        let leaves: Vec<&[u32]> = trees
            .map(|t| {
                let tree = &self.trees[t];
                tree.leaf_rows(tree.leaf_index(lead, label))
            })
            .collect();
        leaf_contributions(&leaves)
    }

    pub(crate) fn distribution_from(&self, contributions: Vec<(u32, f64)>) -> Vec<(f64, f64)> {
        let mut dist: Vec<(f64, u32, f64)> = contributions
            .into_iter()
            .map(|(r, w)| (self.responses[r as usize], r, w))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.into_iter().map(|(v, _, w)| (v, w)).collect()
    }
}

/// Equal weight per leaf, split evenly over the leaf's rows.
pub(crate) fn leaf_contributions(leaves: &[&[u32]]) -> Vec<(u32, f64)> {
    let n_trees = leaves.len() as f64;
    let mut out = Vec::with_capacity(leaves.iter().map(|l| l.len()).sum());
    for rows in leaves {
        let w = 1.0 / (rows.len() as f64 * n_trees);
        out.extend(rows.iter().map(|&r| (r, w)));
    }
    out
}

/// Left-continuous inverse of a weighted empirical distribution.
///
/// `dist` holds `(value, weight)` pairs sorted by value; `levels` must be
/// increasing. Returns one value per level.
pub fn weighted_quantiles(dist: &[(f64, f64)], levels: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(levels.len());
    if dist.is_empty() {
        return out;
    }
    let mut cum = 0.0;
    let mut i = 0;
    cum += dist[0].1;
    for &q in levels {
        while cum + WEIGHT_EPS < q && i + 1 < dist.len() {
            i += 1;
            cum += dist[i].1;
        }
        out.push(dist[i].0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_model::ErrorSample;

    fn table(rows: &[(u32, &str, f64)]) -> ErrorTable {
        ErrorTable::from_rows(
            rows.iter()
                .map(|&(lead_hours, label, error)| ErrorSample {
                    lead_hours,
                    model_label: label.into(),
                    error,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn weighted_quantile_definition() {
        let third = 1.0 / 3.0;
        let d = vec![(1.0, third), (2.0, third), (3.0, third)];
        assert_eq!(weighted_quantiles(&d, &[0.5]), vec![2.0]);
        assert_eq!(
            weighted_quantiles(&d, &[0.1, third, 0.34, 0.99]),
            vec![1.0, 1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn single_tree_weights_split_leaf_evenly() {
        let t = table(&[(10, "a", 1.0), (10, "a", 2.0), (50, "a", 9.0)]);
        let cfg = ForestConfig {
            num_trees: 1,
            sample_count: 3,
            ..ForestConfig::default()
        };
        let f = Forest::train(&t, &cfg).unwrap();
        let w = f.predict_weights(&CovariateVector::new(10, "a"));
        assert_eq!(w, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn constant_table_returns_the_constant() {
        let rows: Vec<_> = (0..50).map(|i| (i % 7, "m", 2.5)).collect();
        let f = Forest::train(
            &table(&rows),
            &ForestConfig {
                num_trees: 20,
                sample_count: 16,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        for tree in f.trees() {
            assert_eq!(tree.nodes().len(), 1);
        }
        let q = f
            .predict_quantiles(&CovariateVector::new(3, "m"), &[0.01, 0.5, 0.99])
            .unwrap();
        assert_eq!(q.values(), &[2.5, 2.5, 2.5]);
    }

    #[test]
    fn rejects_bad_input() {
        let t = table(&[(1, "a", 1.0), (2, "a", 2.0)]);
        assert!(matches!(
            Forest::train(&t, &ForestConfig::default()),
            Err(QrfError::SampleTooLarge { .. })
        ));
        let cfg = ForestConfig {
            sample_count: 2,
            mtry: 3,
            ..ForestConfig::default()
        };
        assert!(matches!(
            Forest::train(&t, &cfg),
            Err(QrfError::InvalidConfig(_))
        ));
        let cfg = ForestConfig {
            sample_count: 8,
            replace: true,
            num_trees: 3,
            ..ForestConfig::default()
        };
        let f = Forest::train(&t, &cfg).unwrap();
        assert!(f.predict_quantiles(&CovariateVector::new(1, "a"), &[]).is_err());
        assert_eq!(f.inbag(0).len(), 8);
    }
}
