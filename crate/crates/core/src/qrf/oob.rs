//! Out-of-bag interval coverage by lead hour.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::forest::{leaf_contributions, weighted_quantiles, Forest};
use super::QrfError;
use crate::error_model::ErrorTable;
use crate::scoring::lead_bin_start;

/// Rows evaluated and interval hits, one hit count per interval width.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageCell {
    pub n: usize,
    pub hits: Vec<usize>,
}

impl CoverageCell {
    /// Fraction covered per interval; `None` when no row was evaluated.
    pub fn coverage(&self) -> Option<Vec<f64>> {
        (self.n > 0).then(|| self.hits.iter().map(|&h| h as f64 / self.n as f64).collect())
    }

    fn absorb(&mut self, other: &CoverageCell) {
        if self.hits.len() < other.hits.len() {
            self.hits.resize(other.hits.len(), 0);
        }
        self.n += other.n;
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OobCoverage {
    /// Central interval widths, e.g. 0.95 for `[q0.025, q0.975]`.
    pub intervals: Vec<f64>,
    /// Every lead hour present in the table.
    pub by_lead: BTreeMap<u32, CoverageCell>,
    /// Rows that were in-bag for every tree and could not be evaluated.
    pub skipped_always_in_bag: usize,
}

impl OobCoverage {
    /// Pools lead hours into bins, keyed by bin start, as in
    /// [`lead_bin_start`].
    pub fn binned(&self, width: u32) -> BTreeMap<u32, CoverageCell> {
        let mut out: BTreeMap<u32, CoverageCell> = BTreeMap::new();
        for (&lead, cell) in &self.by_lead {
            out.entry(lead_bin_start(lead, width))
                .or_default()
                .absorb(cell);
        }
        out
    }

    pub fn overall(&self) -> CoverageCell {
        let mut total = CoverageCell::default();
        for cell in self.by_lead.values() {
            total.absorb(cell);
        }
        total
    }

    /// CSV with one row per lead hour; absent coverage is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lead_hours");
        for w in &self.intervals {
            out.push_str(&format!(",cov{}", (w * 100.0).round() as u32));
        }
        out.push_str(",n\n");
        for (lead, cell) in &self.by_lead {
            out.push_str(&lead.to_string());
            match cell.coverage() {
                Some(c) => c.iter().for_each(|v| out.push_str(&format!(",{v}"))),
                None => self.intervals.iter().for_each(|_| out.push(',')),
            }
            out.push_str(&format!(",{}\n", cell.n));
        }
        out
    }
}

/// For each training row, predicts the central intervals from only the trees
/// that did not sample it, and records whether its error falls inside.
pub fn oob_coverage(
    forest: &Forest,
    table: &ErrorTable,
    intervals: &[f64],
) -> Result<OobCoverage, QrfError> {
    if table.len() != forest.num_rows()
        || table
            .rows
            .iter()
            .zip(forest.responses())
            .any(|(r, &y)| r.error.to_bits() != y.to_bits())
    {
        return Err(QrfError::TableMismatch);
    }
    if let Some(w) = intervals.iter().find(|&&w| !(w > 0.0 && w < 1.0)) {
        return Err(QrfError::InvalidConfig(format!("interval width {w}")));
    }
    let mut levels: Vec<f64> = intervals
        .iter()
        .flat_map(|w| [(1.0 - w) / 2.0, (1.0 + w) / 2.0])
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let level_pos = |l: f64| levels.iter().position(|&x| x == l).expect("level present");
    let bounds: Vec<(usize, usize)> = intervals
        .iter()
        .map(|w| (level_pos((1.0 - w) / 2.0), level_pos((1.0 + w) / 2.0)))
        .collect();

    let n_trees = forest.trees.len();
    let mut inbag_trees: Vec<Vec<u32>> = vec![Vec::new(); forest.num_rows()];
    for (t, rows) in forest.inbag.iter().enumerate() {
        for &r in rows {
            let list = &mut inbag_trees[r as usize];
            if list.last() != Some(&(t as u32)) {
                list.push(t as u32);
            }
        }
    }

    // leaf reached by each distinct covariate pair, per tree
    let mut leaf_cache: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (&lead, &label) in forest.leads.iter().zip(&forest.labels) {
        leaf_cache.entry((lead, label)).or_insert_with(|| {
            forest
                .trees
                .iter()
                .map(|t| t.leaf_index(lead, label) as u32)
                .collect()
        });
    }

    let results: Vec<Option<Vec<bool>>> = (0..forest.num_rows())
        .into_par_iter()
        .map(|i| {
            let excluded = &inbag_trees[i];
            if excluded.len() == n_trees {
                return None;
            }
            let leaves_of = &leaf_cache[&(forest.leads[i], forest.labels[i])];
            let mut skip = excluded.iter().peekable();
            let mut leaves: Vec<&[u32]> = Vec::with_capacity(n_trees - excluded.len());
            for (t, tree) in forest.trees.iter().enumerate() {
                if skip.peek().is_some_and(|&&s| s as usize == t) {
                    skip.next();
                    continue;
                }
                leaves.push(tree.leaf_rows(leaves_of[t] as usize));
            }
            let dist = forest.distribution_from(leaf_contributions(&leaves));
            let q = weighted_quantiles(&dist, &levels);
            let y = forest.responses[i];
            Some(
                bounds
                    .iter()
                    .map(|&(lo, hi)| q[lo] <= y && y <= q[hi])
                    .collect(),
            )
        })
        .collect();

    let mut by_lead: BTreeMap<u32, CoverageCell> = BTreeMap::new();
    let mut skipped = 0;
    for (i, res) in results.into_iter().enumerate() {
        let cell = by_lead.entry(forest.leads[i]).or_insert_with(|| CoverageCell {
            n: 0,
            hits: vec![0; intervals.len()],
        });
        match res {
            Some(hits) => {
                cell.n += 1;
                for (h, hit) in cell.hits.iter_mut().zip(hits) {
                    *h += hit as usize;
                }
            }
            None => skipped += 1,
        }
    }
    Ok(OobCoverage {
        intervals: intervals.to_vec(),
        by_lead,
        skipped_always_in_bag: skipped,
    })
}
