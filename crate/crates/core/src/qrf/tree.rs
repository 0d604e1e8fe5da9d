use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForestConfig;

/// Label index used for labels the forest never saw; it is in no left set.
pub(crate) const UNKNOWN_LABEL: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// `lead_hours <= threshold` goes left.
    Lead { threshold: f64 },
    /// Labels in the sorted `left` set go left; everything else goes right.
    Label { left: Vec<u32> },
}

impl SplitRule {
    fn goes_left(&self, lead: u32, label: u32) -> bool {
        match self {
            SplitRule::Lead { threshold } => (lead as f64) <= *threshold,
            SplitRule::Label { left } => left.binary_search(&label).is_ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// In-bag training rows reaching this leaf (repeated when drawn twice).
    Leaf { rows: Vec<u32> },
    Split { rule: SplitRule, left: u32, right: u32 },
}

/// A regression tree stored as a flat node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Column view of the encoded training table.
pub(crate) struct Columns<'a> {
    pub leads: &'a [u32],
    pub labels: &'a [u32],
    pub responses: &'a [f64],
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached by a query.
    pub fn leaf_index(&self, lead: u32, label: u32) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { rule, left, right } => {
                    i = if rule.goes_left(lead, label) {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn leaf_rows(&self, leaf: usize) -> &[u32] {
        match &self.nodes[leaf] {
            Node::Leaf { rows } => rows,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    pub(crate) fn validate(&self, n_rows: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree without nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { rows } => {
                    if rows.is_empty() {
                        return Err(format!("empty leaf {i}"));
                    }
                    if rows.iter().any(|&r| r as usize >= n_rows) {
                        return Err(format!("leaf {i} refers past the table"));
                    }
                }
                Node::Split { left, right, .. } => {
                    let n = self.nodes.len();
                    let ok = |c: u32| c as usize > i && (c as usize) < n;
                    if !ok(*left) || !ok(*right) {
                        return Err(format!("node {i} has bad children"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Grows a tree on the sampled rows.
    ///
    /// At each node `mtry` covariates are drawn; among their split points the
    /// one with the largest between-child sum of squares (equivalently the
    /// smallest size-weighted child variance) wins. When no drawn covariate
    /// can split the node the remaining covariates are tried before the node
    /// becomes a leaf. Pure nodes and nodes smaller than twice
    /// `min_node_size` are leaves.
    pub(crate) fn grow<R: Rng>(
        data: &Columns<'_>,
        sample: Vec<u32>,
        config: &ForestConfig,
        rng: &mut R,
    ) -> Tree {
        let mut nodes = vec![Node::Leaf { rows: Vec::new() }];
        let mut stack = vec![(0usize, sample)];
        while let Some((idx, rows)) = stack.pop() {
            match find_split(data, &rows, config, rng) {
                Some((rule, left_rows, right_rows)) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { rows: Vec::new() });
                    nodes.push(Node::Leaf { rows: Vec::new() });
                    nodes[idx] = Node::Split {
                        rule,
                        left: left as u32,
                        right: left as u32 + 1,
                    };
                    // right pushed first so the left subtree is grown first
                    stack.push((left + 1, right_rows));
                    stack.push((left, left_rows));
                }
                None => nodes[idx] = Node::Leaf { rows },
            }
        }
        Tree { nodes }
    }
}

struct Candidate {
    score: f64,
    rule: SplitRule,
}

fn find_split<R: Rng>(
    data: &Columns<'_>,
    rows: &[u32],
    config: &ForestConfig,
    rng: &mut R,
) -> Option<(SplitRule, Vec<u32>, Vec<u32>)> {
    let n = rows.len();
    if n < 2 * config.min_node_size {
        return None;
    }
    let first = data.responses[rows[0] as usize];
    if rows.iter().all(|&r| data.responses[r as usize] == first) {
        return None;
    }

    let (drawn, rest): (Vec<usize>, Vec<usize>) = if config.mtry >= 2 {
        (vec![0, 1], vec![])
    } else {
        let c = rng.random_range(0..2usize);
        (vec![c], vec![1 - c])
    };

    let mean = rows.iter().map(|&r| data.responses[r as usize]).sum::<f64>() / n as f64;
    let best = best_among(data, rows, &drawn, mean, config.min_node_size)
        .or_else(|| best_among(data, rows, &rest, mean, config.min_node_size))?;

    let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| {
        best.rule
            .goes_left(data.leads[r as usize], data.labels[r as usize])
    });
    debug_assert!(!left.is_empty() && !right.is_empty());
    Some((best.rule, left, right))
}

/// Best split over the given covariates; ties keep the lower covariate index.
fn best_among(
    data: &Columns<'_>,
    rows: &[u32],
    covariates: &[usize],
    mean: f64,
    min_node: usize,
) -> Option<Candidate> {
    let mut sorted = covariates.to_vec();
    sorted.sort_unstable();
    let mut best: Option<Candidate> = None;
    for c in sorted {
        let cand = match c {
            0 => best_lead_split(data, rows, mean, min_node),
            _ => best_label_split(data, rows, mean, min_node),
        };
        if let Some(cand) = cand {
            if best.as_ref().is_none_or(|b| cand.score > b.score) {
                best = Some(cand);
            }
        }
    }
    best
}

fn score(sum_left: f64, n_left: usize, sum_right: f64, n_right: usize) -> f64 {
    sum_left * sum_left / n_left as f64 + sum_right * sum_right / n_right as f64
}

/// Scans midpoints between consecutive distinct lead values. Responses are
/// centred on the node mean before summing.
fn best_lead_split(
    data: &Columns<'_>,
    rows: &[u32],
    mean: f64,
    min_node: usize,
) -> Option<Candidate> {
    let mut pairs: Vec<(u32, f64)> = rows
        .iter()
        .map(|&r| (data.leads[r as usize], data.responses[r as usize] - mean))
        .collect();
    pairs.sort_by_key(|p| p.0);
    let n = pairs.len();
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut sum_left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        sum_left += pairs[i].1;
        let n_left = i + 1;
        if pairs[i].0 == pairs[i + 1].0 || n_left < min_node || n - n_left < min_node {
            continue;
        }
        let s = score(sum_left, n_left, total - sum_left, n - n_left);
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, (pairs[i].0 as f64 + pairs[i + 1].0 as f64) / 2.0));
        }
    }
    best.map(|(score, threshold)| Candidate {
        score,
        rule: SplitRule::Lead { threshold },
    })
}

/// Orders the node's labels by mean response and scans the ordering like a
/// numeric covariate; the winning prefix becomes the left label set.
fn best_label_split(
    data: &Columns<'_>,
    rows: &[u32],
    mean: f64,
    min_node: usize,
) -> Option<Candidate> {
    let mut stats: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for &r in rows {
        let e = stats.entry(data.labels[r as usize]).or_insert((0.0, 0));
        e.0 += data.responses[r as usize] - mean;
        e.1 += 1;
    }
    if stats.len() < 2 {
        return None;
    }
    let mut cats: Vec<(u32, f64, usize)> = stats.into_iter().map(|(k, (s, c))| (k, s, c)).collect();
    cats.sort_by(|a, b| {
        (a.1 / a.2 as f64)
            .total_cmp(&(b.1 / b.2 as f64))
            .then(a.0.cmp(&b.0))
    });
    let n = rows.len();
    let total: f64 = cats.iter().map(|c| c.1).sum();
    let mut sum_left = 0.0;
    let mut n_left = 0;
    let mut best: Option<(f64, usize)> = None;
    for (k, cat) in cats.iter().enumerate().take(cats.len() - 1) {
        sum_left += cat.1;
        n_left += cat.2;
        if n_left < min_node || n - n_left < min_node {
            continue;
        }
        let s = score(sum_left, n_left, total - sum_left, n - n_left);
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, k));
        }
    }
    best.map(|(score, k)| {
        let mut left: Vec<u32> = cats[..=k].iter().map(|c| c.0).collect();
        left.sort_unstable();
        Candidate {
            score,
            rule: SplitRule::Label { left },
        }
    })
}
