//! CART classification tree grown by greedy Gini-impurity splits.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature; samples with `x <= threshold` go left. Among equally good
//! splits the lowest feature index, then the lowest threshold, wins, so the
//! grown tree depends on the data values and not on row order.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sorted::{midpoint, SortedColumns};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::InvalidConfig("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class counts of the training samples that reached the leaf.
    Leaf { counts: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_classes: usize,
    pub nodes: Vec<TreeNode>,
}

/// Gini impurity `1 - sum p_c^2` of a count vector.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
    1.0 - sq as f64 / (n * n) as f64
}

/// How many features to consider per split, and the RNG that picks them.
pub(crate) struct FeatureSampling<'r, R: Rng> {
    pub per_split: usize,
    pub rng: &'r mut R,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    /// `sum cL^2 / nL + sum cR^2 / nR`; larger means purer children.
    score: f64,
}

impl DecisionTree {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, config: &TreeConfig) -> Result<Self> {
        let rows: Vec<usize> = (0..x.n_rows()).collect();
        Self::fit_rows::<rand_chacha::ChaCha8Rng>(x, y, &rows, n_classes, config, None)
    }

    /// Grows a tree on the samples `rows` (repeats allowed, as in a bootstrap).
    pub(crate) fn fit_rows<R: Rng>(
        x: &Matrix,
        y: &[usize],
        rows: &[usize],
        n_classes: usize,
        config: &TreeConfig,
        mut sampling: Option<FeatureSampling<'_, R>>,
    ) -> Result<Self> {
        config.validate()?;
        if rows.is_empty() {
            return Err(Error::Empty("tree training set"));
        }
        let d = x.n_cols();
        let labels: Vec<usize> = rows.iter().map(|&r| y[r]).collect();
        let mut sorted = SortedColumns::new(x, rows);
        let mut goes_left = vec![false; rows.len()];
        let mut nodes = vec![TreeNode::Leaf { counts: vec![] }];
        // (node id, start, end, depth)
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];

        while let Some((id, start, end, depth)) = stack.pop() {
            let mut counts = vec![0u32; n_classes];
            for &p in sorted.positions(start, end) {
                counts[labels[p as usize]] += 1;
            }
            let n = end - start;
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_ok = config.max_depth.is_none_or(|m| depth < m);
            let split = if pure || !depth_ok || n < config.min_samples_split || d == 0 {
                None
            } else {
                let order: Vec<usize> = match sampling.as_mut() {
                    Some(s) if s.per_split < d => {
                        let mut chosen = sample(s.rng, d, s.per_split).into_vec();
                        chosen.sort_unstable();
                        chosen
                    }
                    _ => (0..d).collect(),
                };
                let found = best_split(x, rows, &labels, &sorted, start, end, &order, &counts, config);
                if found.is_none() && order.len() < d {
                    // None of the drawn features can split; try the rest.
                    let rest: Vec<usize> = (0..d).filter(|f| !order.contains(f)).collect();
                    best_split(x, rows, &labels, &sorted, start, end, &rest, &counts, config)
                } else {
                    found
                }
            };

            match split {
                None => nodes[id] = TreeNode::Leaf { counts },
                Some(c) => {
                    for &p in sorted.column(c.feature, start, end) {
                        goes_left[p as usize] = x.get(rows[p as usize], c.feature) <= c.threshold;
                    }
                    let mid = sorted.partition(start, end, &goes_left);
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { counts: vec![] });
                    nodes.push(TreeNode::Leaf { counts: vec![] });
                    nodes[id] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, mid, end, depth + 1));
                    stack.push((left, start, mid, depth + 1));
                }
            }
        }
        Ok(Self { n_classes, nodes })
    }

    pub fn leaf_counts(&self, row: &[f64]) -> &[u32] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    /// Class frequencies of the leaf reached by `row`, written into `out`.
    pub fn leaf_distribution(&self, row: &[f64], out: &mut [f64]) {
        let counts = self.leaf_counts(row);
        let total: u32 = counts.iter().sum();
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = f64::from(c) / f64::from(total.max(1));
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize) -> usize {
            match &nodes[id] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[allow(clippy::too_many_arguments)]
fn best_split(
    x: &Matrix,
    rows: &[usize],
    labels: &[usize],
    sorted: &SortedColumns,
    start: usize,
    end: usize,
    features: &[usize],
    counts: &[u32],
    config: &TreeConfig,
) -> Option<Candidate> {
    let n = end - start;
    let min_leaf = config.min_samples_leaf;
    let total_sq: f64 = counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum();
    let mut best: Option<Candidate> = None;
    let mut left = vec![0u32; counts.len()];

    for &f in features {
        left.iter_mut().for_each(|c| *c = 0);
        let mut right_sq = total_sq;
        let mut left_sq = 0.0;
        let col = sorted.column(f, start, end);
        for k in 0..n - 1 {
            let p = col[k] as usize;
            let c = labels[p];
            let lc = f64::from(left[c]);
            let rc = f64::from(counts[c] - left[c]);
            left_sq += 2.0 * lc + 1.0;
            right_sq -= 2.0 * rc - 1.0;
            left[c] += 1;

            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let v = x.get(rows[p], f);
            let next = x.get(rows[col[k + 1] as usize], f);
            if next <= v {
                continue;
            }
            let score = left_sq / n_left as f64 + right_sq / n_right as f64;
            if best.is_none_or(|b| score > b.score) {
                best = Some(Candidate {
                    feature: f,
                    threshold: midpoint(v, next),
                    score,
                });
            }
        }
    }
    best
}
