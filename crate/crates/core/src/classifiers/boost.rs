//! Gradient-boosted regression trees on softmax logits.
//!
//! Every round fits one tree per class to the gradient `p - y` and hessian
//! `max(2p(1-p), 1e-16)` of the multiclass cross-entropy. Leaf weights are the
//! regularized Newton step `-G / (H + lambda)` scaled by the learning rate,
//! and a split must improve
//! `GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)`.
//!
//! Two split finders share this engine: exact enumeration over presorted
//! feature values, and histogram search over quantile bins. Trees grow
//! best-first (largest gain first) until the leaf or depth limit is hit;
//! without a leaf limit that yields the same tree as level-wise growth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sorted::{midpoint, SortedColumns, PARALLEL_MIN};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const HESSIAN_FLOOR: f64 = 1e-16;
const PRIOR_FLOOR: f64 = 1e-15;
const ROW_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    Exact,
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub method: SplitMethod,
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Histogram method only.
    pub max_bins: usize,
}

impl BoostConfig {
    /// XGBoost-flavored: exact splits, depth 6, shrinkage 0.3.
    pub fn exact() -> Self {
        Self {
            method: SplitMethod::Exact,
            rounds: 100,
            learning_rate: 0.3,
            max_depth: Some(6),
            max_leaves: None,
            lambda: 1.0,
            min_child_weight: 1.0,
            max_bins: 255,
        }
    }

    /// LightGBM-flavored: 255 quantile bins, 31 leaves grown best-first,
    /// shrinkage 0.1.
    pub fn histogram() -> Self {
        Self {
            method: SplitMethod::Histogram,
            rounds: 100,
            learning_rate: 0.1,
            max_depth: None,
            max_leaves: Some(31),
            lambda: 1.0,
            min_child_weight: 1e-3,
            max_bins: 255,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("boosting needs at least one round".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("boosting learning rate must be non-negative".into()));
        }
        if self.lambda < 0.0 || self.min_child_weight < 0.0 {
            return Err(Error::InvalidConfig("lambda and min_child_weight must be non-negative".into()));
        }
        if self.max_leaves.is_some_and(|l| l < 2) {
            return Err(Error::InvalidConfig("max_leaves must be at least 2".into()));
        }
        if self.method == SplitMethod::Histogram && !(2..=u16::MAX as usize).contains(&self.max_bins) {
            return Err(Error::InvalidConfig("max_bins must be in 2..=65535".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
                RegNode::Leaf { value } => return *value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, RegNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub n_classes: usize,
    /// Initial logits: log class priors.
    pub base: Vec<f64>,
    /// `rounds[r][k]` is the class-`k` tree of round `r`.
    pub rounds: Vec<Vec<RegTree>>,
    /// Mean training cross-entropy before the first round and after each.
    pub training_loss: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    /// Histogram method: last bin that goes left.
    bin: usize,
}

fn leaf_objective(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Node-local state and split search for one split method.
trait Splitter: Sync {
    type Node: Send;
    fn root(&self) -> Self::Node;
    fn sums(&self, node: &Self::Node, grad: &[f64], hess: &[f64]) -> (f64, f64, usize);
    fn best_split(&self, node: &Self::Node, grad: &[f64], hess: &[f64], cfg: &BoostConfig) -> Option<Split>;
    fn apply(&mut self, node: Self::Node, split: &Split) -> (Self::Node, Self::Node);
}

/// Keeps the better of two candidates: larger gain, then lower feature,
/// then lower threshold.
fn better(a: Option<Split>, b: Option<Split>) -> Option<Split> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let a_wins = a.gain > b.gain
                || (a.gain == b.gain && (a.feature, a.threshold) <= (b.feature, b.threshold));
            Some(if a_wins { a } else { b })
        }
    }
}

fn gain_of(gl: f64, hl: f64, g: f64, h: f64, lambda: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    leaf_objective(gl, hl, lambda) + leaf_objective(gr, hr, lambda) - leaf_objective(g, h, lambda)
}

struct ExactSplitter<'a> {
    x: &'a Matrix,
    sorted: SortedColumns,
    goes_left: Vec<bool>,
}

impl Splitter for ExactSplitter<'_> {
    type Node = (usize, usize);

    fn root(&self) -> Self::Node {
        (0, self.x.n_rows())
    }

    fn sums(&self, &(s, e): &Self::Node, grad: &[f64], hess: &[f64]) -> (f64, f64, usize) {
        let pos = self.sorted.positions(s, e);
        let g = pos.iter().map(|&p| grad[p as usize]).sum();
        let h = pos.iter().map(|&p| hess[p as usize]).sum();
        (g, h, e - s)
    }

    fn best_split(&self, node: &Self::Node, grad: &[f64], hess: &[f64], cfg: &BoostConfig) -> Option<Split> {
        let (s, e) = *node;
        let (g, h, _) = self.sums(node, grad, hess);
        let scan = |f: usize| -> Option<Split> {
            let col = self.sorted.column(f, s, e);
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut best: Option<Split> = None;
            for k in 0..col.len() - 1 {
                let p = col[k] as usize;
                gl += grad[p];
                hl += hess[p];
                let v = self.x.get(p, f);
                let next = self.x.get(col[k + 1] as usize, f);
                if next <= v || hl < cfg.min_child_weight || h - hl < cfg.min_child_weight {
                    continue;
                }
                let gain = gain_of(gl, hl, g, h, cfg.lambda);
                if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(v, next),
                        gain,
                        bin: 0,
                    });
                }
            }
            best
        };
        let d = self.x.n_cols();
        if e - s >= PARALLEL_MIN {
            (0..d).into_par_iter().map(scan).reduce(|| None, better)
        } else {
            (0..d).map(scan).fold(None, better)
        }
    }

    fn apply(&mut self, (s, e): Self::Node, split: &Split) -> (Self::Node, Self::Node) {
        for &p in self.sorted.column(split.feature, s, e) {
            self.goes_left[p as usize] = self.x.get(p as usize, split.feature) <= split.threshold;
        }
        let mid = self.sorted.partition(s, e, &self.goes_left);
        ((s, mid), (mid, e))
    }
}

/// Quantile binning of the training matrix.
#[derive(Debug, Clone)]
struct Bins {
    /// Per feature: ascending inclusive upper bounds, last is `+inf`.
    upper: Vec<Vec<f64>>,
    /// Column-major bin codes.
    codes: Vec<Vec<u16>>,
}

impl Bins {
    fn new(x: &Matrix, max_bins: usize) -> Self {
        let upper: Vec<Vec<f64>> = (0..x.n_cols())
            .into_par_iter()
            .map(|f| {
                let mut v: Vec<f64> = (0..x.n_rows()).map(|i| x.get(i, f)).collect();
                v.sort_by(f64::total_cmp);
                let mut distinct = v.clone();
                distinct.dedup();
                let mut bounds: Vec<f64> = if distinct.len() <= max_bins {
                    distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect()
                } else {
                    let n = v.len();
                    let mut b: Vec<f64> = (1..max_bins).map(|q| v[(q * n / max_bins).min(n - 1)]).collect();
                    b.dedup();
                    // The top cut would leave an empty last bin.
                    if b.last() == v.last() {
                        b.pop();
                    }
                    b
                };
                bounds.push(f64::INFINITY);
                bounds
            })
            .collect();
        let codes = upper
            .par_iter()
            .enumerate()
            .map(|(f, ub)| {
                (0..x.n_rows())
                    .map(|i| ub.partition_point(|&u| u < x.get(i, f)) as u16)
                    .collect()
            })
            .collect();
        Self { upper, codes }
    }
}

struct HistogramSplitter<'a> {
    bins: &'a Bins,
    n_rows: usize,
}

impl Splitter for HistogramSplitter<'_> {
    type Node = Vec<u32>;

    fn root(&self) -> Self::Node {
        (0..self.n_rows as u32).collect()
    }

    fn sums(&self, rows: &Self::Node, grad: &[f64], hess: &[f64]) -> (f64, f64, usize) {
        let g = rows.iter().map(|&r| grad[r as usize]).sum();
        let h = rows.iter().map(|&r| hess[r as usize]).sum();
        (g, h, rows.len())
    }

    fn best_split(&self, rows: &Self::Node, grad: &[f64], hess: &[f64], cfg: &BoostConfig) -> Option<Split> {
        let (g, h, _) = self.sums(rows, grad, hess);
        let scan = |f: usize| -> Option<Split> {
            let nb = self.bins.upper[f].len();
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            let codes = &self.bins.codes[f];
            for &r in rows {
                let b = codes[r as usize] as usize;
                hg[b] += grad[r as usize];
                hh[b] += hess[r as usize];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            let mut best: Option<Split> = None;
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                cl += hc[b];
                if hc[b] == 0 || cl == rows.len() {
                    continue;
                }
                if hl < cfg.min_child_weight || h - hl < cfg.min_child_weight {
                    continue;
                }
                let gain = gain_of(gl, hl, g, h, cfg.lambda);
                if gain > 0.0 && best.is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: self.bins.upper[f][b],
                        gain,
                        bin: b,
                    });
                }
            }
            best
        };
        let d = self.bins.upper.len();
        if rows.len() >= PARALLEL_MIN {
            (0..d).into_par_iter().map(scan).reduce(|| None, better)
        } else {
            (0..d).map(scan).fold(None, better)
        }
    }

    fn apply(&mut self, rows: Self::Node, split: &Split) -> (Self::Node, Self::Node) {
        let codes = &self.bins.codes[split.feature];
        rows.into_iter()
            .partition(|&r| codes[r as usize] as usize <= split.bin)
    }
}

struct Pending<N> {
    node_id: usize,
    depth: usize,
    state: N,
    split: Split,
}

fn grow<S: Splitter>(splitter: &mut S, grad: &[f64], hess: &[f64], cfg: &BoostConfig) -> RegTree {
    let leaf_value = |g: f64, h: f64| -cfg.learning_rate * g / (h + cfg.lambda);
    let can_split = |depth: usize| cfg.max_depth.is_none_or(|m| depth < m);

    let root = splitter.root();
    let (g, h, _) = splitter.sums(&root, grad, hess);
    let mut nodes = vec![RegNode::Leaf { value: leaf_value(g, h) }];
    let mut pending: Vec<Pending<S::Node>> = Vec::new();
    if can_split(0) {
        if let Some(split) = splitter.best_split(&root, grad, hess, cfg) {
            pending.push(Pending { node_id: 0, depth: 0, state: root, split });
        }
    }
    let mut n_leaves = 1;

    while !pending.is_empty() && cfg.max_leaves.is_none_or(|m| n_leaves < m) {
        let pick = (0..pending.len())
            .reduce(|a, b| {
                let (pa, pb) = (&pending[a], &pending[b]);
                if pb.split.gain > pa.split.gain
                    || (pb.split.gain == pa.split.gain && pb.node_id < pa.node_id)
                {
                    b
                } else {
                    a
                }
            })
            .expect("non-empty");
        let Pending { node_id, depth, state, split } = pending.swap_remove(pick);
        let (left_state, right_state) = splitter.apply(state, &split);
        let left = nodes.len();
        nodes[node_id] = RegNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
        };
        n_leaves += 1;
        for (offset, child) in [left_state, right_state].into_iter().enumerate() {
            let (g, h, _) = splitter.sums(&child, grad, hess);
            nodes.push(RegNode::Leaf { value: leaf_value(g, h) });
            if can_split(depth + 1) {
                if let Some(s) = splitter.best_split(&child, grad, hess, cfg) {
                    pending.push(Pending {
                        node_id: left + offset,
                        depth: depth + 1,
                        state: child,
                        split: s,
                    });
                }
            }
        }
    }
    RegTree { nodes }
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Mean cross-entropy of row-major logits.
fn mean_loss(logits: &[f64], y: &[usize], k: usize) -> f64 {
    let parts: Vec<f64> = logits
        .par_chunks(k * ROW_CHUNK)
        .zip(y.par_chunks(ROW_CHUNK))
        .map(|(z, yc)| {
            z.chunks_exact(k)
                .zip(yc)
                .map(|(row, &label)| {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    lse - row[label]
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum::<f64>() / y.len() as f64
}

impl BoostedTrees {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, cfg: &BoostConfig) -> Result<Self> {
        cfg.validate()?;
        let n = x.n_rows();
        if n == 0 {
            return Err(Error::Empty("boosting training set"));
        }
        let k = n_classes;
        let mut counts = vec![0usize; k];
        for &c in y {
            counts[c] += 1;
        }
        let base: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln())
            .collect();

        let mut logits: Vec<f64> = (0..n).flat_map(|_| base.iter().copied()).collect();
        let mut training_loss = vec![mean_loss(&logits, y, k)];

        let exact_template = (cfg.method == SplitMethod::Exact).then(|| {
            let rows: Vec<usize> = (0..n).collect();
            SortedColumns::new(x, &rows)
        });
        let bins = (cfg.method == SplitMethod::Histogram).then(|| Bins::new(x, cfg.max_bins));

        let mut rounds = Vec::with_capacity(cfg.rounds);
        let mut grad = vec![0.0; n * k];
        let mut hess = vec![0.0; n * k];
        for _ in 0..cfg.rounds {
            // Class-major gradient blocks: grad[c * n + i].
            let per_row: Vec<(Vec<f64>, Vec<f64>)> = logits
                .par_chunks(k)
                .zip(y.par_iter())
                .map(|(z, &label)| {
                    let mut p = z.to_vec();
                    softmax(&mut p);
                    let g: Vec<f64> = (0..k).map(|c| p[c] - f64::from(u8::from(c == label))).collect();
                    let h: Vec<f64> = p.iter().map(|&pc| (2.0 * pc * (1.0 - pc)).max(HESSIAN_FLOOR)).collect();
                    (g, h)
                })
                .collect();
            for (i, (g, h)) in per_row.iter().enumerate() {
                for c in 0..k {
                    grad[c * n + i] = g[c];
                    hess[c * n + i] = h[c];
                }
            }

            let trees: Vec<RegTree> = (0..k)
                .into_par_iter()
                .map(|c| {
                    let g = &grad[c * n..(c + 1) * n];
                    let h = &hess[c * n..(c + 1) * n];
                    match cfg.method {
                        SplitMethod::Exact => {
                            let mut s = ExactSplitter {
                                x,
                                sorted: exact_template.as_ref().expect("exact").clone(),
                                goes_left: vec![false; n],
                            };
                            grow(&mut s, g, h, cfg)
                        }
                        SplitMethod::Histogram => {
                            let mut s = HistogramSplitter {
                                bins: bins.as_ref().expect("histogram"),
                                n_rows: n,
                            };
                            grow(&mut s, g, h, cfg)
                        }
                    }
                })
                .collect();

            logits.par_chunks_mut(k).enumerate().for_each(|(i, z)| {
                for (c, t) in trees.iter().enumerate() {
                    z[c] += t.predict(x.row(i));
                }
            });
            training_loss.push(mean_loss(&logits, y, k));
            rounds.push(trees);
        }

        Ok(Self {
            n_classes: k,
            base,
            rounds,
            training_loss,
        })
    }

    pub fn logits(&self, row: &[f64]) -> Vec<f64> {
        let mut z = self.base.clone();
        for trees in &self.rounds {
            for (c, t) in trees.iter().enumerate() {
                z[c] += t.predict(row);
            }
        }
        z
    }

    pub fn probabilities(&self, row: &[f64]) -> Vec<f64> {
        let mut z = self.logits(row);
        softmax(&mut z);
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_data(seed: u64, n: usize, k: usize) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            data.extend([a, b, rng.gen_range(-1.0..1.0)]);
            let score = a + 0.5 * b + rng.gen_range(-0.5..0.5);
            y.push(((score + 3.0) / 6.0 * k as f64).clamp(0.0, k as f64 - 1.0) as usize);
        }
        (Matrix::new(n, 3, data).unwrap(), y)
    }

    #[test]
    fn zero_learning_rate_gives_priors() {
        let (x, y) = noisy_data(1, 100, 3);
        let cfg = BoostConfig {
            learning_rate: 0.0,
            rounds: 3,
            ..BoostConfig::exact()
        };
        let m = BoostedTrees::fit(&x, &y, 3, &cfg).unwrap();
        let mut prior = [0.0; 3];
        for &c in &y {
            prior[c] += 0.01;
        }
        for i in 0..10 {
            let p = m.probabilities(x.row(i));
            for c in 0..3 {
                assert!((p[c] - prior[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_non_increasing_both_methods() {
        for seed in 0..4 {
            let (x, y) = noisy_data(seed, 300, 3);
            for cfg in [BoostConfig::exact(), BoostConfig::histogram()] {
                let cfg = BoostConfig { rounds: 20, ..cfg };
                let m = BoostedTrees::fit(&x, &y, 3, &cfg).unwrap();
                for w in m.training_loss.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "{:?}", m.training_loss);
                }
                assert!(m.training_loss.last().unwrap() < &m.training_loss[0]);
            }
        }
    }

    #[test]
    fn leaf_limit_respected() {
        let (x, y) = noisy_data(7, 500, 2);
        let cfg = BoostConfig {
            rounds: 2,
            max_leaves: Some(5),
            ..BoostConfig::histogram()
        };
        let m = BoostedTrees::fit(&x, &y, 2, &cfg).unwrap();
        assert!(m.rounds.iter().flatten().all(|t| t.n_leaves() <= 5));
        let cfg = BoostConfig {
            rounds: 2,
            max_depth: Some(2),
            ..BoostConfig::exact()
        };
        let m = BoostedTrees::fit(&x, &y, 2, &cfg).unwrap();
        assert!(m.rounds.iter().flatten().all(|t| t.n_leaves() <= 4));
    }

    #[test]
    fn bins_cover_distinct_values() {
        let x = Matrix::column(&[3.0, 1.0, 2.0, 2.0]);
        let b = Bins::new(&x, 255);
        assert_eq!(b.upper[0], vec![1.5, 2.5, f64::INFINITY]);
        assert_eq!(b.codes[0], vec![2, 0, 1, 1]);

        let many: Vec<f64> = (0..1000).map(f64::from).collect();
        let b = Bins::new(&Matrix::column(&many), 10);
        assert!(b.upper[0].len() <= 10);
        let mut seen = vec![0; b.upper[0].len()];
        for &c in &b.codes[0] {
            seen[c as usize] += 1;
        }
        assert!(seen.iter().all(|&s| s > 0), "{seen:?}");
    }

    #[test]
    fn histogram_matches_exact_when_bins_are_exhaustive() {
        // Few distinct values: every exact threshold is a bin boundary.
        let (x, y) = noisy_data(3, 200, 2);
        // Single feature, so no cross-feature near-ties in gain.
        let coarse = Matrix::column(
            &(0..x.n_rows()).map(|i| (x.get(i, 0) * 4.0).round()).collect::<Vec<_>>(),
        );
        // One round: later rounds can diverge on near-tied gains because the
        // two methods sum gradients in different orders.
        let exact = BoostedTrees::fit(&coarse, &y, 2, &BoostConfig { rounds: 1, ..BoostConfig::exact() }).unwrap();
        let hist = BoostedTrees::fit(
            &coarse,
            &y,
            2,
            &BoostConfig {
                rounds: 1,
                learning_rate: 0.3,
                max_depth: Some(6),
                max_leaves: None,
                min_child_weight: 1.0,
                ..BoostConfig::histogram()
            },
        )
        .unwrap();
        for i in 0..coarse.n_rows() {
            let (a, b) = (exact.logits(coarse.row(i)), hist.logits(coarse.row(i)));
            for c in 0..2 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
    }
}
