//! Exact Euclidean k-nearest-neighbor search.
//!
//! Backed by a kd-tree with per-node bounding boxes. Results are exact and
//! ordered by `(distance, tie key, row id)`; the default tie key is constant,
//! so ties fall back to the lower row id.

use std::borrow::Cow;
use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

const LEAF_SIZE: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

/// What to search around.
#[derive(Debug, Clone, Copy)]
pub enum Query<'q> {
    /// An indexed row; with `exclude_self` the row itself is skipped.
    Row(usize),
    Point(&'q [f64]),
}

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    /// Children, `None` for leaves.
    children: Option<(usize, usize)>,
    /// Every point in the node is identical; `perm` is sorted by id here.
    degenerate: bool,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    data: Cow<'a, Matrix>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    key: usize,
    id: usize,
}

impl Candidate {
    fn cmp(&self, other: &Candidate) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.key.cmp(&other.key))
            .then(self.id.cmp(&other.id))
    }
}

/// Bounded sorted list of the best candidates seen so far.
struct Best {
    k: usize,
    items: Vec<Candidate>,
}

impl Best {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn worst(&self) -> Option<&Candidate> {
        if self.full() {
            self.items.last()
        } else {
            None
        }
    }

    fn offer(&mut self, c: Candidate) {
        if let Some(w) = self.worst() {
            if c.cmp(w) != Ordering::Less {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|x| x.cmp(&c) == Ordering::Less);
        self.items.insert(pos, c);
        if self.items.len() > self.k {
            self.items.pop();
        }
    }
}

impl NeighborIndex<'static> {
    pub fn build_owned(features: Matrix) -> Result<Self> {
        Self::build_cow(Cow::Owned(features))
    }
}

impl<'a> NeighborIndex<'a> {
    pub fn build(features: &'a Matrix) -> Result<Self> {
        Self::build_cow(Cow::Borrowed(features))
    }

    fn build_cow(data: Cow<'a, Matrix>) -> Result<Self> {
        if data.n_rows() == 0 {
            return Err(Error::Empty("neighbor index"));
        }
        let mut index = NeighborIndex {
            perm: (0..data.n_rows()).collect(),
            nodes: Vec::new(),
            data,
        };
        index.build_node(0, index.perm.len());
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let d = self.data.n_cols();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for &i in &self.perm[start..end] {
            for (j, &x) in self.data.row(i).iter().enumerate() {
                lower[j] = lower[j].min(x);
                upper[j] = upper[j].max(x);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            children: None,
            degenerate: false,
            lower,
            upper,
        });

        if end - start <= LEAF_SIZE || d == 0 {
            return id;
        }
        let node = &self.nodes[id];
        let (dim, spread) = (0..d)
            .map(|j| (j, node.upper[j] - node.lower[j]))
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if spread <= 0.0 {
            self.perm[start..end].sort_unstable();
            self.nodes[id].degenerate = true;
            return id;
        }
        let mid = start + (end - start) / 2;
        let data = &self.data;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data.get(a, dim).total_cmp(&data.get(b, dim)).then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    pub fn len(&self) -> usize {
        self.data.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.n_rows() == 0
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    /// The `k` nearest neighbors, ascending by distance, ties by row id.
    pub fn k_nearest(&self, query: Query<'_>, k: usize, exclude_self: bool) -> Result<Vec<Neighbor>> {
        self.query(query, k, exclude_self, &|_| 0, true)
    }

    /// Like [`k_nearest`](Self::k_nearest) but equal distances are ordered
    /// by `tie_key(id)` before row id.
    pub fn k_nearest_keyed<F>(
        &self,
        query: Query<'_>,
        k: usize,
        exclude_self: bool,
        tie_key: F,
    ) -> Result<Vec<Neighbor>>
    where
        F: Fn(usize) -> usize,
    {
        self.query(query, k, exclude_self, &tie_key, false)
    }

    fn query<F: Fn(usize) -> usize>(
        &self,
        query: Query<'_>,
        k: usize,
        exclude_self: bool,
        tie_key: &F,
        constant_key: bool,
    ) -> Result<Vec<Neighbor>> {
        let (point, exclude) = match query {
            Query::Row(i) => {
                if i >= self.len() {
                    return Err(Error::LabelOutOfRange {
                        label: i,
                        n_classes: self.len(),
                    });
                }
                (self.data.row(i), exclude_self.then_some(i))
            }
            Query::Point(p) => {
                self.data.check_cols(p.len())?;
                (p, None)
            }
        };
        let available = self.len() - usize::from(exclude.is_some());
        if k == 0 || k > available {
            return Err(Error::KTooLarge { k, available });
        }
        let mut best = Best::new(k);
        self.search(0, point, exclude, tie_key, constant_key, &mut best);
        Ok(best
            .items
            .into_iter()
            .map(|c| Neighbor {
                id: c.id,
                distance: c.dist2.sqrt(),
            })
            .collect())
    }

    fn lower_bound(&self, node: &Node, point: &[f64]) -> f64 {
        point
            .iter()
            .zip(node.lower.iter().zip(&node.upper))
            .map(|(&x, (&lo, &hi))| {
                let d = if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                };
                d * d
            })
            .sum()
    }

    fn search<F: Fn(usize) -> usize>(
        &self,
        node_id: usize,
        point: &[f64],
        exclude: Option<usize>,
        tie_key: &F,
        constant_key: bool,
        best: &mut Best,
    ) {
        let node = &self.nodes[node_id];
        match node.children {
            None if node.degenerate && constant_key => {
                // Same distance for all, ids ascending: stop at first rejection.
                let dist2 = squared_distance(point, self.data.row(self.perm[node.start]));
                for &i in &self.perm[node.start..node.end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let c = Candidate { dist2, key: 0, id: i };
                    if best.worst().is_some_and(|w| c.cmp(w) != Ordering::Less) {
                        break;
                    }
                    best.offer(c);
                }
            }
            None => {
                for &i in &self.perm[node.start..node.end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    best.offer(Candidate {
                        dist2: squared_distance(point, self.data.row(i)),
                        key: tie_key(i),
                        id: i,
                    });
                }
            }
            Some((l, r)) => {
                let bl = self.lower_bound(&self.nodes[l], point);
                let br = self.lower_bound(&self.nodes[r], point);
                let order = if bl <= br { [(l, bl), (r, br)] } else { [(r, br), (l, bl)] };
                for (child, bound) in order {
                    // Inclusive: an equally distant point may still win a tie.
                    if best.worst().is_some_and(|w| bound > w.dist2) {
                        continue;
                    }
                    self.search(child, point, exclude, tie_key, constant_key, best);
                }
            }
        }
    }

    /// Nearest neighbors of every indexed row, computed in parallel. Output
    /// order matches row order regardless of thread count.
    pub fn all_rows_nearest(&self, k: usize) -> Result<Vec<Vec<Neighbor>>> {
        (0..self.len())
            .into_par_iter()
            .map(|i| self.k_nearest(Query::Row(i), k, true))
            .collect()
    }
}

pub fn build_index(features: &Matrix) -> Result<NeighborIndex<'_>> {
    NeighborIndex::build(features)
}
