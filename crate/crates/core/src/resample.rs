//! SMOTE oversampling, Tomek-link cleaning, and the combined balancer.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{class_distribution_n, ClassDistribution};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neighbors::{NeighborIndex, Query};
use crate::rng;

pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteParams {
    pub k_neighbors: usize,
    /// Per-class target counts; `None` grows every class to the majority count.
    pub target: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for SmoteParams {
    fn default() -> Self {
        Self {
            k_neighbors: DEFAULT_K_NEIGHBORS,
            target: None,
            seed: 0,
        }
    }
}

/// Where a synthetic row came from: `base + delta * (neighbor - base)`.
/// Ids index the input rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub base: usize,
    pub neighbor: usize,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub synthetic_per_class: Vec<usize>,
    /// One record per synthetic row, in row order; synthetic rows start at
    /// the input row count.
    pub provenance: Vec<SyntheticRecord>,
}

/// Point on the segment from `base` to `neighbor`. Clamped per coordinate so
/// that rounding never leaves the closed segment.
pub fn interpolate(base: &[f64], neighbor: &[f64], delta: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(base.iter().zip(neighbor).map(|(&a, &b)| {
        let x = a + delta * (b - a);
        x.clamp(a.min(b), a.max(b))
    }));
}

fn n_classes_of(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

pub fn smote(features: &Matrix, labels: &[usize], params: &SmoteParams) -> Result<SmoteOutput> {
    if labels.is_empty() {
        return Err(Error::Empty("smote input"));
    }
    if features.n_rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.n_rows(),
            right: labels.len(),
        });
    }
    if params.k_neighbors == 0 {
        return Err(Error::InvalidConfig("k_neighbors must be at least 1".into()));
    }
    let n_classes = params
        .target
        .as_ref()
        .map_or(0, Vec::len)
        .max(n_classes_of(labels));
    let before = class_distribution_n(labels, n_classes);
    let target = match &params.target {
        Some(t) => {
            let mut t = t.clone();
            t.resize(n_classes, 0);
            for (c, (&want, &have)) in t.iter().zip(&before.counts).enumerate() {
                if want < have {
                    return Err(Error::InvalidConfig(format!(
                        "target {want} for class {c} is below its current count {have}"
                    )));
                }
            }
            t
        }
        None => {
            let max = before.counts.iter().copied().max().unwrap_or(0);
            vec![max; n_classes]
        }
    };

    let mut out_features = features.clone();
    let mut out_labels = labels.to_vec();
    let mut provenance = Vec::new();
    let mut synthetic_per_class = vec![0usize; n_classes];
    let mut point = Vec::with_capacity(features.n_cols());

    for class in 0..n_classes {
        let have = before.counts[class];
        let need = target[class] - have;
        if need == 0 {
            continue;
        }
        if have < 2 {
            return Err(Error::CannotInterpolate { class });
        }
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let local = features.select_rows(&members);
        let index = NeighborIndex::build(&local)?;
        let k = params.k_neighbors.min(have - 1);

        let mut rng = rng::stream(params.seed, &[rng::tag("smote"), class as u64]);
        let mut order: Vec<usize> = (0..have).collect();
        order.shuffle(&mut rng);

        // Neighbor lists for every base row that will be visited.
        let visited = &order[..need.min(have)];
        let neighbor_lists: Vec<Vec<usize>> = visited
            .par_iter()
            .map(|&b| {
                index
                    .k_nearest(Query::Row(b), k, true)
                    .map(|v| v.into_iter().map(|nb| nb.id).collect())
            })
            .collect::<Result<_>>()?;

        for t in 0..need {
            let slot = t % have;
            let base = order[slot];
            let z = neighbor_lists[slot][rng.gen_range(0..k)];
            let delta: f64 = rng.gen();
            interpolate(local.row(base), local.row(z), delta, &mut point);
            out_features.push_row(&point)?;
            out_labels.push(class);
            provenance.push(SyntheticRecord {
                base: members[base],
                neighbor: members[z],
                delta,
            });
        }
        synthetic_per_class[class] = need;
    }

    Ok(SmoteOutput {
        features: out_features,
        labels: out_labels,
        synthetic_per_class,
        provenance,
    })
}

/// Opposite-class pair of mutual nearest neighbors, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TomekPair {
    pub i: usize,
    pub j: usize,
}

/// Single pass over the input: every differing-label pair whose members are
/// each other's exact nearest neighbor.
pub fn tomek_links(features: &Matrix, labels: &[usize]) -> Result<Vec<TomekPair>> {
    if features.n_rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.n_rows(),
            right: labels.len(),
        });
    }
    if labels.len() < 2 {
        return Ok(Vec::new());
    }
    let index = NeighborIndex::build(features)?;
    let nearest: Vec<usize> = index
        .all_rows_nearest(1)?
        .into_iter()
        .map(|v| v[0].id)
        .collect();
    Ok(nearest
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < j && nearest[j] == i && labels[i] != labels[j])
        .map(|(i, &j)| TomekPair { i, j })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalPolicy {
    #[default]
    Both,
    MajorityOnly,
}

impl std::str::FromStr for RemovalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "both" => Ok(Self::Both),
            "majority_only" | "majority" => Ok(Self::MajorityOnly),
            other => Err(Error::InvalidConfig(format!("unknown removal policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for RemovalPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Both => "both",
            Self::MajorityOnly => "majority_only",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RemovalOutput {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub removed_per_class: Vec<usize>,
    /// Input ids of the surviving rows, in order.
    pub kept: Vec<usize>,
}

/// Drops Tomek-link endpoints. Under `MajorityOnly` the member of the class
/// with more rows (before removal) goes; equal counts pick the lower code.
/// A row in several pairs is removed once.
pub fn remove_tomek(
    features: &Matrix,
    labels: &[usize],
    pairs: &[TomekPair],
    policy: RemovalPolicy,
) -> Result<RemovalOutput> {
    let n_classes = n_classes_of(labels);
    let counts = class_distribution_n(labels, n_classes).counts;
    let mut drop = BTreeSet::new();
    for p in pairs {
        if p.i >= labels.len() || p.j >= labels.len() {
            return Err(Error::LengthMismatch {
                left: p.i.max(p.j),
                right: labels.len(),
            });
        }
        match policy {
            RemovalPolicy::Both => {
                drop.insert(p.i);
                drop.insert(p.j);
            }
            RemovalPolicy::MajorityOnly => {
                let (a, b) = (labels[p.i], labels[p.j]);
                let i_is_majority = counts[a] > counts[b] || (counts[a] == counts[b] && a < b);
                drop.insert(if i_is_majority { p.i } else { p.j });
            }
        }
    }
    let mut removed_per_class = vec![0usize; n_classes];
    for &r in &drop {
        removed_per_class[labels[r]] += 1;
    }
    let kept: Vec<usize> = (0..labels.len()).filter(|i| !drop.contains(i)).collect();
    Ok(RemovalOutput {
        features: features.select_rows(&kept),
        labels: kept.iter().map(|&i| labels[i]).collect(),
        removed_per_class,
        kept,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteTomekParams {
    pub smote: SmoteParams,
    pub policy: RemovalPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub k_neighbors: usize,
    pub seed: u64,
    pub policy: RemovalPolicy,
    pub before: ClassDistribution,
    pub synthetic_per_class: Vec<usize>,
    pub after_smote: ClassDistribution,
    pub tomek_pairs: usize,
    pub removed_per_class: Vec<usize>,
    pub after: ClassDistribution,
}

#[derive(Debug, Clone)]
pub struct Balanced {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub report: ResampleReport,
}

/// SMOTE to the target counts, one Tomek pass over the combined rows, then
/// link removal.
pub fn smote_tomek(
    features: &Matrix,
    labels: &[usize],
    params: &SmoteTomekParams,
) -> Result<Balanced> {
    let n_classes = n_classes_of(labels).max(params.smote.target.as_ref().map_or(0, Vec::len));
    let before = class_distribution_n(labels, n_classes);
    let grown = smote(features, labels, &params.smote)?;
    let after_smote = class_distribution_n(&grown.labels, n_classes);
    let pairs = tomek_links(&grown.features, &grown.labels)?;
    let cleaned = remove_tomek(&grown.features, &grown.labels, &pairs, params.policy)?;
    let mut removed_per_class = cleaned.removed_per_class;
    removed_per_class.resize(n_classes, 0);
    let after = class_distribution_n(&cleaned.labels, n_classes);
    Ok(Balanced {
        features: cleaned.features,
        labels: cleaned.labels,
        report: ResampleReport {
            k_neighbors: params.smote.k_neighbors,
            seed: params.smote.seed,
            policy: params.policy,
            before,
            synthetic_per_class: grown.synthetic_per_class,
            after_smote,
            tomek_pairs: pairs.len(),
            removed_per_class,
            after,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// O(n^2) mutual-nearest-neighbor scan with lowest-id tie-break.
    pub(crate) fn brute_tomek(m: &Matrix, y: &[usize]) -> Vec<TomekPair> {
        let n = m.n_rows();
        let nn: Vec<usize> = (0..n)
            .map(|i| {
                let mut best = (f64::INFINITY, usize::MAX);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                best.1
            })
            .collect();
        let mut out = Vec::new();
        for i in 0..n {
            let j = nn[i];
            if i < j && nn[j] == i && y[i] != y[j] {
                out.push(TomekPair { i, j });
            }
        }
        out
    }

    #[test]
    fn two_point_minority_stays_on_diagonal() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0]])
            .unwrap();
        let y = vec![1, 1, 0, 0, 0];
        let out = smote(
            &x,
            &y,
            &SmoteParams {
                k_neighbors: 1,
                target: None,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(out.features.n_rows(), 6);
        assert_eq!(out.synthetic_per_class, vec![0, 1]);
        let p = out.features.row(5);
        assert_eq!(p[0], p[1]);
        assert!((0.0..=1.0).contains(&p[0]));
        assert_eq!(out.labels[5], 1);
        // Originals untouched and first.
        assert_eq!(out.features.select_rows(&[0, 1, 2, 3, 4]), x);
    }

    #[test]
    fn interpolation_endpoints() {
        let mut out = Vec::new();
        interpolate(&[0.3, -2.0], &[1.7, 4.0], 0.0, &mut out);
        assert_eq!(out, vec![0.3, -2.0]);
        interpolate(&[0.3, -2.0], &[1.7, 4.0], 1.0, &mut out);
        assert_eq!(out, vec![1.7, 4.0]);
    }

    #[test]
    fn single_sample_class_cannot_grow() {
        let x = Matrix::column(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            smote(&x, &[0, 0, 1], &SmoteParams::default()),
            Err(Error::CannotInterpolate { class: 1 })
        ));
        assert!(matches!(
            smote(&Matrix::zeros(0, 1), &[], &SmoteParams::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn explicit_targets_and_clamped_k() {
        let x = Matrix::column(&[0.0, 1.0, 2.0, 10.0, 11.0]);
        let out = smote(
            &x,
            &[0, 0, 0, 1, 1],
            &SmoteParams {
                k_neighbors: 5,
                target: Some(vec![4, 7]),
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(class_distribution_n(&out.labels, 2).counts, vec![4, 7]);
        for (r, rec) in out.provenance.iter().enumerate() {
            let v = out.features.get(5 + r, 0);
            let (a, b) = (x.get(rec.base, 0), x.get(rec.neighbor, 0));
            assert!(a.min(b) <= v && v <= a.max(b));
            assert_ne!(rec.base, rec.neighbor);
        }
        assert!(smote(
            &x,
            &[0, 0, 0, 1, 1],
            &SmoteParams {
                target: Some(vec![1, 2]),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn seed_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::new(40, 3, (0..120).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i % 5 == 0)).collect();
        let p = SmoteParams {
            seed: 9,
            ..Default::default()
        };
        let a = smote(&x, &y, &p).unwrap();
        let b = smote(&x, &y, &p).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn tomek_hand_example() {
        let x = Matrix::column(&[0.0, 1.0, 5.0]);
        assert_eq!(
            tomek_links(&x, &[0, 1, 0]).unwrap(),
            vec![TomekPair { i: 0, j: 1 }]
        );
        assert!(tomek_links(&x, &[0, 0, 0]).unwrap().is_empty());
    }

    #[test]
    fn tomek_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n = 200;
            let x = Matrix::new(n, 2, (0..2 * n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            assert_eq!(tomek_links(&x, &y).unwrap(), brute_tomek(&x, &y));
        }
    }

    #[test]
    fn removal_policies() {
        let x = Matrix::column(&[0.0, 1.0, 5.0, 6.0, 9.0]);
        let y = vec![0, 1, 0, 0, 0];
        let pairs = vec![TomekPair { i: 0, j: 1 }];
        let both = remove_tomek(&x, &y, &pairs, RemovalPolicy::Both).unwrap();
        assert_eq!(both.labels.len(), 3);
        assert_eq!(both.removed_per_class, vec![1, 1]);
        assert_eq!(both.kept, vec![2, 3, 4]);

        let maj = remove_tomek(&x, &y, &pairs, RemovalPolicy::MajorityOnly).unwrap();
        assert_eq!(maj.labels.len(), 4);
        assert_eq!(maj.removed_per_class, vec![1, 0]);
        assert_eq!(maj.kept, vec![1, 2, 3, 4]);

        // Row 1 shared by two pairs is removed once.
        let y2 = vec![0, 1, 0, 0, 0];
        let pairs2 = vec![TomekPair { i: 0, j: 1 }, TomekPair { i: 1, j: 2 }];
        let r = remove_tomek(&x, &y2, &pairs2, RemovalPolicy::Both).unwrap();
        assert_eq!(r.kept, vec![3, 4]);
        assert_eq!(r.removed_per_class, vec![2, 1]);
    }

    #[test]
    fn balanced_separated_data_is_unchanged() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]]).unwrap();
        let y = vec![0, 0, 1, 1];
        let out = smote_tomek(&x, &y, &SmoteTomekParams::default()).unwrap();
        assert_eq!(out.features, x);
        assert_eq!(out.labels, y);
        assert_eq!(out.report.tomek_pairs, 0);
        assert_eq!(out.report.before, out.report.after);
    }

    #[test]
    fn report_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 300;
        let x = Matrix::new(n, 2, (0..2 * n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..n).map(|i| if i % 10 == 0 { 1 } else if i % 7 == 0 { 2 } else { 0 }).collect();
        for policy in [RemovalPolicy::Both, RemovalPolicy::MajorityOnly] {
            let out = smote_tomek(
                &x,
                &y,
                &SmoteTomekParams {
                    smote: SmoteParams { seed: 4, ..Default::default() },
                    policy,
                },
            )
            .unwrap();
            let r = &out.report;
            let target = r.before.counts.iter().max().copied().unwrap();
            for c in 0..3 {
                assert_eq!(r.after_smote.counts[c], target);
                assert_eq!(r.after.counts[c], target - r.removed_per_class[c]);
            }
            assert_eq!(r.after.total, out.labels.len());
        }
    }
}
