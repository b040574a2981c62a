use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neighbors::{NeighborIndex, Query};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KnnRepr {
    k: usize,
    n_classes: usize,
    features: Matrix,
    labels: Vec<usize>,
}

/// Stores the training set. Equidistant neighbors are ranked by label and
/// then row id, so the vote depends only on the training values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "KnnRepr", into = "KnnRepr")]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    labels: Vec<usize>,
    index: NeighborIndex<'static>,
}

impl TryFrom<KnnRepr> for KnnModel {
    type Error = Error;

    fn try_from(r: KnnRepr) -> Result<Self> {
        Self::fit(r.features, r.labels, r.n_classes, &KnnConfig { k: r.k })
    }
}

impl From<KnnModel> for KnnRepr {
    fn from(m: KnnModel) -> Self {
        KnnRepr {
            k: m.k,
            n_classes: m.n_classes,
            features: m.index.data().clone(),
            labels: m.labels,
        }
    }
}

impl KnnModel {
    pub fn fit(features: Matrix, labels: Vec<usize>, n_classes: usize, config: &KnnConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::InvalidConfig("knn k must be at least 1".into()));
        }
        if features.n_rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.n_rows(),
                right: labels.len(),
            });
        }
        Ok(Self {
            k: config.k,
            n_classes,
            labels,
            index: NeighborIndex::build_owned(features)?,
        })
    }

    /// Neighbor vote fractions, one row per query.
    pub fn scores(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        let k = self.k.min(self.labels.len());
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| {
                let nn = self
                    .index
                    .k_nearest_keyed(Query::Point(x.row(i)), k, false, |j| self.labels[j])?;
                let mut votes = vec![0.0; self.n_classes];
                for n in &nn {
                    votes[self.labels[n.id]] += 1.0;
                }
                votes.iter_mut().for_each(|v| *v /= k as f64);
                Ok(votes)
            })
            .collect()
    }
}
