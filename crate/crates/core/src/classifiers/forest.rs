use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, FeatureSampling, TreeConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(n_features))`.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(c) => c.min(n_features),
        }
        .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Trees are grown in parallel; tree `t` draws from the stream
    /// `(seed, t)`, so the forest does not depend on the thread count.
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        config: &ForestConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.n_trees == 0 {
            return Err(Error::InvalidConfig("random forest needs at least one tree".into()));
        }
        config.tree.validate()?;
        let n = x.n_rows();
        let per_split = config.max_features.resolve(x.n_cols());
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(seed, &[rng::tag("rf-tree"), t as u64]);
                let rows: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_rows(
                    x,
                    y,
                    &rows,
                    n_classes,
                    &config.tree,
                    Some(FeatureSampling {
                        per_split,
                        rng: &mut rng,
                    }),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_classes, trees })
    }

    /// Mean over trees of the leaf class frequencies.
    pub fn scores_row(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut leaf = vec![0.0; self.n_classes];
        for tree in &self.trees {
            tree.leaf_distribution(row, &mut leaf);
            for (o, l) in out.iter_mut().zip(&leaf) {
                *o += l;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }
}
