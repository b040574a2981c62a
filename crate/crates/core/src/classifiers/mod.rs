//! The six classifiers behind one train/predict contract.
//!
//! | kind | model                                                  |
//! |------|--------------------------------------------------------|
//! | DT   | CART tree, Gini splits                                 |
//! | RF   | bagged CART trees with per-split feature subsampling   |
//! | KNN  | exact Euclidean k-nearest-neighbor vote                |
//! | MLP  | ReLU network with softmax output                       |
//! | XGB  | gradient-boosted trees, exact split enumeration        |
//! | LGB  | gradient-boosted trees, histogram split search         |
//!
//! Every kind scores rows with a probability vector; `predict` is the argmax
//! with ties going to the lowest class code.

pub mod boost;
pub mod forest;
pub mod knn;
pub mod mlp;
mod sorted;
pub mod tree;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub use boost::{BoostConfig, BoostedTrees, SplitMethod};
pub use forest::{ForestConfig, MaxFeatures, RandomForest};
pub use knn::{KnnConfig, KnnModel};
pub use mlp::{Mlp, MlpConfig, Optimizer};
pub use tree::{DecisionTree, TreeConfig, TreeNode};

pub const MODEL_FORMAT: &str = "wsnids-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "DT")]
    DecisionTree,
    #[serde(rename = "RF")]
    RandomForest,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "KNN")]
    Knn,
    /// Gradient boosting with exact split enumeration.
    #[serde(rename = "XGB")]
    BoostExact,
    /// Gradient boosting with histogram split search.
    #[serde(rename = "LGB")]
    BoostHistogram,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Mlp,
        ModelKind::Knn,
        ModelKind::BoostHistogram,
        ModelKind::BoostExact,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "DT",
            ModelKind::RandomForest => "RF",
            ModelKind::Mlp => "MLP",
            ModelKind::Knn => "KNN",
            ModelKind::BoostExact => "XGB",
            ModelKind::BoostHistogram => "LGB",
        }
    }

    /// Parses a comma-separated list such as `dt,rf,xgb`.
    pub fn parse_list(s: &str) -> Result<Vec<ModelKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend(Self::ALL);
                continue;
            }
            let k: ModelKind = part.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        Ok(out)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dt" | "tree" => Ok(ModelKind::DecisionTree),
            "rf" | "forest" => Ok(ModelKind::RandomForest),
            "mlp" => Ok(ModelKind::Mlp),
            "knn" => Ok(ModelKind::Knn),
            "xgb" | "gbt-exact" => Ok(ModelKind::BoostExact),
            "lgb" | "gbt-histogram" => Ok(ModelKind::BoostHistogram),
            other => Err(Error::InvalidConfig(format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Hyperparameters for every kind. Only the section for the kind being
/// trained is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub dt: TreeConfig,
    pub rf: ForestConfig,
    pub knn: KnnConfig,
    pub mlp: MlpConfig,
    pub xgb: BoostConfig,
    pub lgb: BoostConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: TreeConfig::default(),
            rf: ForestConfig::default(),
            knn: KnnConfig::default(),
            mlp: MlpConfig::default(),
            xgb: BoostConfig::exact(),
            lgb: BoostConfig::histogram(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        match kind {
            ModelKind::DecisionTree => self.dt.validate(),
            ModelKind::RandomForest => {
                if self.rf.n_trees == 0 {
                    return Err(Error::InvalidConfig("random forest needs at least one tree".into()));
                }
                self.rf.tree.validate()
            }
            ModelKind::Knn => {
                if self.knn.k == 0 {
                    return Err(Error::InvalidConfig("knn k must be at least 1".into()));
                }
                Ok(())
            }
            ModelKind::Mlp => self.mlp.validate(),
            ModelKind::BoostExact => {
                if self.xgb.method != SplitMethod::Exact {
                    return Err(Error::InvalidConfig("XGB must use exact split finding".into()));
                }
                self.xgb.validate()
            }
            ModelKind::BoostHistogram => {
                if self.lgb.method != SplitMethod::Histogram {
                    return Err(Error::InvalidConfig("LGB must use histogram split finding".into()));
                }
                self.lgb.validate()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Learner {
    /// Training data held a single class.
    Constant(usize),
    Tree(DecisionTree),
    Forest(RandomForest),
    Knn(KnnModel),
    Mlp(Mlp),
    Boost(BoostedTrees),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub n_classes: usize,
    pub n_features: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub learner: Learner,
}

/// Trains `kind` on `features`/`labels`. `n_classes` fixes the score width,
/// so classes absent from this training set still get a (zero) column.
pub fn train(
    kind: ModelKind,
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<Model> {
    config.validate(kind)?;
    if features.n_rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.n_rows(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if features.n_cols() == 0 {
        return Err(Error::Empty("feature columns"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes,
        });
    }

    let seed = rng::derive_seed(config.seed, &[rng::tag(kind.short_name())]);
    let first = labels[0];
    let learner = if labels.iter().all(|&l| l == first) {
        Learner::Constant(first)
    } else {
        match kind {
            ModelKind::DecisionTree => {
                Learner::Tree(DecisionTree::fit(features, labels, n_classes, &config.dt)?)
            }
            ModelKind::RandomForest => {
                Learner::Forest(RandomForest::fit(features, labels, n_classes, &config.rf, seed)?)
            }
            ModelKind::Knn => Learner::Knn(KnnModel::fit(
                features.clone(),
                labels.to_vec(),
                n_classes,
                &config.knn,
            )?),
            ModelKind::Mlp => Learner::Mlp(Mlp::fit(features, labels, n_classes, &config.mlp, seed)?),
            ModelKind::BoostExact => {
                Learner::Boost(BoostedTrees::fit(features, labels, n_classes, &config.xgb)?)
            }
            ModelKind::BoostHistogram => {
                Learner::Boost(BoostedTrees::fit(features, labels, n_classes, &config.lgb)?)
            }
        }
    };
    Ok(Model {
        kind,
        n_classes,
        n_features: features.n_cols(),
        seed: config.seed,
        config: config.clone(),
        learner,
    })
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Model,
}

impl Model {
    /// One probability row per input row.
    pub fn predict_scores(&self, features: &Matrix) -> Result<Vec<Vec<f64>>> {
        features.check_cols(self.n_features)?;
        let k = self.n_classes;
        let rows = 0..features.n_rows();
        let scores = match &self.learner {
            Learner::Constant(c) => rows
                .map(|_| {
                    let mut s = vec![0.0; k];
                    s[*c] = 1.0;
                    s
                })
                .collect(),
            Learner::Tree(t) => rows
                .into_par_iter()
                .map(|i| {
                    let mut s = vec![0.0; k];
                    t.leaf_distribution(features.row(i), &mut s);
                    s
                })
                .collect(),
            Learner::Forest(f) => rows
                .into_par_iter()
                .map(|i| {
                    let mut s = vec![0.0; k];
                    f.scores_row(features.row(i), &mut s);
                    s
                })
                .collect(),
            Learner::Knn(m) => m.scores(features)?,
            Learner::Mlp(m) => rows
                .into_par_iter()
                .map(|i| m.probabilities(features.row(i)))
                .collect(),
            Learner::Boost(b) => rows
                .into_par_iter()
                .map(|i| b.probabilities(features.row(i)))
                .collect(),
        };
        Ok(scores)
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self
            .predict_scores(features)?
            .iter()
            .map(|s| argmax(s))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        let mut c = TrainConfig::default();
        c.rf.n_trees = 5;
        c.mlp.epochs = 2;
        c.mlp.hidden = vec![4];
        c.xgb.rounds = 3;
        c.lgb.rounds = 3;
        c
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            ModelKind::parse_list("dt, RF,xgb,dt").unwrap(),
            vec![ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::BoostExact]
        );
        assert_eq!(ModelKind::parse_list("all").unwrap().len(), 6);
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn single_class_training_is_constant() {
        let x = Matrix::column(&[0.0, 1.0, 2.0]);
        for kind in ModelKind::ALL {
            let m = train(kind, &x, &[1, 1, 1], 2, &small_config()).unwrap();
            let s = m.predict_scores(&Matrix::column(&[-5.0, 9.0])).unwrap();
            assert!(s.iter().all(|r| r == &vec![0.0, 1.0]), "{kind}");
            assert_eq!(m.predict(&x).unwrap(), vec![1, 1, 1]);
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        let x = Matrix::column(&[0.0, 1.0]);
        let mut c = small_config();
        c.rf.n_trees = 0;
        assert!(train(ModelKind::RandomForest, &x, &[0, 1], 2, &c).is_err());
        let mut c = small_config();
        c.mlp.hidden = vec![0];
        assert!(train(ModelKind::Mlp, &x, &[0, 1], 2, &c).is_err());
        let mut c = small_config();
        c.knn.k = 0;
        assert!(train(ModelKind::Knn, &x, &[0, 1], 2, &c).is_err());
    }

    #[test]
    fn shape_checks() {
        let x = Matrix::column(&[0.0, 1.0]);
        let m = train(ModelKind::DecisionTree, &x, &[0, 1], 2, &small_config()).unwrap();
        assert!(matches!(
            m.predict(&Matrix::zeros(1, 2)),
            Err(Error::Shape { .. })
        ));
        assert!(train(ModelKind::DecisionTree, &x, &[0], 2, &small_config()).is_err());
        assert!(train(ModelKind::DecisionTree, &x, &[0, 3], 2, &small_config()).is_err());
    }

    #[test]
    fn save_and_load_every_kind() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0], [4.0, 4.0], [5.0, 3.0]])
            .unwrap();
        let y = [0, 0, 1, 1, 2, 2];
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            let m = train(kind, &x, &y, 3, &small_config()).unwrap();
            let path = dir.path().join(format!("{kind}.json"));
            m.save(&path).unwrap();
            let back = Model::load(&path).unwrap();
            assert_eq!(back.kind, kind);
            assert_eq!(m.predict_scores(&x).unwrap(), back.predict_scores(&x).unwrap());
        }
        assert!(Model::from_json(r#"{"format":"other","version":1,"model":null}"#).is_err());
    }
}
