//! Flat run settings shared by command-line flags and the TOML config file.
//! Keys in the file are the flag names without the leading dashes.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use wsnids_core::classifiers::{MaxFeatures, ModelKind, Optimizer, TrainConfig};
use wsnids_core::data::{EncodeOptions, LoadOptions, Task};
use wsnids_core::evaluate::Averaging;
use wsnids_core::experiment::{Balance, ExperimentConfig, LeakageMode};
use wsnids_core::resample::RemovalPolicy;

use crate::CliError;

pub const CONFIG_ENV: &str = "WSNIDS_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// binary | multiclass
    #[arg(long)]
    pub task: Option<String>,
    /// none | smotetomek | both
    #[arg(long)]
    pub balance: Option<String>,
    /// Comma-separated subset of dt,rf,mlp,knn,lgb,xgb, or `all`.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// both | majority_only
    #[arg(long)]
    pub policy: Option<String>,
    /// paper-faithful | strict
    #[arg(long)]
    pub leakage_mode: Option<String>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// population | sample
    #[arg(long)]
    pub std_denominator: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shuffle: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub stratified: Option<bool>,
    /// macro | weighted | binary-positive
    #[arg(long)]
    pub averaging: Option<String>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Comma-separated column names to ignore.
    #[arg(long)]
    pub drop_columns: Option<String>,
    #[arg(long)]
    pub normal_class: Option<String>,

    /// 0 means unlimited.
    #[arg(long)]
    pub dt_max_depth: Option<usize>,
    #[arg(long)]
    pub dt_min_samples_split: Option<usize>,
    #[arg(long)]
    pub dt_min_samples_leaf: Option<usize>,

    #[arg(long)]
    pub rf_trees: Option<usize>,
    /// 0 means unlimited.
    #[arg(long)]
    pub rf_max_depth: Option<usize>,
    /// sqrt | all | <count>
    #[arg(long)]
    pub rf_max_features: Option<String>,
    #[arg(long)]
    pub rf_bootstrap: Option<bool>,

    #[arg(long)]
    pub knn_k: Option<usize>,

    /// Comma-separated hidden layer widths.
    #[arg(long)]
    pub mlp_hidden: Option<String>,
    #[arg(long)]
    pub mlp_learning_rate: Option<f64>,
    #[arg(long)]
    pub mlp_epochs: Option<usize>,
    #[arg(long)]
    pub mlp_batch_size: Option<usize>,
    /// adam | sgd
    #[arg(long)]
    pub mlp_optimizer: Option<String>,

    #[arg(long)]
    pub xgb_rounds: Option<usize>,
    #[arg(long)]
    pub xgb_learning_rate: Option<f64>,
    /// 0 means unlimited.
    #[arg(long)]
    pub xgb_max_depth: Option<usize>,
    #[arg(long)]
    pub xgb_lambda: Option<f64>,
    #[arg(long)]
    pub xgb_min_child_weight: Option<f64>,

    #[arg(long)]
    pub lgb_rounds: Option<usize>,
    #[arg(long)]
    pub lgb_learning_rate: Option<f64>,
    /// 0 means unlimited.
    #[arg(long)]
    pub lgb_max_leaves: Option<usize>,
    /// 0 means unlimited.
    #[arg(long)]
    pub lgb_max_depth: Option<usize>,
    #[arg(long)]
    pub lgb_lambda: Option<f64>,
    #[arg(long)]
    pub lgb_min_child_weight: Option<f64>,
    #[arg(long)]
    pub lgb_max_bins: Option<usize>,
}

/// Modes selected by `balance`.
pub fn balance_modes(s: &str) -> Result<Vec<Balance>, CliError> {
    if s.trim().eq_ignore_ascii_case("both") {
        Ok(vec![Balance::None, Balance::SmoteTomek])
    } else {
        Ok(vec![s.parse()?])
    }
}

fn limit(v: usize) -> Option<usize> {
    (v > 0).then_some(v)
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
}

impl Settings {
    pub fn read_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Values set here win over `base`.
    pub fn over(&self, base: &Settings) -> Result<Settings, CliError> {
        let to_table = |s: &Settings| {
            toml::Table::try_from(s).map_err(|e| CliError::Internal(format!("settings: {e}")))
        };
        let mut merged = to_table(base)?;
        merged.extend(to_table(self)?);
        merged
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Internal(format!("settings: {e}")))
    }

    /// Flags over the file named by `--config` or the config env var.
    pub fn resolve(&self, config: Option<&Path>) -> Result<Settings, CliError> {
        match config {
            Some(path) => self.over(&Settings::read_file(path)?),
            None => Ok(self.clone()),
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Internal(format!("settings: {e}")))
    }

    pub fn task(&self) -> Result<Task, CliError> {
        Ok(self.task.as_deref().unwrap_or("binary").parse()?)
    }

    pub fn load_options(&self) -> LoadOptions {
        let mut o = LoadOptions::default();
        if let Some(c) = &self.label_column {
            o.label_column = c.clone();
        }
        if let Some(d) = &self.drop_columns {
            o.drop_columns = list(d);
        }
        o
    }

    pub fn encode_options(&self) -> EncodeOptions {
        let mut o = EncodeOptions::default();
        if let Some(n) = &self.normal_class {
            o.normal_class = n.clone();
        }
        o
    }

    pub fn policy(&self) -> Result<RemovalPolicy, CliError> {
        Ok(match &self.policy {
            Some(p) => p.parse()?,
            None => RemovalPolicy::default(),
        })
    }

    /// Builds the experiment config for one balance mode.
    pub fn experiment(&self, balance: Balance) -> Result<ExperimentConfig, CliError> {
        let mut c = ExperimentConfig {
            data: self.data.clone(),
            load: self.load_options(),
            encode: self.encode_options(),
            task: self.task()?,
            balance,
            policy: self.policy()?,
            ..Default::default()
        };
        if let Some(m) = &self.models {
            c.models = ModelKind::parse_list(m)?;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.leakage_mode {
            c.leakage_mode = v.parse::<LeakageMode>()?;
        }
        if let Some(v) = self.k_neighbors {
            c.k_neighbors = v;
        }
        if let Some(v) = &self.std_denominator {
            c.std_denominator = v.parse()?;
        }
        if let Some(v) = self.shuffle {
            c.shuffle = v;
        }
        if let Some(v) = self.stratified {
            c.stratified = v;
        }
        if let Some(v) = &self.averaging {
            c.averaging = Some(v.parse::<Averaging>()?);
        }
        self.apply_train(&mut c.train)?;
        c.validate()?;
        Ok(c)
    }

    fn apply_train(&self, t: &mut TrainConfig) -> Result<(), CliError> {
        if let Some(v) = self.dt_max_depth {
            t.dt.max_depth = limit(v);
        }
        if let Some(v) = self.dt_min_samples_split {
            t.dt.min_samples_split = v;
        }
        if let Some(v) = self.dt_min_samples_leaf {
            t.dt.min_samples_leaf = v;
        }

        if let Some(v) = self.rf_trees {
            t.rf.n_trees = v;
        }
        if let Some(v) = self.rf_max_depth {
            t.rf.tree.max_depth = limit(v);
        }
        if let Some(v) = &self.rf_max_features {
            t.rf.max_features = match v.trim().to_ascii_lowercase().as_str() {
                "sqrt" => MaxFeatures::Sqrt,
                "all" => MaxFeatures::All,
                n => MaxFeatures::Count(n.parse().map_err(|_| {
                    CliError::Config(format!("rf-max-features: expected sqrt, all or a count, got `{v}`"))
                })?),
            };
        }
        if let Some(v) = self.rf_bootstrap {
            t.rf.bootstrap = v;
        }

        if let Some(v) = self.knn_k {
            t.knn.k = v;
        }

        if let Some(v) = &self.mlp_hidden {
            t.mlp.hidden = list(v)
                .iter()
                .map(|w| w.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Config(format!("mlp-hidden: expected widths like 100 or 64,32, got `{v}`")))?;
        }
        if let Some(v) = self.mlp_learning_rate {
            t.mlp.learning_rate = v;
        }
        if let Some(v) = self.mlp_epochs {
            t.mlp.epochs = v;
        }
        if let Some(v) = self.mlp_batch_size {
            t.mlp.batch_size = v;
        }
        if let Some(v) = &self.mlp_optimizer {
            t.mlp.optimizer = match v.trim().to_ascii_lowercase().as_str() {
                "adam" => Optimizer::Adam,
                "sgd" => Optimizer::Sgd,
                _ => return Err(CliError::Config(format!("mlp-optimizer: expected adam or sgd, got `{v}`"))),
            };
        }

        if let Some(v) = self.xgb_rounds {
            t.xgb.rounds = v;
        }
        if let Some(v) = self.xgb_learning_rate {
            t.xgb.learning_rate = v;
        }
        if let Some(v) = self.xgb_max_depth {
            t.xgb.max_depth = limit(v);
        }
        if let Some(v) = self.xgb_lambda {
            t.xgb.lambda = v;
        }
        if let Some(v) = self.xgb_min_child_weight {
            t.xgb.min_child_weight = v;
        }

        if let Some(v) = self.lgb_rounds {
            t.lgb.rounds = v;
        }
        if let Some(v) = self.lgb_learning_rate {
            t.lgb.learning_rate = v;
        }
        if let Some(v) = self.lgb_max_leaves {
            t.lgb.max_leaves = limit(v);
        }
        if let Some(v) = self.lgb_max_depth {
            t.lgb.max_depth = limit(v);
        }
        if let Some(v) = self.lgb_lambda {
            t.lgb.lambda = v;
        }
        if let Some(v) = self.lgb_min_child_weight {
            t.lgb.min_child_weight = v;
        }
        if let Some(v) = self.lgb_max_bins {
            t.lgb.max_bins = v;
        }
        Ok(())
    }
}
