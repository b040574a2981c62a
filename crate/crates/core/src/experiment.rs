//! Cross-validated experiments: standardize, optionally balance, split into
//! folds, train every requested model per fold and aggregate the metrics.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, argmax, ModelKind, TrainConfig};
use crate::data::{
    class_distribution_n, load_dataset, ClassDistribution, Dataset, EncodeOptions, LoadOptions, Task,
};
use crate::error::{Error, Result};
use crate::evaluate::{self, Averaging, ConfusionMatrix, MetricsReport, RocCurve};
use crate::matrix::Matrix;
use crate::preprocess::{fit_standardizer, fit_standardizer_with, StandardizerParams, StdDenominator};
use crate::resample::{smote_tomek, Balanced, RemovalPolicy, ResampleReport, SmoteParams, SmoteTomekParams};
use crate::rng;

pub const REPORT_FORMAT: &str = "wsnids-report";
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    /// Original class distribution (WoSTL).
    None,
    /// SMOTE followed by Tomek-link removal (WiSTL).
    SmoteTomek,
}

impl std::str::FromStr for Balance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "none" | "wostl" => Ok(Balance::None),
            "smotetomek" | "wistl" => Ok(Balance::SmoteTomek),
            other => Err(Error::InvalidConfig(format!("unknown balance mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Balance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Balance::None => "none",
            Balance::SmoteTomek => "smotetomek",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageMode {
    /// Standardize and balance the full dataset, then split.
    #[default]
    PaperFaithful,
    /// Split first; standardizer and balancing see the training fold only.
    Strict,
}

impl std::str::FromStr for LeakageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "paper_faithful" | "paper" => Ok(LeakageMode::PaperFaithful),
            "strict" => Ok(LeakageMode::Strict),
            other => Err(Error::InvalidConfig(format!("unknown leakage mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for LeakageMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LeakageMode::PaperFaithful => "paper_faithful",
            LeakageMode::Strict => "strict",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub load: LoadOptions,
    pub encode: EncodeOptions,
    pub task: Task,
    pub balance: Balance,
    pub models: Vec<ModelKind>,
    pub folds: usize,
    pub shuffle: bool,
    pub stratified: bool,
    pub seed: u64,
    pub leakage_mode: LeakageMode,
    pub k_neighbors: usize,
    pub policy: RemovalPolicy,
    pub std_denominator: StdDenominator,
    /// `None` picks binary-positive for two classes and macro otherwise.
    pub averaging: Option<Averaging>,
    /// Its `seed` field is ignored; per-fold seeds derive from `seed`.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            load: LoadOptions::default(),
            encode: EncodeOptions::default(),
            task: Task::Binary,
            balance: Balance::None,
            models: ModelKind::ALL.to_vec(),
            folds: 10,
            shuffle: true,
            stratified: false,
            seed: 42,
            leakage_mode: LeakageMode::PaperFaithful,
            k_neighbors: crate::resample::DEFAULT_K_NEIGHBORS,
            policy: RemovalPolicy::Both,
            std_denominator: StdDenominator::Population,
            averaging: None,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be at least 2".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("model list is empty".into()));
        }
        let distinct: BTreeSet<_> = self.models.iter().map(|m| m.short_name()).collect();
        if distinct.len() != self.models.len() {
            return Err(Error::InvalidConfig("model list has duplicates".into()));
        }
        if self.k_neighbors == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be at least 1".into()));
        }
        for &kind in &self.models {
            self.train.validate(kind)?;
        }
        Ok(())
    }

    pub fn averaging_for(&self, n_classes: usize) -> Averaging {
        self.averaging.unwrap_or(Averaging::default_for(n_classes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Plain k-fold. With `shuffle` the ids are permuted by the seeded stream
/// before slicing; the first `n % folds` test sets get one extra id. Both id
/// lists are sorted.
pub fn split_folds(n_rows: usize, folds: usize, shuffle: bool, seed: u64) -> Result<Vec<Fold>> {
    check_fold_count(n_rows, folds)?;
    let mut ids: Vec<usize> = (0..n_rows).collect();
    if shuffle {
        ids.shuffle(&mut rng::stream(seed, &[rng::tag("folds")]));
    }
    let (base, extra) = (n_rows / folds, n_rows % folds);
    let mut assignment = vec![0; n_rows];
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        for &id in &ids[start..start + size] {
            assignment[id] = f;
        }
        start += size;
    }
    Ok(folds_from_assignment(&assignment, folds))
}

/// Every class is shuffled on its own and dealt round-robin, continuing
/// across classes, so fold sizes still differ by at most one.
pub fn split_folds_stratified(labels: &[usize], folds: usize, shuffle: bool, seed: u64) -> Result<Vec<Fold>> {
    check_fold_count(labels.len(), folds)?;
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if shuffle {
            ids.shuffle(&mut rng::stream(seed, &[rng::tag("stratified-folds"), c as u64]));
        }
        for id in ids {
            assignment[id] = next % folds;
            next += 1;
        }
    }
    Ok(folds_from_assignment(&assignment, folds))
}

fn check_fold_count(n_rows: usize, folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(Error::InvalidConfig("folds must be at least 2".into()));
    }
    if folds > n_rows {
        return Err(Error::InvalidConfig(format!("{folds} folds requested for {n_rows} rows")));
    }
    Ok(())
}

fn folds_from_assignment(assignment: &[usize], folds: usize) -> Vec<Fold> {
    (0..folds)
        .map(|f| {
            let (test, train) = (0..assignment.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    AllRows,
    TrainingFold,
}

/// Which rows each fitted preprocessing step saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub standardizer: FitScope,
    pub balancing: Option<FitScope>,
    /// Rows of this fold's test set that some fitted step (standardizer,
    /// resampler or model) also saw during fitting.
    pub test_rows_seen_by_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ModelOutcome {
    Ok { metrics: MetricsReport },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFoldResult {
    pub model: ModelKind,
    #[serde(flatten)]
    pub outcome: ModelOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub test_distribution: ClassDistribution,
    pub provenance: FitProvenance,
    /// Strict mode only.
    pub standardizer: Option<StandardizerParams>,
    /// Strict mode with balancing only.
    pub resample: Option<ResampleReport>,
    pub models: Vec<ModelFoldResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Mean over the folds that have an AUC.
    pub auc: Option<f64>,
}

/// Unweighted arithmetic mean of each metric.
pub fn aggregate_folds(folds: &[MetricsReport]) -> Result<MeanMetrics> {
    if folds.is_empty() {
        return Err(Error::Empty("fold metrics"));
    }
    let n = folds.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| folds.iter().map(f).sum::<f64>() / n;
    let aucs: Vec<f64> = folds.iter().filter_map(|m| m.auc).collect();
    Ok(MeanMetrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        mae: mean(|m| m.mae),
        mse: mean(|m| m.mse),
        rmse: mean(|m| m.rmse),
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub folds_ok: usize,
    pub folds_failed: usize,
    /// Mean of the per-fold metrics.
    pub mean: Option<MeanMetrics>,
    /// Metrics of the out-of-fold predictions pooled over all folds.
    pub pooled: Option<MetricsReport>,
    pub roc_file: Option<String>,
    pub confusion_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package_version: String,
    pub target_os: String,
    pub target_arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            package_version: env!("CARGO_PKG_VERSION").into(),
            target_os: std::env::consts::OS.into(),
            target_arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub distribution: ClassDistribution,
    /// FNV-1a over the feature bits and labels.
    pub fingerprint: String,
}

impl DatasetSummary {
    pub fn of(ds: &Dataset) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: [u8; 8]| {
            for b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for &x in ds.features.as_slice() {
            eat(x.to_bits().to_le_bytes());
        }
        for &y in &ds.labels {
            eat((y as u64).to_le_bytes());
        }
        Self {
            n_rows: ds.n_rows(),
            n_features: ds.n_features(),
            feature_names: ds.feature_names.clone(),
            class_names: ds.label_map.classes.clone(),
            distribution: ds.distribution(),
            fingerprint: format!("{h:016x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub environment: Environment,
    pub dataset: DatasetSummary,
    /// Paper-faithful mode only; fitted on every row.
    pub standardizer: Option<StandardizerParams>,
    /// Paper-faithful mode with balancing only.
    pub resample: Option<ResampleReport>,
    pub folds: Vec<FoldResult>,
    pub summary: Vec<ModelSummary>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn model_summary(&self, kind: ModelKind) -> Option<&ModelSummary> {
        self.summary.iter().find(|s| s.model == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTiming {
    pub fold: usize,
    pub model: ModelKind,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

/// Wall-clock data, kept out of the report so the report stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub threads: usize,
    pub total_seconds: f64,
    pub preprocess_seconds: f64,
    pub units: Vec<UnitTiming>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub timings: Timings,
    /// Pooled out-of-fold ROC curves per model, in `config.models` order.
    pub roc: Vec<(ModelKind, Vec<Option<RocCurve>>)>,
}

/// SMOTE seed used for a run seeded with `seed`.
pub fn smote_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, &[rng::tag("smote")])
}

/// Balances the way a paper-faithful run does: standardize, SMOTE-Tomek,
/// then map the rows back to the input scale.
pub fn balance_dataset(ds: &Dataset, seed: u64, k_neighbors: usize, policy: RemovalPolicy) -> Result<Balanced> {
    let params = fit_standardizer(&ds.features)?;
    let x = params.transform(&ds.features)?;
    let mut b = smote_tomek(
        &x,
        &ds.labels,
        &SmoteTomekParams {
            smote: SmoteParams {
                k_neighbors,
                target: None,
                seed: smote_seed(seed),
            },
            policy,
        },
    )?;
    b.features = params.inverse_transform(&b.features)?;
    Ok(b)
}

/// Loads `config.data` and runs the experiment on it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("no data path given".into()))?;
    config.validate()?;
    let ds = load_dataset(path, &config.load, config.task, &config.encode)?;
    run_on_dataset(&ds, config)
}

struct UnitResult {
    outcome: ModelOutcome,
    truth: Vec<usize>,
    pred: Vec<usize>,
    scores: Vec<Vec<f64>>,
    timing: UnitTiming,
}

struct FoldData {
    train_x: Matrix,
    train_y: Vec<usize>,
    test_x: Matrix,
    test_y: Vec<usize>,
}

pub fn run_on_dataset(ds: &Dataset, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let started = Instant::now();
    let n_classes = ds.n_classes();
    let averaging = config.averaging_for(n_classes);
    let smote_params = |seed| SmoteTomekParams {
        smote: SmoteParams {
            k_neighbors: config.k_neighbors,
            target: None,
            seed,
        },
        policy: config.policy,
    };
    let smote_seed = smote_seed(config.seed);

    // Paper-faithful: standardize, balance, then split the resulting rows.
    let (base_x, base_y, standardizer, resample) = match config.leakage_mode {
        LeakageMode::PaperFaithful => {
            let params = fit_standardizer_with(&ds.features, config.std_denominator)?;
            let x = params.transform(&ds.features)?;
            match config.balance {
                Balance::None => (x, ds.labels.clone(), Some(params), None),
                Balance::SmoteTomek => {
                    let b = smote_tomek(&x, &ds.labels, &smote_params(smote_seed))?;
                    (b.features, b.labels, Some(params), Some(b.report))
                }
            }
        }
        LeakageMode::Strict => (ds.features.clone(), ds.labels.clone(), None, None),
    };
    let preprocess_seconds = started.elapsed().as_secs_f64();

    let folds = if config.stratified {
        split_folds_stratified(&base_y, config.folds, config.shuffle, config.seed)?
    } else {
        split_folds(base_y.len(), config.folds, config.shuffle, config.seed)?
    };

    let per_fold: Vec<(FoldResult, Vec<UnitResult>)> = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| -> Result<_> {
            let mut train_x = base_x.select_rows(&fold.train);
            let mut train_y: Vec<usize> = fold.train.iter().map(|&i| base_y[i]).collect();
            let mut test_x = base_x.select_rows(&fold.test);
            let test_y: Vec<usize> = fold.test.iter().map(|&i| base_y[i]).collect();

            let (provenance, fold_std, fold_resample) = match config.leakage_mode {
                LeakageMode::PaperFaithful => (
                    FitProvenance {
                        standardizer: FitScope::AllRows,
                        balancing: (config.balance == Balance::SmoteTomek).then_some(FitScope::AllRows),
                        test_rows_seen_by_fit: true,
                    },
                    None,
                    None,
                ),
                LeakageMode::Strict => {
                    let params = fit_standardizer_with(&train_x, config.std_denominator)?;
                    train_x = params.transform(&train_x)?;
                    test_x = params.transform(&test_x)?;
                    let mut report = None;
                    if config.balance == Balance::SmoteTomek {
                        let seed = rng::derive_seed(smote_seed, &[f as u64]);
                        let b = smote_tomek(&train_x, &train_y, &smote_params(seed))?;
                        train_x = b.features;
                        train_y = b.labels;
                        report = Some(b.report);
                    }
                    let disjoint = fold.train.iter().all(|&i| fold.test.binary_search(&i).is_err());
                    (
                        FitProvenance {
                            standardizer: FitScope::TrainingFold,
                            balancing: report.as_ref().map(|_| FitScope::TrainingFold),
                            test_rows_seen_by_fit: !disjoint,
                        },
                        Some(params),
                        report,
                    )
                }
            };

            let data = FoldData {
                train_x,
                train_y,
                test_x,
                test_y,
            };
            let units: Vec<UnitResult> = config
                .models
                .par_iter()
                .map(|&kind| run_unit(&data, f, kind, n_classes, averaging, config))
                .collect();
            let result = FoldResult {
                fold: f,
                n_train: data.train_y.len(),
                n_test: data.test_y.len(),
                test_distribution: class_distribution_n(&data.test_y, n_classes),
                provenance,
                standardizer: fold_std,
                resample: fold_resample,
                models: units
                    .iter()
                    .zip(&config.models)
                    .map(|(u, &model)| ModelFoldResult {
                        model,
                        outcome: u.outcome.clone(),
                    })
                    .collect(),
            };
            Ok((result, units))
        })
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let mut summary = Vec::new();
    let mut roc = Vec::new();
    for (m, &kind) in config.models.iter().enumerate() {
        let mut fold_metrics = Vec::new();
        let (mut truth, mut pred, mut scores) = (Vec::new(), Vec::new(), Vec::new());
        let mut failed = 0;
        for (fold, units) in &per_fold {
            let u = &units[m];
            match &u.outcome {
                ModelOutcome::Ok { metrics } => {
                    fold_metrics.push(metrics.clone());
                    truth.extend_from_slice(&u.truth);
                    pred.extend_from_slice(&u.pred);
                    scores.extend(u.scores.iter().cloned());
                }
                ModelOutcome::Failed { error } => {
                    failed += 1;
                    warnings.push(format!("{kind} failed on fold {}: {error}", fold.fold));
                }
            }
        }
        let name = kind.short_name().to_ascii_lowercase();
        let (mean, pooled, files) = if fold_metrics.is_empty() {
            (None, None, (None, None))
        } else {
            let ev = evaluate::evaluate(&truth, &pred, Some(&scores), n_classes, averaging)?;
            roc.push((kind, ev.roc));
            (
                Some(aggregate_folds(&fold_metrics)?),
                Some(ev.report),
                (Some(format!("roc_{name}.csv")), Some(format!("confusion_{name}.csv"))),
            )
        };
        summary.push(ModelSummary {
            model: kind,
            folds_ok: fold_metrics.len(),
            folds_failed: failed,
            mean,
            pooled,
            roc_file: files.0,
            confusion_file: files.1,
        });
    }
    for (fold, _) in &per_fold {
        for c in 0..n_classes {
            if ds.distribution().count(c) > 0 && fold.test_distribution.count(c) == 0 {
                warnings.push(format!(
                    "fold {} has no test rows of class {}",
                    fold.fold,
                    ds.label_map.name(c).unwrap_or("?")
                ));
            }
        }
    }

    let mut timings: Vec<UnitTiming> = per_fold
        .iter()
        .flat_map(|(_, units)| units.iter().map(|u| u.timing.clone()))
        .collect();
    timings.sort_by_key(|t| (t.fold, t.model.short_name()));

    let mut echo = config.clone();
    echo.averaging = Some(averaging);
    echo.train.seed = config.seed;
    Ok(ExperimentOutput {
        report: ExperimentReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_FORMAT_VERSION,
            config: echo,
            environment: Environment::current(),
            dataset: DatasetSummary::of(ds),
            standardizer,
            resample,
            folds: per_fold.into_iter().map(|(r, _)| r).collect(),
            summary,
            warnings,
        },
        timings: Timings {
            threads: rayon::current_num_threads(),
            total_seconds: started.elapsed().as_secs_f64(),
            preprocess_seconds,
            units: timings,
        },
        roc,
    })
}

fn run_unit(
    data: &FoldData,
    fold: usize,
    kind: ModelKind,
    n_classes: usize,
    averaging: Averaging,
    config: &ExperimentConfig,
) -> UnitResult {
    let mut train_cfg = config.train.clone();
    train_cfg.seed = rng::derive_seed(config.seed, &[rng::tag("fold"), fold as u64]);
    let t0 = Instant::now();
    let model = classifiers::train(kind, &data.train_x, &data.train_y, n_classes, &train_cfg);
    let train_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let result = model.and_then(|m| {
        let scores = m.predict_scores(&data.test_x)?;
        let pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
        let ev = evaluate::evaluate(&data.test_y, &pred, Some(&scores), n_classes, averaging)?;
        Ok((scores, pred, ev.report))
    });
    let timing = UnitTiming {
        fold,
        model: kind,
        train_seconds,
        predict_seconds: t1.elapsed().as_secs_f64(),
    };
    match result {
        Ok((scores, pred, metrics)) => UnitResult {
            outcome: ModelOutcome::Ok { metrics },
            truth: data.test_y.clone(),
            pred,
            scores,
            timing,
        },
        Err(e) => UnitResult {
            outcome: ModelOutcome::Failed { error: e.to_string() },
            truth: Vec::new(),
            pred: Vec::new(),
            scores: Vec::new(),
            timing,
        },
    }
}

/// Compares a balanced run against an unbalanced one on the same data and
/// returns a warning for every model whose fold-mean F1 dropped.
pub fn directional_warnings(wostl: &ExperimentReport, wistl: &ExperimentReport) -> Vec<String> {
    let mut out = Vec::new();
    for s in &wistl.summary {
        let (Some(with), Some(without)) = (
            s.mean.as_ref(),
            wostl.model_summary(s.model).and_then(|w| w.mean.as_ref()),
        ) else {
            continue;
        };
        if with.f1 < without.f1 {
            out.push(format!(
                "{}: F1 with balancing ({:.4}) is below F1 without ({:.4})",
                s.model, with.f1, without.f1
            ));
        }
    }
    out
}

/// Writes `report.json`, `timings.json`, per-model ROC and confusion CSVs
/// and `metrics.csv` into `dir`.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    let report = &output.report;
    write("report.json", report.to_json()?.as_bytes())?;
    let mut timings = serde_json::to_string_pretty(&output.timings)?;
    timings.push('\n');
    write("timings.json", timings.as_bytes())?;

    let names = &report.dataset.class_names;
    for s in &report.summary {
        if let (Some(file), Some(pooled)) = (&s.confusion_file, &s.pooled) {
            let mut buf = Vec::new();
            evaluate::write_confusion_csv(&mut buf, &pooled.confusion, names)?;
            write(file, &buf)?;
        }
        if let (Some(file), Some((_, curves))) = (&s.roc_file, output.roc.iter().find(|(k, _)| *k == s.model)) {
            let mut buf = Vec::new();
            evaluate::write_roc_csv(&mut buf, curves, names)?;
            write(file, &buf)?;
        }
    }
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, report)?;
    write("metrics.csv", &buf)
}

/// Bar-chart data: `model,metric,fold_mean,pooled`.
pub fn write_metrics_csv<W: std::io::Write>(w: W, report: &ExperimentReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "metric", "fold_mean", "pooled"])?;
    for s in &report.summary {
        let (Some(mean), Some(pooled)) = (&s.mean, &s.pooled) else {
            continue;
        };
        let rows = [
            ("accuracy", Some(mean.accuracy), Some(pooled.accuracy)),
            ("precision", Some(mean.precision), Some(pooled.precision)),
            ("recall", Some(mean.recall), Some(pooled.recall)),
            ("f1", Some(mean.f1), Some(pooled.f1)),
            ("mae", Some(mean.mae), Some(pooled.mae)),
            ("mse", Some(mean.mse), Some(pooled.mse)),
            ("rmse", Some(mean.rmse), Some(pooled.rmse)),
            ("auc", mean.auc, pooled.auc),
        ];
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (metric, m, p) in rows {
            out.write_record([s.model.short_name().to_string(), metric.to_string(), fmt(m), fmt(p)])?;
        }
    }
    out.flush().map_err(|e| Error::io("<metrics csv>", e))?;
    Ok(())
}

/// Pools the confusion matrices of every successful fold for one model.
pub fn pooled_confusion(report: &ExperimentReport, kind: ModelKind) -> Option<ConfusionMatrix> {
    let mut acc: Option<ConfusionMatrix> = None;
    for fold in &report.folds {
        for r in fold.models.iter().filter(|r| r.model == kind) {
            if let ModelOutcome::Ok { metrics } = &r.outcome {
                match &mut acc {
                    Some(cm) => cm.add(&metrics.confusion).ok()?,
                    None => acc = Some(metrics.confusion.clone()),
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelMap;
    use rand::{Rng, SeedableRng};

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = usize::from(i % 4 == 0);
            let shift = if y == 1 { 2.5 } else { 0.0 };
            rows.push(vec![r.gen::<f64>() + shift, r.gen::<f64>() * 3.0, r.gen::<f64>() - shift]);
            labels.push(y);
        }
        Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            labels,
            vec!["a".into(), "b".into(), "c".into()],
            LabelMap::binary(),
        )
        .unwrap()
    }

    fn quick_config() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            folds: 3,
            models: vec![ModelKind::DecisionTree, ModelKind::Knn],
            ..Default::default()
        };
        c.train.rf.n_trees = 5;
        c
    }

    #[test]
    fn fold_sizes() {
        let f = split_folds(10, 3, true, 1).unwrap();
        let sizes: Vec<usize> = f.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let f = split_folds(10, 10, true, 1).unwrap();
        assert!(f.iter().all(|f| f.test.len() == 1 && f.train.len() == 9));
        let mut all: Vec<usize> = f.iter().flat_map(|f| f.test.clone()).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_folds(57, 10, true, 9).unwrap(), split_folds(57, 10, true, 9).unwrap());
        assert_ne!(split_folds(57, 10, true, 9).unwrap(), split_folds(57, 10, true, 10).unwrap());
        assert!(split_folds(3, 4, true, 0).is_err());
        assert!(split_folds(3, 1, true, 0).is_err());
    }

    #[test]
    fn unshuffled_folds_are_contiguous() {
        let f = split_folds(7, 3, false, 0).unwrap();
        assert_eq!(f[0].test, vec![0, 1, 2]);
        assert_eq!(f[1].test, vec![3, 4]);
        assert_eq!(f[2].test, vec![5, 6]);
    }

    #[test]
    fn stratified_folds_spread_classes() {
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i < 5)).collect();
        let f = split_folds_stratified(&labels, 5, true, 3).unwrap();
        for fold in &f {
            assert_eq!(fold.test.len(), 8);
            assert_eq!(fold.test.iter().filter(|&&i| labels[i] == 1).count(), 1);
        }
    }

    #[test]
    fn aggregate() {
        let ev = |acc_pred: &[usize]| {
            evaluate::evaluate(&[0, 1], acc_pred, None, 2, Averaging::BinaryPositive)
                .unwrap()
                .report
        };
        let a = ev(&[0, 1]);
        let b = ev(&[0, 0]);
        let m = aggregate_folds(&[a.clone(), b]).unwrap();
        assert_eq!(m.accuracy, 75.0);
        assert_eq!(aggregate_folds(std::slice::from_ref(&a)).unwrap().accuracy, a.accuracy);
        assert!(aggregate_folds(&[]).is_err());
    }

    #[test]
    fn std_denominator_reaches_standardizer() {
        let ds = toy(30, 2);
        let pop = run_on_dataset(&ds, &quick_config()).unwrap().report;
        let cfg = ExperimentConfig { std_denominator: StdDenominator::Sample, ..quick_config() };
        let smp = run_on_dataset(&ds, &cfg).unwrap().report;
        let (p, s) = (pop.standardizer.unwrap(), smp.standardizer.unwrap());
        let ratio = s.std[0] / p.std[0];
        assert!((ratio - (30.0f64 / 29.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn report_means_match_folds() {
        let ds = toy(90, 5);
        let out = run_on_dataset(&ds, &quick_config()).unwrap();
        let r = &out.report;
        assert_eq!(r.folds.len(), 3);
        for (m, s) in r.summary.iter().enumerate() {
            let per: Vec<f64> = r
                .folds
                .iter()
                .map(|f| match &f.models[m].outcome {
                    ModelOutcome::Ok { metrics } => metrics.accuracy,
                    ModelOutcome::Failed { .. } => panic!("unit failed"),
                })
                .collect();
            let mean = per.iter().sum::<f64>() / per.len() as f64;
            assert!((mean - s.mean.unwrap().accuracy).abs() < 1e-9);
            let pooled = s.pooled.as_ref().unwrap();
            assert_eq!(pooled.n_samples, 90);
            assert_eq!(pooled_confusion(r, s.model).unwrap(), pooled.confusion);
            assert!((pooled.rmse - (pooled.mse * 100.0).sqrt()).abs() < 1e-9);
        }
        assert_eq!(out.roc.len(), 2);
    }

    #[test]
    fn strict_mode_provenance() {
        let ds = toy(80, 2);
        let mut cfg = quick_config();
        cfg.leakage_mode = LeakageMode::Strict;
        cfg.balance = Balance::SmoteTomek;
        let r = run_on_dataset(&ds, &cfg).unwrap().report;
        assert!(r.standardizer.is_none() && r.resample.is_none());
        for f in &r.folds {
            assert!(!f.provenance.test_rows_seen_by_fit);
            assert_eq!(f.provenance.standardizer, FitScope::TrainingFold);
            let rep = f.resample.as_ref().unwrap();
            assert_eq!(rep.after.total, f.n_train);
        }
        cfg.leakage_mode = LeakageMode::PaperFaithful;
        let r = run_on_dataset(&ds, &cfg).unwrap().report;
        assert!(r.folds.iter().all(|f| f.provenance.test_rows_seen_by_fit));
        let total: usize = r.folds.iter().map(|f| f.n_test).sum();
        assert_eq!(total, r.resample.as_ref().unwrap().after.total);
    }

    #[test]
    fn unit_failure_is_recorded() {
        let data = FoldData {
            train_x: Matrix::column(&[0.0, 1.0, 2.0]),
            train_y: vec![0, 1, 1],
            // Wrong width: prediction fails.
            test_x: Matrix::from_rows(&[[0.0, 0.0]]).unwrap(),
            test_y: vec![0],
        };
        let cfg = quick_config();
        let u = run_unit(&data, 0, ModelKind::DecisionTree, 2, Averaging::BinaryPositive, &cfg);
        assert!(matches!(u.outcome, ModelOutcome::Failed { .. }));
        assert!(u.truth.is_empty());
    }

    #[test]
    fn config_validation() {
        let mut c = quick_config();
        c.folds = 1;
        assert!(c.validate().is_err());
        let mut c = quick_config();
        c.models.clear();
        assert!(c.validate().is_err());
        let mut c = quick_config();
        c.models = vec![ModelKind::Knn, ModelKind::Knn];
        assert!(c.validate().is_err());
    }

    #[test]
    fn same_seed_same_report() {
        let ds = toy(60, 8);
        let cfg = quick_config();
        let a = run_on_dataset(&ds, &cfg).unwrap().report.to_json().unwrap();
        let b = run_on_dataset(&ds, &cfg).unwrap().report.to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balance_matches_run() {
        let ds = toy(70, 4);
        let mut cfg = quick_config();
        cfg.balance = Balance::SmoteTomek;
        let r = run_on_dataset(&ds, &cfg).unwrap().report;
        let b = balance_dataset(&ds, cfg.seed, cfg.k_neighbors, cfg.policy).unwrap();
        assert_eq!(&b.report, r.resample.as_ref().unwrap());
        // Original rows come back at their input scale.
        let kept = b.features.row(0);
        assert!(kept.iter().zip(ds.features.row(0)).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("WiSTL".parse::<Balance>().unwrap(), Balance::SmoteTomek);
        assert_eq!("smote-tomek".parse::<Balance>().unwrap(), Balance::SmoteTomek);
        assert_eq!("paper-faithful".parse::<LeakageMode>().unwrap(), LeakageMode::PaperFaithful);
        assert!("lax".parse::<LeakageMode>().is_err());
    }
}
