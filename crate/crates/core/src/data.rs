//! CSV ingestion, label encoding, and class distributions.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Label column used by the public WSN-DS release.
pub const DEFAULT_LABEL_COLUMN: &str = "Attack type";
pub const DEFAULT_NORMAL_CLASS: &str = "Normal";

/// Multiclass codes in fixed order. `Scheduling` is an alias of `TDMA`.
const MULTICLASS_NAMES: [&str; 5] = ["Normal", "Grayhole", "Blackhole", "TDMA", "Flooding"];
const MULTICLASS_ALIASES: [(&str, usize); 1] = [("scheduling", 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(Task::Binary),
            "multiclass" | "multi" => Ok(Task::Multiclass),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub label_column: String,
    pub drop_columns: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
            drop_columns: Vec::new(),
        }
    }
}

/// Features parsed from CSV with the label column still as raw strings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub features: Matrix,
    pub raw_labels: Vec<String>,
    pub feature_names: Vec<String>,
}

fn normalize(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Reads a headered CSV. Every column other than the label and the dropped
/// ones must be numeric; header names are matched trimmed and case-insensitively.
pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

pub fn read_csv<R: std::io::Read>(reader: R, options: &LoadOptions) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_key = normalize(&options.label_column);
    let label_idx = header
        .iter()
        .position(|h| normalize(h) == label_key)
        .ok_or_else(|| Error::MissingColumn(options.label_column.clone()))?;
    let dropped: Vec<String> = options.drop_columns.iter().map(|c| normalize(c)).collect();
    for (name, key) in options.drop_columns.iter().zip(&dropped) {
        if !header.iter().any(|h| normalize(h) == *key) {
            return Err(Error::MissingColumn(name.clone()));
        }
    }

    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx && !dropped.contains(&normalize(&header[j])))
        .collect();
    let feature_names: Vec<String> = feature_idx
        .iter()
        .map(|&j| header[j].trim().to_string())
        .collect();

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Ragged {
                row: line,
                expected: header.len(),
                found: record.len(),
            });
        }
        for &j in &feature_idx {
            let cell = &record[j];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: header[j].trim().to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: header[j].trim().to_string(),
                    value: cell.to_string(),
                });
            }
            data.push(v);
        }
        raw_labels.push(record[label_idx].to_string());
    }

    let features = Matrix::new(raw_labels.len(), feature_idx.len(), data)?;
    Ok(RawDataset {
        features,
        raw_labels,
        feature_names,
    })
}

/// Ordered class names; the position of a name is its integer code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub task: Task,
    pub classes: Vec<String>,
}

impl LabelMap {
    pub fn binary() -> Self {
        Self {
            task: Task::Binary,
            classes: vec![DEFAULT_NORMAL_CLASS.to_string(), "Attack".to_string()],
        }
    }

    pub fn multiclass() -> Self {
        Self {
            task: Task::Multiclass,
            classes: MULTICLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Binary => Self::binary(),
            Task::Multiclass => Self::multiclass(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn name(&self, code: usize) -> Option<&str> {
        self.classes.get(code).map(String::as_str)
    }

    pub fn decode(&self, codes: &[usize]) -> Result<Vec<String>> {
        codes
            .iter()
            .map(|&c| {
                self.name(c).map(str::to_string).ok_or(Error::LabelOutOfRange {
                    label: c,
                    n_classes: self.n_classes(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Raw name of the normal class for the binary task.
    pub normal_class: String,
    /// Extra multiclass names appended after the five built-in codes.
    pub extra_classes: Vec<String>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            normal_class: DEFAULT_NORMAL_CLASS.to_string(),
            extra_classes: Vec::new(),
        }
    }
}

pub fn encode_labels(raw: &[String], task: Task) -> Result<(Vec<usize>, LabelMap)> {
    encode_labels_with(raw, task, &EncodeOptions::default())
}

pub fn encode_labels_with(
    raw: &[String],
    task: Task,
    options: &EncodeOptions,
) -> Result<(Vec<usize>, LabelMap)> {
    match task {
        Task::Binary => {
            let normal = normalize(&options.normal_class);
            let labels = raw
                .iter()
                .map(|r| usize::from(normalize(r) != normal))
                .collect();
            let mut map = LabelMap::binary();
            map.classes[0] = options.normal_class.trim().to_string();
            Ok((labels, map))
        }
        Task::Multiclass => {
            let mut map = LabelMap::multiclass();
            map.classes
                .extend(options.extra_classes.iter().map(|c| c.trim().to_string()));
            let lookup = |name: &str| -> Option<usize> {
                let key = normalize(name);
                map.classes
                    .iter()
                    .position(|c| normalize(c) == key)
                    .or_else(|| {
                        MULTICLASS_ALIASES
                            .iter()
                            .find(|(alias, _)| *alias == key)
                            .map(|&(_, code)| code)
                    })
            };
            let labels = raw
                .iter()
                .map(|r| lookup(r).ok_or_else(|| Error::UnknownLabel(r.trim().to_string())))
                .collect::<Result<Vec<_>>>()?;
            Ok((labels, map))
        }
    }
}

/// Per-code counts; `counts[c]` is the number of rows labelled `c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ClassDistribution {
    pub fn count(&self, code: usize) -> usize {
        self.counts.get(code).copied().unwrap_or(0)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// Code of the largest class; ties go to the lowest code.
    pub fn majority(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        self.counts.iter().position(|&c| c == max)
    }
}

pub fn class_distribution(labels: &[usize]) -> Result<ClassDistribution> {
    let n_classes = labels.iter().max().map(|m| m + 1).ok_or(Error::Empty("labels"))?;
    Ok(class_distribution_n(labels, n_classes))
}

/// Counts over a fixed number of classes, so absent classes show up as zero.
pub fn class_distribution_n(labels: &[usize], n_classes: usize) -> ClassDistribution {
    let mut counts = vec![0usize; n_classes.max(labels.iter().max().map_or(0, |m| m + 1))];
    for &l in labels {
        counts[l] += 1;
    }
    ClassDistribution {
        counts,
        total: labels.len(),
    }
}

/// Encoded, immutable dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub label_map: LabelMap,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        label_map: LabelMap,
    ) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.n_rows(),
                right: labels.len(),
            });
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::Shape {
                expected: features.n_cols(),
                found: feature_names.len(),
            });
        }
        let n_classes = label_map.n_classes();
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                n_classes,
            });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            label_map,
        })
    }

    pub fn from_raw(raw: RawDataset, task: Task, options: &EncodeOptions) -> Result<Self> {
        let (labels, label_map) = encode_labels_with(&raw.raw_labels, task, options)?;
        Self::new(raw.features, labels, raw.feature_names, label_map)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn n_classes(&self) -> usize {
        self.label_map.n_classes()
    }

    pub fn distribution(&self) -> ClassDistribution {
        class_distribution_n(&self.labels, self.n_classes())
    }
}

/// Loads and encodes in one step.
pub fn load_dataset(
    path: impl AsRef<Path>,
    load: &LoadOptions,
    task: Task,
    encode: &EncodeOptions,
) -> Result<Dataset> {
    Dataset::from_raw(load_csv(path, load)?, task, encode)
}
