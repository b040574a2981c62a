//! Confusion matrices, classification metrics and ROC curves.
//!
//! Percent-scale values (accuracy, precision, recall, f1, mae, mse, rmse) are
//! stored as `100 * fraction`. AUC stays in `[0, 1]`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    /// `counts[t][p]`: rows are true classes, columns predictions.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::Empty("confusion matrix"));
        }
        for row in &counts {
            if row.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    found: row.len(),
                });
            }
        }
        Ok(Self { n_classes: n, counts })
    }

    /// Two-class matrix with class 1 as the positive class.
    pub fn binary(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self {
            n_classes: 2,
            counts: vec![vec![tn, fp], vec![fn_, tp]],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.counts[c][c]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn tp(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn fn_(&self, class: usize) -> u64 {
        self.support(class) - self.tp(class)
    }

    pub fn fp(&self, class: usize) -> u64 {
        self.predicted(class) - self.tp(class)
    }

    pub fn tn(&self, class: usize) -> u64 {
        self.total() - self.tp(class) - self.fn_(class) - self.fp(class)
    }

    /// Accuracy as a fraction; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Shape {
                expected: self.n_classes,
                found: other.n_classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for label in [t, p] {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange { label, n_classes });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Macro,
    Weighted,
    /// Class 1 only.
    BinaryPositive,
}

impl Averaging {
    /// Binary-positive for two classes, macro otherwise.
    pub fn default_for(n_classes: usize) -> Self {
        if n_classes == 2 {
            Averaging::BinaryPositive
        } else {
            Averaging::Macro
        }
    }
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            "binary_positive" | "binary" => Ok(Averaging::BinaryPositive),
            other => Err(Error::InvalidConfig(format!("unknown averaging `{other}`"))),
        }
    }
}

impl std::fmt::Display for Averaging {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
            Averaging::BinaryPositive => "binary_positive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when TP+FP = 0; precision is then reported as 0.
    pub precision_undefined: bool,
    /// Set when TP+FN = 0; recall is then reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.n_classes)
        .map(|c| {
            let (tp, fp, fn_, tn) = (cm.tp(c), cm.fp(c), cm.fn_(c), cm.tn(c));
            let (p, p_undef) = ratio(tp, tp + fp);
            let (r, r_undef) = ratio(tp, tp + fn_);
            ClassMetrics {
                class: c,
                support: tp + fn_,
                tp,
                fp,
                fn_,
                tn,
                precision: 100.0 * p,
                recall: 100.0 * r,
                f1: 100.0 * f1_score(p, r),
                precision_undefined: p_undef,
                recall_undefined: r_undef,
            }
        })
        .collect()
}

/// Accuracy is `trace / total`. Precision and recall are averaged over the
/// per-class one-vs-rest values; f1 is the harmonic mean of the averaged
/// precision and recall.
pub fn basic_metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<BasicMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let per_class = class_metrics(cm);
    let (precision, recall) = match averaging {
        Averaging::BinaryPositive => {
            let pos = per_class.get(1).ok_or_else(|| {
                Error::InvalidConfig("binary-positive averaging needs at least two classes".into())
            })?;
            (pos.precision, pos.recall)
        }
        Averaging::Macro => {
            let k = per_class.len() as f64;
            (
                per_class.iter().map(|m| m.precision).sum::<f64>() / k,
                per_class.iter().map(|m| m.recall).sum::<f64>() / k,
            )
        }
        Averaging::Weighted => {
            let t = total as f64;
            (
                per_class.iter().map(|m| m.precision * m.support as f64).sum::<f64>() / t,
                per_class.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / t,
            )
        }
    };
    Ok(BasicMetrics {
        averaging,
        accuracy: 100.0 * cm.trace() as f64 / total as f64,
        precision,
        recall,
        f1: f1_score(precision, recall),
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

/// MAE, MSE and RMSE over the integer class codes, in percent.
pub fn regression_style_errors(y_true: &[usize], y_pred: &[usize]) -> Result<ErrorMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let (mut abs, mut sq) = (0u64, 0u64);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let d = t.abs_diff(p) as u64;
        abs += d;
        sq += d * d;
    }
    let n = y_true.len() as f64;
    let mse = sq as f64 / n;
    Ok(ErrorMetrics {
        mae: 100.0 * abs as f64 / n,
        mse: 100.0 * mse,
        rmse: 100.0 * mse.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// `thresholds[i]` produced point `i + 1`; point 0 is the origin.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps the distinct scores in descending order; a sample is called
/// positive when its score is `>=` the threshold.
pub fn roc_curve(y_true: &[bool], scores: &[f64]) -> Result<RocCurve> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore { index });
    }
    let pos = y_true.iter().filter(|&&t| t).count() as u64;
    let neg = y_true.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassTruth);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of one (positive, negative) pair.
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        thresholds.push(s);
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    }
    Ok(RocCurve {
        fpr,
        tpr,
        thresholds,
        auc: area2 as f64 / (2.0 * pos as f64 * neg as f64),
    })
}

/// One-vs-rest curve per class. With two classes only class 1 gets a curve.
/// Classes absent from (or filling) the truth vector get `None`.
pub fn roc_one_vs_rest(y_true: &[usize], scores: &[Vec<f64>], n_classes: usize) -> Result<Vec<Option<RocCurve>>> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    if let Some(row) = scores.iter().find(|r| r.len() != n_classes) {
        return Err(Error::Shape {
            expected: n_classes,
            found: row.len(),
        });
    }
    let classes: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
    let mut out = vec![None; n_classes];
    for c in classes {
        let truth: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        match roc_curve(&truth, &s) {
            Ok(curve) => out[c] = Some(curve),
            Err(Error::SingleClassTruth) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Mean AUC over the classes that have a curve.
pub fn macro_auc(curves: &[Option<RocCurve>]) -> Option<f64> {
    let aucs: Vec<f64> = curves.iter().flatten().map(|c| c.auc).collect();
    if aucs.is_empty() {
        None
    } else {
        Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: u64,
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub auc: Option<f64>,
    pub weighted: AveragedScores,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub roc: Vec<Option<RocCurve>>,
}

pub fn evaluate(
    y_true: &[usize],
    y_pred: &[usize],
    scores: Option<&[Vec<f64>]>,
    n_classes: usize,
    averaging: Averaging,
) -> Result<Evaluation> {
    let cm = confusion_matrix(y_true, y_pred, n_classes)?;
    let basic = basic_metrics(&cm, averaging)?;
    let weighted = basic_metrics(&cm, Averaging::Weighted)?;
    let errors = regression_style_errors(y_true, y_pred)?;
    let roc = match scores {
        Some(s) => roc_one_vs_rest(y_true, s, n_classes)?,
        None => Vec::new(),
    };
    Ok(Evaluation {
        report: MetricsReport {
            n_samples: cm.total(),
            averaging,
            accuracy: basic.accuracy,
            precision: basic.precision,
            recall: basic.recall,
            f1: basic.f1,
            mae: errors.mae,
            mse: errors.mse,
            rmse: errors.rmse,
            auc: macro_auc(&roc),
            weighted: AveragedScores {
                precision: weighted.precision,
                recall: weighted.recall,
                f1: weighted.f1,
            },
            per_class: basic.per_class,
            confusion: cm,
        },
        roc,
    })
}

/// Metrics derived from a confusion matrix alone; error metrics are exact
/// because `|t - p|` is fixed per cell.
pub fn report_from_confusion(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport> {
    let basic = basic_metrics(cm, averaging)?;
    let weighted = basic_metrics(cm, Averaging::Weighted)?;
    let (mut abs, mut sq) = (0u64, 0u64);
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            let d = t.abs_diff(p) as u64;
            abs += c * d;
            sq += c * d * d;
        }
    }
    let n = cm.total() as f64;
    let mse = sq as f64 / n;
    Ok(MetricsReport {
        n_samples: cm.total(),
        averaging,
        accuracy: basic.accuracy,
        precision: basic.precision,
        recall: basic.recall,
        f1: basic.f1,
        mae: 100.0 * abs as f64 / n,
        mse: 100.0 * mse,
        rmse: 100.0 * mse.sqrt(),
        auc: None,
        weighted: AveragedScores {
            precision: weighted.precision,
            recall: weighted.recall,
            f1: weighted.f1,
        },
        per_class: basic.per_class,
        confusion: cm.clone(),
    })
}

/// Long format: `class,threshold,fpr,tpr`. The origin row has an empty threshold.
pub fn write_roc_csv<W: Write>(w: W, curves: &[Option<RocCurve>], names: &[String]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["class", "threshold", "fpr", "tpr"])?;
    for (c, curve) in curves.iter().enumerate() {
        let Some(curve) = curve else { continue };
        let name = names.get(c).cloned().unwrap_or_else(|| c.to_string());
        for i in 0..curve.fpr.len() {
            let th = if i == 0 { String::new() } else { curve.thresholds[i - 1].to_string() };
            out.write_record([name.clone(), th, curve.fpr[i].to_string(), curve.tpr[i].to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("<roc csv>", e))?;
    Ok(())
}

/// One row per cell: `true,predicted,count`.
pub fn write_confusion_csv<W: Write>(w: W, cm: &ConfusionMatrix, names: &[String]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["true", "predicted", "count"])?;
    let name = |c: usize| names.get(c).cloned().unwrap_or_else(|| c.to_string());
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, count) in row.iter().enumerate() {
            out.write_record([name(t), name(p), count.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("<confusion csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn pair_count_auc(y: &[bool], s: &[f64]) -> f64 {
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] && !y[j] {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn hand_example() {
        let cm = confusion_matrix(&[1, 1, 0, 0], &[1, 0, 0, 0], 2).unwrap();
        assert_eq!((cm.tp(1), cm.fn_(1), cm.fp(1), cm.tn(1)), (1, 1, 0, 2));
        let m = basic_metrics(&cm, Averaging::BinaryPositive).unwrap();
        assert_eq!(m.accuracy, 75.0);
        assert_eq!(m.precision, 100.0);
        assert_eq!(m.recall, 50.0);
        assert!((m.f1 - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn paper_rf_binary_counts() {
        let cm = ConfusionMatrix::binary(33_873, 33_898, 77, 74);
        let m = basic_metrics(&cm, Averaging::BinaryPositive).unwrap();
        let expected = 100.0 * 67_771.0 / 67_922.0;
        assert_eq!(m.accuracy, expected);
        assert_eq!((m.accuracy * 100.0).round() / 100.0, 99.78);
        assert!((m.precision - 100.0 * 33_873.0 / 33_950.0).abs() < 1e-12);
        assert_eq!((m.precision * 100.0).round() / 100.0, 99.77);
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1, 0];
        let cm = confusion_matrix(&y, &y, 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.counts[t][p] > 0, t == p);
            }
        }
        for avg in [Averaging::Macro, Averaging::Weighted, Averaging::BinaryPositive] {
            let m = basic_metrics(&cm, avg).unwrap();
            assert_eq!([m.accuracy, m.precision, m.recall, m.f1], [100.0; 4]);
        }
        let e = regression_style_errors(&y, &y).unwrap();
        assert_eq!([e.mae, e.mse, e.rmse], [0.0; 3]);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion_matrix(&[0], &[0, 1], 2), Err(Error::LengthMismatch { .. })));
        assert!(matches!(confusion_matrix(&[0, 2], &[0, 1], 2), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn zero_denominator_flagged() {
        // Class 2 is never predicted and never present.
        let cm = confusion_matrix(&[0, 1, 1], &[0, 0, 1], 3).unwrap();
        let m = basic_metrics(&cm, Averaging::Macro).unwrap();
        let c2 = &m.per_class[2];
        assert!(c2.precision_undefined && c2.recall_undefined);
        assert_eq!((c2.precision, c2.recall, c2.f1), (0.0, 0.0, 0.0));
        assert!((m.precision - (50.0 + 100.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 2, 1], vec![0, 7, 3], vec![4, 0, 9]]).unwrap();
        for avg in [Averaging::Macro, Averaging::Weighted, Averaging::BinaryPositive] {
            let m = basic_metrics(&cm, avg).unwrap();
            let hm = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
            assert!((m.f1 - hm).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_recall_equals_accuracy() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 2, 1], vec![0, 7, 3], vec![4, 0, 9]]).unwrap();
        let m = basic_metrics(&cm, Averaging::Weighted).unwrap();
        assert!((m.recall - m.accuracy).abs() < 1e-12);
    }

    #[test]
    fn one_error_in_four() {
        let e = regression_style_errors(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        assert_eq!(e.mae, 25.0);
        assert_eq!(e.mse, 25.0);
        assert_eq!(e.rmse, 50.0);
    }

    #[test]
    fn binary_mae_is_error_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..200);
            let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let cm = confusion_matrix(&t, &p, 2).unwrap();
            let e = regression_style_errors(&t, &p).unwrap();
            assert!((e.mae / 100.0 - (1.0 - cm.accuracy())).abs() < 1e-12);
        }
    }

    #[test]
    fn report_from_confusion_matches_evaluate() {
        let t = [0, 1, 2, 3, 4, 4, 2, 0, 1];
        let p = [0, 2, 2, 1, 4, 0, 2, 0, 3];
        let ev = evaluate(&t, &p, None, 5, Averaging::Macro).unwrap();
        let r = report_from_confusion(&ev.report.confusion, Averaging::Macro).unwrap();
        assert_eq!(ev.report, r);
    }

    #[test]
    fn roc_extremes() {
        let y = [true, true, false, false];
        let sep = roc_curve(&y, &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(sep.auc, 1.0);
        let flat = roc_curve(&y, &[0.5; 4]).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.fpr, vec![0.0, 1.0]);
        assert!(matches!(roc_curve(&[true, true], &[0.1, 0.2]), Err(Error::SingleClassTruth)));
        assert!(matches!(roc_curve(&[true, false], &[f64::NAN, 0.2]), Err(Error::NonFiniteScore { index: 0 })));
    }

    #[test]
    fn roc_matches_pair_count_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(2..300);
            let mut y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            y[0] = true;
            y[1] = false;
            // Coarse scores force ties.
            let s: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 20.0).floor() / 20.0).collect();
            let curve = roc_curve(&y, &s).unwrap();
            assert!((curve.auc - pair_count_auc(&y, &s)).abs() < 1e-12);
            assert_eq!((curve.fpr[0], curve.tpr[0]), (0.0, 0.0));
            assert_eq!((*curve.fpr.last().unwrap(), *curve.tpr.last().unwrap()), (1.0, 1.0));
            assert!(curve.fpr.windows(2).all(|w| w[0] <= w[1]));
            assert!(curve.tpr.windows(2).all(|w| w[0] <= w[1]));
            let cubed: Vec<f64> = s.iter().map(|v| (v - 0.5).powi(3)).collect();
            assert_eq!(roc_curve(&y, &cubed).unwrap().auc, curve.auc);
        }
    }

    #[test]
    fn one_vs_rest_skips_missing_classes() {
        let y = [0, 1, 0, 1];
        let s = vec![vec![0.9, 0.1, 0.0], vec![0.2, 0.8, 0.0], vec![0.6, 0.3, 0.1], vec![0.4, 0.5, 0.1]];
        let curves = roc_one_vs_rest(&y, &s, 3).unwrap();
        assert!(curves[0].is_some() && curves[1].is_some() && curves[2].is_none());
        assert_eq!(macro_auc(&curves), Some(1.0));
        let bin: Vec<Vec<f64>> = s.iter().map(|r| r[..2].to_vec()).collect();
        let curves = roc_one_vs_rest(&y, &bin, 2).unwrap();
        assert!(curves[0].is_none() && curves[1].is_some());
    }

    #[test]
    fn pooled_add() {
        let mut a = confusion_matrix(&[0, 1], &[0, 0], 2).unwrap();
        let b = confusion_matrix(&[1, 1], &[1, 0], 2).unwrap();
        a.add(&b).unwrap();
        assert_eq!(a.counts, vec![vec![1, 0], vec![2, 1]]);
        assert!(a.add(&ConfusionMatrix::zeros(3)).is_err());
    }

    #[test]
    fn csv_layouts() {
        let cm = ConfusionMatrix::binary(1, 2, 0, 1);
        let names = vec!["Normal".to_string(), "Attack".to_string()];
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &cm, &names).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "true,predicted,count\nNormal,Normal,2\nNormal,Attack,0\nAttack,Normal,1\nAttack,Attack,1\n"
        );
        let curve = roc_curve(&[true, false], &[0.7, 0.2]).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&mut buf, &[None, Some(curve)], &names).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("Attack,,0,0"));
    }
}
