use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wsnids_core::data::{
    encode_labels_with, load_dataset, ClassDistribution, EncodeOptions, LabelMap, LoadOptions, Task,
};
use wsnids_core::evaluate::{self, Averaging, ConfusionMatrix, MetricsReport};
use wsnids_core::experiment::{
    balance_dataset, directional_warnings, run_on_dataset, write_outputs, Balance, ExperimentConfig,
    ExperimentReport,
};
use wsnids_core::resample::ResampleReport;

use crate::settings::{balance_modes, Settings};
use crate::{BalanceArgs, CliError, EvaluateArgs, InspectArgs, RunArgs};

pub const BALANCE_REPORT_FORMAT: &str = "wsnids-balance";
pub const METRICS_FORMAT: &str = "wsnids-metrics";

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn data_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let s = args.settings.resolve(args.config.as_deref())?;
    let data = s
        .data
        .clone()
        .ok_or_else(|| CliError::Config("--data is required (flag or config file)".into()))?;
    let out = s.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let modes = balance_modes(s.balance.as_deref().unwrap_or("none"))?;
    let configs = modes
        .iter()
        .map(|&b| s.experiment(b))
        .collect::<Result<Vec<_>, _>>()?;

    let first = &configs[0];
    let ds = load_dataset(&data, &first.load, first.task, &first.encode)?;
    eprintln!(
        "loaded {} rows, {} features, {} classes",
        ds.n_rows(),
        ds.n_features(),
        ds.n_classes()
    );

    let mut reports = Vec::new();
    for cfg in &configs {
        let dir = if configs.len() > 1 {
            out.join(match cfg.balance {
                Balance::None => "wostl",
                Balance::SmoteTomek => "wistl",
            })
        } else {
            out.clone()
        };
        let output = run_on_dataset(&ds, cfg)?;
        write_outputs(&dir, &output).map_err(|e| CliError::Internal(e.to_string()))?;
        write_file(&dir.join("run.toml"), echo(&s, cfg)?.as_bytes())?;
        print_summary(&output.report, &dir);
        for w in &output.report.warnings {
            eprintln!("warning: {w}");
        }
        reports.push(output.report);
    }

    if let [wostl, wistl] = &reports[..] {
        let warnings = directional_warnings(wostl, wistl);
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        #[derive(Serialize)]
        struct Comparison<'a> {
            wostl: &'a str,
            wistl: &'a str,
            warnings: Vec<String>,
        }
        let cmp = Comparison {
            wostl: "wostl/report.json",
            wistl: "wistl/report.json",
            warnings,
        };
        write_file(&out.join("comparison.json"), pretty(&cmp)?.as_bytes())?;
    }
    Ok(())
}

/// Flat settings that reproduce this run when passed back with `--config`.
fn echo(s: &Settings, cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut e = s.clone();
    e.balance = Some(cfg.balance.to_string());
    e.task = Some(cfg.task.to_string());
    e.models = Some(
        cfg.models
            .iter()
            .map(|m| m.short_name().to_ascii_lowercase())
            .collect::<Vec<_>>()
            .join(","),
    );
    e.folds = Some(cfg.folds);
    e.seed = Some(cfg.seed);
    e.leakage_mode = Some(cfg.leakage_mode.to_string());
    e.k_neighbors = Some(cfg.k_neighbors);
    e.std_denominator = Some(cfg.std_denominator.to_string());
    e.policy = Some(cfg.policy.to_string());
    e.shuffle = Some(cfg.shuffle);
    e.stratified = Some(cfg.stratified);
    e.out = None;
    e.to_toml()
}

fn print_summary(report: &ExperimentReport, dir: &Path) {
    println!(
        "{} {} ({} folds, {}) -> {}",
        report.config.task,
        match report.config.balance {
            Balance::None => "WoSTL",
            Balance::SmoteTomek => "WiSTL",
        },
        report.config.folds,
        report.config.leakage_mode,
        dir.display()
    );
    println!(
        "{:<5} {:>9} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7} {:>7}",
        "model", "accuracy", "precision", "recall", "f1", "mae", "mse", "rmse", "auc"
    );
    for s in &report.summary {
        match &s.mean {
            Some(m) => println!(
                "{:<5} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7.3} {:>7.3} {:>7.3} {:>7}",
                s.model.short_name(),
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                m.mae,
                m.mse,
                m.rmse,
                m.auc.map_or("-".to_string(), |a| format!("{a:.4}"))
            ),
            None => println!("{:<5} failed on every fold", s.model.short_name()),
        }
    }
}

#[derive(Serialize)]
struct BalanceFile<'a> {
    format: &'a str,
    version: u32,
    data: &'a Path,
    task: Task,
    seed: u64,
    class_names: &'a [String],
    output_rows: usize,
    report: &'a ResampleReport,
}

pub fn balance(args: BalanceArgs) -> Result<(), CliError> {
    let flags = Settings {
        data: args.data.clone(),
        task: args.task.clone(),
        seed: args.seed,
        k_neighbors: args.k_neighbors,
        policy: args.policy.clone(),
        label_column: args.label_column.clone(),
        drop_columns: args.drop_columns.clone(),
        normal_class: args.normal_class.clone(),
        ..Default::default()
    };
    let s = flags.resolve(args.config.as_deref())?;
    let data = s
        .data
        .clone()
        .ok_or_else(|| CliError::Config("--data is required (flag or config file)".into()))?;
    let defaults = ExperimentConfig::default();
    let k = s.k_neighbors.unwrap_or(defaults.k_neighbors);
    if k == 0 {
        return Err(CliError::Config("k-neighbors must be at least 1".into()));
    }
    let task = s.task()?;
    let load = s.load_options();
    let ds = load_dataset(&data, &load, task, &s.encode_options())?;
    let seed = s.seed.unwrap_or(defaults.seed);
    let b = balance_dataset(&ds, seed, k, s.policy()?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let map_csv = |e: csv::Error| CliError::Internal(e.to_string());
    let mut header = ds.feature_names.clone();
    header.push(load.label_column.clone());
    w.write_record(&header).map_err(map_csv)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, &label) in b.labels.iter().enumerate() {
        record.clear();
        record.extend(b.features.row(i).iter().map(|v| v.to_string()));
        record.push(ds.label_map.name(label).unwrap_or("?").to_string());
        w.write_record(&record).map_err(map_csv)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&args.out, &bytes)?;

    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    let file = BalanceFile {
        format: BALANCE_REPORT_FORMAT,
        version: 1,
        data: &data,
        task,
        seed,
        class_names: &ds.label_map.classes,
        output_rows: b.labels.len(),
        report: &b.report,
    };
    write_file(&report_path, pretty(&file)?.as_bytes())?;

    println!("{:<12} {:>10} {:>10} {:>10} {:>10}", "class", "before", "synthetic", "removed", "after");
    for (c, name) in ds.label_map.classes.iter().enumerate() {
        println!(
            "{:<12} {:>10} {:>10} {:>10} {:>10}",
            name,
            b.report.before.count(c),
            b.report.synthetic_per_class.get(c).copied().unwrap_or(0),
            b.report.removed_per_class.get(c).copied().unwrap_or(0),
            b.report.after.count(c)
        );
    }
    println!("{} Tomek pairs; wrote {} and {}", b.report.tomek_pairs, args.out.display(), report_path.display());
    Ok(())
}

fn label_code(raw: &str, task: Task, enc: &EncodeOptions, n_classes: usize) -> Result<usize, CliError> {
    if let Ok(code) = raw.trim().parse::<usize>() {
        if code < n_classes {
            return Ok(code);
        }
    }
    let (codes, _) = encode_labels_with(&[raw.to_string()], task, enc)?;
    Ok(codes[0])
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_error(path, e))?;
    r.records().map(|rec| rec.map_err(|e| data_error(path, e))).collect()
}

fn read_labels(path: &Path, task: Task, enc: &EncodeOptions, n_classes: usize) -> Result<Vec<usize>, CliError> {
    read_records(path)?
        .iter()
        .map(|rec| {
            let raw = rec.get(0).ok_or_else(|| data_error(path, "empty row"))?;
            label_code(raw, task, enc, n_classes).map_err(|e| data_error(path, e))
        })
        .collect()
}

fn read_scores(path: &Path, n_classes: usize) -> Result<Vec<Vec<f64>>, CliError> {
    read_records(path)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let row: Vec<f64> = rec
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| data_error(path, format!("row {}: {e}", i + 2)))?;
            match row.len() {
                n if n == n_classes => Ok(row),
                1 if n_classes == 2 => Ok(vec![1.0 - row[0], row[0]]),
                n => Err(data_error(path, format!("row {} has {n} scores, expected {n_classes}", i + 2))),
            }
        })
        .collect()
}

fn read_confusion(path: &Path, task: Task, enc: &EncodeOptions, n_classes: usize) -> Result<ConfusionMatrix, CliError> {
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (i, rec) in read_records(path)?.iter().enumerate() {
        let line = i + 2;
        if rec.len() != 3 {
            return Err(data_error(path, format!("line {line}: expected true,predicted,count")));
        }
        let t = label_code(&rec[0], task, enc, n_classes).map_err(|e| data_error(path, e))?;
        let p = label_code(&rec[1], task, enc, n_classes).map_err(|e| data_error(path, e))?;
        let c: u64 = rec[2]
            .parse()
            .map_err(|e| data_error(path, format!("line {line}: {e}")))?;
        cm.counts[t][p] += c;
    }
    if cm.total() == 0 {
        return Err(data_error(path, "no counts"));
    }
    Ok(cm)
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    format: &'a str,
    version: u32,
    task: Task,
    class_names: &'a [String],
    metrics: &'a MetricsReport,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let task: Task = args.task.parse()?;
    let mut enc = EncodeOptions::default();
    if let Some(n) = &args.normal_class {
        enc.normal_class = n.clone();
    }
    let mut map = LabelMap::for_task(task);
    if task == Task::Binary {
        map.classes[0] = enc.normal_class.clone();
    }
    let n = map.n_classes();
    let averaging = match &args.averaging {
        Some(a) => a.parse::<Averaging>()?,
        None => Averaging::default_for(n),
    };

    let (report, roc) = match (&args.confusion, &args.truth, &args.pred) {
        (Some(path), _, _) => (evaluate::report_from_confusion(&read_confusion(path, task, &enc, n)?, averaging)?, None),
        (None, Some(t), Some(p)) => {
            let truth = read_labels(t, task, &enc, n)?;
            let pred = read_labels(p, task, &enc, n)?;
            let scores = args.scores.as_deref().map(|s| read_scores(s, n)).transpose()?;
            let ev = evaluate::evaluate(&truth, &pred, scores.as_deref(), n, averaging)?;
            (ev.report, scores.map(|_| ev.roc))
        }
        _ => return Err(CliError::Config("give --confusion, or --truth with --pred".into())),
    };

    let file = MetricsFile {
        format: METRICS_FORMAT,
        version: 1,
        task,
        class_names: &map.classes,
        metrics: &report,
    };
    write_file(&args.out.join("metrics.json"), pretty(&file)?.as_bytes())?;
    let mut buf = Vec::new();
    evaluate::write_confusion_csv(&mut buf, &report.confusion, &map.classes)?;
    write_file(&args.out.join("confusion.csv"), &buf)?;
    if let Some(curves) = &roc {
        let mut buf = Vec::new();
        evaluate::write_roc_csv(&mut buf, curves, &map.classes)?;
        write_file(&args.out.join("roc.csv"), &buf)?;
    }

    println!("samples   {}", report.n_samples);
    println!("averaging {}", report.averaging);
    for (name, v) in [
        ("accuracy", report.accuracy),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
        ("mae", report.mae),
        ("mse", report.mse),
        ("rmse", report.rmse),
    ] {
        println!("{name:<9} {v:.4}");
    }
    if let Some(auc) = report.auc {
        println!("auc       {auc:.6}");
    }
    Ok(())
}

pub fn inspect(args: InspectArgs) -> Result<(), CliError> {
    let task: Task = args.task.parse()?;
    let mut load = LoadOptions::default();
    if let Some(c) = &args.label_column {
        load.label_column = c.clone();
    }
    if let Some(d) = &args.drop_columns {
        load.drop_columns = d.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    let mut enc = EncodeOptions::default();
    if let Some(n) = &args.normal_class {
        enc.normal_class = n.clone();
    }
    let ds = load_dataset(&args.data, &load, task, &enc)?;
    println!("rows      {}", ds.n_rows());
    println!("features  {}", ds.n_features());
    println!("columns   {}", ds.feature_names.join(", "));
    println!("label     {} ({task})", load.label_column);
    print_distribution(&ds.distribution(), &ds.label_map.classes);
    Ok(())
}

fn print_distribution(d: &ClassDistribution, names: &[String]) {
    for (c, name) in names.iter().enumerate() {
        let count = d.count(c);
        let pct = if d.total == 0 { 0.0 } else { 100.0 * count as f64 / d.total as f64 };
        println!("  {name:<12} {count:>10} {pct:>8.3}%");
    }
}
