use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use tempfile::TempDir;
use wsnids_core::evaluate::{self, Averaging};

const HEADER: &str = "id,Time,Is_CH,ADV_S,JOIN_R,DATA_S,Expaned Energy,Attack type";

fn wsnids(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsnids"))
        .args(args)
        .env_remove("WSNIDS_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// WSN-DS shaped rows with class-dependent feature shifts.
fn write_dataset(dir: &Path, counts: &[(&str, usize)], seed: u64) -> PathBuf {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut text = format!("{HEADER}\n");
    let mut id = 101000;
    for (c, &(name, n)) in counts.iter().enumerate() {
        for _ in 0..n {
            id += 1;
            let s = c as f64;
            text.push_str(&format!(
                "{id},{},{},{:.3},{:.3},{:.3},{:.5},{name}\n",
                50 * rng.gen_range(1..4),
                rng.gen_range(0..2),
                rng.gen::<f64>() * 2.0 + 3.0 * s,
                rng.gen::<f64>() * 4.0 + s,
                rng.gen::<f64>() * 10.0 - 2.0 * s,
                rng.gen::<f64>() + 0.5 * s,
            ));
        }
    }
    let p = dir.join("wsn.csv");
    fs::write(&p, text).unwrap();
    p
}

fn small_counts() -> Vec<(&'static str, usize)> {
    vec![("Normal", 120), ("Grayhole", 20), ("Blackhole", 16), ("TDMA", 12), ("Flooding", 10)]
}

const FAST: [&str; 12] = [
    "--rf-trees", "8", "--xgb-rounds", "8", "--lgb-rounds", "8", "--mlp-epochs", "5", "--mlp-hidden", "16",
    "--folds", "3",
];

#[test]
fn inspect_toy_file() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("toy.csv");
    fs::write(&p, "a,b,Attack type\n1,2,Normal\n3,4,Flooding\n5,6,Normal\n").unwrap();
    let o = wsnids(&["inspect", "--data", path(&p)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("rows      3"));
    assert!(out.contains("features  2"));
    let normal = out.lines().find(|l| l.trim_start().starts_with("Normal")).unwrap();
    assert!(normal.split_whitespace().nth(1) == Some("2"));
}

#[test]
fn run_writes_six_model_sections() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), &small_counts(), 1);
    let out = dir.path().join("r");
    let mut args = vec!["run", "--data", path(&data), "--task", "multiclass", "--balance", "none"];
    args.extend(["--models", "dt,rf,mlp,knn,lgb,xgb", "--seed", "42", "--out", path(&out)]);
    args.extend(FAST);
    let o = wsnids(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let summary = report["summary"].as_array().unwrap();
    assert_eq!(summary.len(), 6);
    assert_eq!(report["config"]["balance"], "none");
    assert_eq!(report["config"]["seed"], 42);
    for s in summary {
        let name = s["model"].as_str().unwrap().to_ascii_lowercase();
        assert!(out.join(format!("roc_{name}.csv")).exists());
        assert!(out.join(format!("confusion_{name}.csv")).exists());
    }
    assert!(out.join("metrics.csv").exists());
    assert!(out.join("timings.json").exists());
}

#[test]
fn run_is_reproducible_across_thread_counts_and_from_echo() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), &small_counts(), 2);
    let run = |threads: &str, out: &Path, extra: &[&str]| {
        let mut args = vec!["--threads", threads, "run", "--data", path(&data), "--balance", "smotetomek"];
        args.extend(["--out", path(out)]);
        args.extend(extra);
        let o = wsnids(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("report.json")).unwrap()
    };
    let a = run("1", &dir.path().join("a"), &FAST);
    let b = run("4", &dir.path().join("b"), &FAST);
    assert_eq!(a, b);
    let echo = dir.path().join("a").join("run.toml");
    let c = run("2", &dir.path().join("c"), &["--config", path(&echo)]);
    assert_eq!(a, c);
}

#[test]
fn config_file_and_env_precedence() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), &small_counts(), 3);
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, format!("data = \"{}\"\nmodels = \"dt\"\nfolds = 4\nseed = 5\n", path(&data))).unwrap();
    let out = dir.path().join("r");
    let o = Command::new(env!("CARGO_BIN_EXE_wsnids"))
        .args(["run", "--seed", "6", "--out", path(&out)])
        .env("WSNIDS_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["folds"], 4);
    assert_eq!(report["config"]["seed"], 6);
    assert_eq!(report["summary"].as_array().unwrap().len(), 1);
}

#[test]
fn both_balance_modes_write_comparison() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), &small_counts(), 4);
    let out = dir.path().join("r");
    let o = wsnids(&["run", "--data", path(&data), "--balance", "both", "--models", "dt,rf", "--rf-trees", "5", "--folds", "3", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("wostl/report.json").exists());
    assert!(out.join("wistl/report.json").exists());
    let cmp: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert!(cmp["warnings"].is_array());
}

fn read_balanced_counts(csv_path: &Path) -> Vec<(String, usize)> {
    let text = fs::read_to_string(csv_path).unwrap();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for line in text.lines().skip(1) {
        let label = line.rsplit(',').next().unwrap().to_string();
        match counts.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += 1,
            None => counts.push((label, 1)),
        }
    }
    counts
}

#[test]
fn balance_counts_match_report() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), &small_counts(), 5);
    let out = dir.path().join("bal.csv");
    let o = wsnids(&["balance", "--data", path(&data), "--task", "multiclass", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bal.csv.report.json")).unwrap()).unwrap();
    let after = report["report"]["after"]["counts"].as_array().unwrap();
    let names = report["class_names"].as_array().unwrap();
    let counts = read_balanced_counts(&out);
    for (name, n) in names.iter().zip(after) {
        let got = counts.iter().find(|(l, _)| l == name.as_str().unwrap()).map_or(0, |(_, c)| *c);
        assert_eq!(got as u64, n.as_u64().unwrap());
    }
    assert_eq!(report["output_rows"].as_u64().unwrap() as usize, counts.iter().map(|(_, c)| c).sum::<usize>());
}

#[test]
fn balance_majority_only_keeps_attack_target() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), &small_counts(), 6);
    let out = dir.path().join("bal.csv");
    let o = wsnids(&["balance", "--data", path(&data), "--task", "binary", "--policy", "majority_only", "--out", path(&out)]);
    assert!(o.status.success());
    let counts = read_balanced_counts(&out);
    let attack = counts.iter().find(|(l, _)| l == "Attack").unwrap().1;
    // Normal is the majority (120); Attack is grown to it and never trimmed.
    assert_eq!(attack, 120);
}

#[test]
fn balance_of_balanced_file_is_unchanged() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("even.csv");
    fs::write(&p, "x,y,Attack type\n0,0,Normal\n0,1,Normal\n10,10,Flooding\n10,11,Flooding\n").unwrap();
    let out = dir.path().join("bal.csv");
    let o = wsnids(&["balance", "--data", path(&p), "--task", "binary", "--out", path(&out)]);
    assert!(o.status.success());
    let counts = read_balanced_counts(&out);
    assert_eq!(counts, vec![("Normal".to_string(), 2), ("Attack".to_string(), 2)]);
}

#[test]
fn evaluate_paper_confusion_counts() {
    let dir = TempDir::new().unwrap();
    let cm = dir.path().join("cm.csv");
    fs::write(&cm, "true,predicted,count\nNormal,Normal,33898\nNormal,Attack,77\nAttack,Normal,74\nAttack,Attack,33873\n").unwrap();
    let out = dir.path().join("ev");
    let o = wsnids(&["evaluate", "--confusion", path(&cm), "--out", path(&out)]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let acc = m["metrics"]["accuracy"].as_f64().unwrap();
    assert_eq!((acc * 100.0).round() / 100.0, 99.78);
}

#[test]
fn evaluate_matches_library_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let n = 200;
    let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
    let pred: Vec<usize> = truth.iter().map(|&t| if rng.gen_bool(0.8) { t } else { rng.gen_range(0..5) }).collect();
    let scores: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    let names = ["Normal", "Grayhole", "Blackhole", "TDMA", "Flooding"];
    let col = |v: &[usize], header: &str| {
        let mut t = format!("{header}\n");
        for &x in v {
            t.push_str(names[x]);
            t.push('\n');
        }
        t
    };
    fs::write(dir.path().join("t.csv"), col(&truth, "truth")).unwrap();
    fs::write(dir.path().join("p.csv"), col(&pred, "pred")).unwrap();
    let mut s_text = String::from("c0,c1,c2,c3,c4\n");
    for row in &scores {
        let parts: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s_text.push_str(&parts.join(","));
        s_text.push('\n');
    }
    fs::write(dir.path().join("s.csv"), s_text).unwrap();
    let out = dir.path().join("ev");
    let o = wsnids(&[
        "evaluate", "--task", "multiclass",
        "--truth", path(&dir.path().join("t.csv")),
        "--pred", path(&dir.path().join("p.csv")),
        "--scores", path(&dir.path().join("s.csv")),
        "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("roc.csv").exists());
    let file: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let lib = evaluate::evaluate(&truth, &pred, Some(&scores), 5, Averaging::Macro).unwrap();
    assert_eq!(file["metrics"], serde_json::to_value(&lib.report).unwrap());
}

#[test]
fn evaluate_identity_is_perfect() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("y.csv");
    fs::write(&f, "label\n0\n1\n1\n0\n").unwrap();
    let out = dir.path().join("ev");
    let o = wsnids(&["evaluate", "--truth", path(&f), "--pred", path(&f), "--out", path(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("accuracy  100.0000"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = write_dataset(dir.path(), &small_counts(), 7);
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(wsnids(&["run", "--data", path(&data), "--no-such-flag"])), 2);
    assert_eq!(code(wsnids(&["run", "--data", path(&data), "--folds", "1"])), 2);
    assert_eq!(code(wsnids(&["run", "--data", path(&data), "--models", "svm"])), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "fold = 3\n").unwrap();
    assert_eq!(code(wsnids(&["run", "--data", path(&data), "--config", path(&bad)])), 2);

    assert_eq!(code(wsnids(&["inspect", "--data", path(&dir.path().join("missing.csv"))])), 3);
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "a,b,Attack type\n1,2,Normal\n3,Normal\n").unwrap();
    assert_eq!(code(wsnids(&["inspect", "--data", path(&ragged)])), 3);
    let unknown = dir.path().join("unknown.csv");
    fs::write(&unknown, "a,Attack type\n1,Normal\n2,Wormhole\n").unwrap();
    assert_eq!(code(wsnids(&["inspect", "--data", path(&unknown)])), 3);
    let t = dir.path().join("t.csv");
    let p = dir.path().join("p.csv");
    fs::write(&t, "y\n0\n1\n").unwrap();
    fs::write(&p, "y\n0\n").unwrap();
    assert_eq!(code(wsnids(&["evaluate", "--truth", path(&t), "--pred", path(&p), "--out", path(dir.path())])), 3);
}
