use std::path::{Path, PathBuf};
use std::process::Command;

use riskscore::cli::io::CsvFile;
use riskscore::cli::train::PoolDocument;
use riskscore::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("riskscore").chain(args.iter().copied()))
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, contents: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    fn synth(&self, name: &str, n: usize, seed: u64) -> String {
        let p = self.path(name);
        assert_eq!(cli(&["synth", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", &p]), EXIT_OK);
        p
    }

    fn pool(&self, name: &str) -> PoolDocument {
        PoolDocument::parse(&std::fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

/// Two informative columns and a noise column; `a` alone separates the labels.
fn separable_csv() -> String {
    let mut s = String::from("a,b,noise,y\n");
    for i in 0..120 {
        let y = i % 2;
        let a = if y == 1 { 10 + i % 7 } else { i % 7 };
        s.push_str(&format!("{a},{},{},{y}\n", (i * 7) % 11, (i * 13) % 5));
    }
    s
}

#[test]
fn separable_lambda_three_gives_sparse_cards() {
    let w = Work::new();
    let data = w.write("sep.csv", &separable_csv());
    let out = w.path("pool.json");
    assert_eq!(cli(&["train", "--data", &data, "--label", "y", "--out", &out, "--seed", "1", "--lambda", "3"]), EXIT_OK);
    let pool = w.pool("pool.json");
    assert!(!pool.cards.is_empty() && pool.cards.len() <= pool.config.pool_size);
    assert_eq!(pool.summary.len(), pool.cards.len());
    for k in 0..pool.cards.len() {
        let card = pool.scorecard(k).unwrap();
        assert!(card.score.support().len() <= 3);
        assert_eq!(pool.summary[k].overall_sparsity, card.score.support().len() + 2);
    }
    assert!(pool.summary[0].train_auroc.unwrap() > 0.99);
}

#[test]
fn same_seed_gives_identical_pool_files_and_gfr_label() {
    let w = Work::new();
    let data = w.synth("d.csv", 1500, 3);
    let args = |out: &str| {
        vec![
            "train".to_string(), "--data".into(), data.clone(), "--out".into(), w.path(out), "--seed".into(), "4".into(),
            "--gamma".into(), "10".into(), "--lambda".into(), "8".into(), "--pool-size".into(), "3".into(),
        ]
    };
    for out in ["a.json", "b.json"] {
        let a = args(out);
        assert_eq!(cli(&a.iter().map(String::as_str).collect::<Vec<_>>()), EXIT_OK);
    }
    let a = std::fs::read(w.path("a.json")).unwrap();
    assert_eq!(a, std::fs::read(w.path("b.json")).unwrap());
    let pool = w.pool("a.json");
    assert_eq!(pool.name, "GFR-10");
    assert_eq!(pool.scorecard(0).unwrap().name(), "GFR-10");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(w.path("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["lambda"], 8);
    let out_sha = manifest["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(out_sha, riskscore::cli::io::sha256_hex(&a));
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap(), CsvFile::read(Path::new(&data)).unwrap().sha256);
}

#[test]
fn evaluate_reproduces_training_auroc_and_reports_sparsity() {
    let w = Work::new();
    let data = w.synth("d.csv", 1200, 8);
    let pool_path = w.path("pool.json");
    assert_eq!(cli(&["train", "--data", &data, "--out", &pool_path, "--seed", "2", "--lambda", "6", "--pool-size", "2"]), EXIT_OK);
    let pool = w.pool("pool.json");
    for k in 0..pool.cards.len() {
        let report = w.path(&format!("r{k}.json"));
        assert_eq!(cli(&["evaluate", "--card", &pool_path, "--index", &k.to_string(), "--data", &data, "--out", &report]), EXIT_OK);
        let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(r["metrics"]["auroc"].as_f64(), pool.summary[k].train_auroc);
        let nnz = pool.scorecard(k).unwrap().score.support().len();
        assert_eq!(r["sparsity"]["overall_sparsity"].as_u64().unwrap() as usize, nnz + 2);
        assert!(r.get("calibration").is_none());
    }
    // calibration on part of the data
    let report = w.path("cal.json");
    assert_eq!(cli(&["evaluate", "--card", &pool_path, "--data", &data, "--calibrate", "600", "--seed", "1", "--out", &report]), EXIT_OK);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["metrics"]["n"], 600);
    assert_eq!(r["calibration"]["n_fit"], 600);
    // no rows left to evaluate
    assert_eq!(cli(&["evaluate", "--card", &pool_path, "--data", &data, "--calibrate", "1200", "--out", &report]), EXIT_DATA);
    // out of range index
    assert_eq!(cli(&["evaluate", "--card", &pool_path, "--index", "99", "--data", &data, "--out", &report]), EXIT_DATA);
}

#[test]
fn evaluate_single_class_reports_undefined_metrics() {
    let w = Work::new();
    let data = w.synth("d.csv", 800, 5);
    let pool_path = w.path("pool.json");
    assert_eq!(cli(&["train", "--data", &data, "--out", &pool_path, "--seed", "2", "--lambda", "4", "--pool-size", "1"]), EXIT_OK);
    let csv = CsvFile::read(Path::new(&data)).unwrap();
    let label = csv.column_index("outcome").unwrap();
    let mut text = csv.header.join(",") + "\n";
    for r in csv.records.iter().filter(|r| r[label] == "0").take(50) {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    let neg = w.write("neg.csv", &text);
    let report = w.path("r.json");
    assert_eq!(cli(&["evaluate", "--card", &pool_path, "--data", &neg, "--out", &report]), EXIT_OK);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["metrics"]["auroc"].is_null());
    assert!(r["metrics"]["auprc"].is_null());
    assert!(r["metrics"]["smr"].as_f64().unwrap() == 0.0);
    assert!(r["metrics"]["brier"].as_f64().is_some());
}

#[test]
fn predict_appends_risk_column() {
    let w = Work::new();
    let data = w.synth("d.csv", 600, 6);
    let truth = format!("{data}.truth.json");
    let out = w.path("pred.csv");
    assert_eq!(cli(&["predict", "--card", &truth, "--data", &data, "--out", &out]), EXIT_OK);
    let pred = CsvFile::read(Path::new(&out)).unwrap();
    let input = CsvFile::read(Path::new(&data)).unwrap();
    assert_eq!(pred.header.last().unwrap(), "risk");
    assert_eq!(pred.records.len(), input.records.len());
    let card = riskscore::model::Scorecard::deserialize(&std::fs::read_to_string(&truth).unwrap()).unwrap();
    let table = input.table(None).unwrap();
    for (i, (row, rec)) in table.rows().iter().zip(&pred.records).enumerate() {
        let risk: f64 = rec.last().unwrap().parse().unwrap();
        assert_eq!(risk, card.predict_risk(table.names(), row).unwrap());
        assert_eq!(&rec[..rec.len() - 1], &input.records[i][..]);
    }
    // a missing variable is a schema error
    let cut = w.write("cut.csv", "age,outcome\n50,1\n");
    assert_eq!(cli(&["predict", "--card", &truth, "--data", &cut, "--out", &out]), EXIT_DATA);
}

#[test]
fn render_lists_one_block_per_variable() {
    let w = Work::new();
    let data = w.synth("d.csv", 300, 6);
    let truth = format!("{data}.truth.json");
    let out = w.path("card.txt");
    assert_eq!(cli(&["render", "--card", &truth, "--out", &out]), EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    for name in ["age", "heart_rate", "sbp", "resp_rate", "temperature", "gcs", "spo2", "lactate", "creatinine", "ventilation"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from\n{text}");
    }
    assert!(text.contains("Intercept:") && text.contains("Multiplier:"));
    let json = w.path("card.json");
    assert_eq!(cli(&["render", "--card", &truth, "--format", "json", "--out", &json]), EXIT_OK);
    let back = riskscore::model::Scorecard::deserialize(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, riskscore::model::Scorecard::deserialize(&std::fs::read_to_string(&truth).unwrap()).unwrap());
    assert!(Path::new(&format!("{out}.manifest.json")).exists());
}

#[test]
fn config_file_and_flag_override() {
    let w = Work::new();
    let data = w.synth("d.csv", 800, 9);
    let config = w.write("c.toml", "seed = 3\nlambda = 6\npool_size = 2\nmultipliers = 5\n[monotone]\nage = \"nonneg\"\n");
    let schema = w.write("s.toml", "gcs = \"categorical\"\n");
    let out = w.path("p.json");
    assert_eq!(
        cli(&["train", "--data", &data, "--config", &config, "--schema", &schema, "--lambda", "4", "--out", &out]),
        EXIT_OK
    );
    let pool = w.pool("p.json");
    assert_eq!(pool.config.lambda, Some(4));
    assert_eq!(pool.config.pool_size, 2);
    let card = pool.scorecard(0).unwrap();
    let age = card.map.variable_index("age").unwrap();
    assert!(card.map.groups()[age].iter().all(|&j| card.score.w[j] >= 0));
    let gcs = card.map.variable_index("gcs").unwrap();
    assert_eq!(card.map.variables()[gcs].kind, riskscore::binarize::VariableKind::Categorical);
}

#[test]
fn infeasible_configurations_are_rejected() {
    let w = Work::new();
    let data = w.synth("d.csv", 200, 1);
    let out = w.path("p.json");
    let base = ["train", "--data", data.as_str(), "--out", out.as_str()];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        cli(&a)
    };
    assert_eq!(with(&["--seed", "1", "--lambda", "0"]), EXIT_DATA);
    assert_eq!(with(&["--seed", "1", "--gamma", "11"]), EXIT_DATA);
    assert_eq!(with(&["--seed", "1", "--coefficient-box", "0.2,0.8"]), EXIT_DATA);
    assert_eq!(with(&["--lambda", "3"]), EXIT_DATA);
    assert_eq!(with(&["--seed", "1", "--label", "nope"]), EXIT_DATA);
    assert_eq!(with(&["--seed", "1", "--bogus-flag"]), EXIT_USAGE);
    assert!(!Path::new(&out).exists());
}

#[test]
fn synth_is_seeded() {
    let w = Work::new();
    let a = std::fs::read(w.synth("a.csv", 500, 12)).unwrap();
    let b = std::fs::read(w.synth("b.csv", 500, 12)).unwrap();
    let c = std::fs::read(w.synth("c.csv", 500, 13)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let spec = w.write("zero.toml", &format!(
        "intercept = 0\nmultiplier = 1.0\n[[variables]]\nname = \"x\"\npoints = [0, 0]\ncuts = [0.5]\n[variables.sampler]\ndistribution = \"uniform\"\nlow = 0.0\nhigh = 1.0\ndecimals = 2\n"
    ));
    let out = w.path("z.csv");
    assert_eq!(cli(&["synth", "--spec", &spec, "--n", "4000", "--seed", "1", "--out", &out]), EXIT_OK);
    let (_, labels) = CsvFile::read(Path::new(&out)).unwrap().with_labels("outcome").unwrap();
    let prev = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    assert!((prev - 0.5).abs() < 0.03, "{prev}");
}

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_riskscore"))
}

#[test]
fn process_exit_codes() {
    let w = Work::new();
    let status = |args: &[&str]| Command::new(binary()).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["--version"]), 0);
    assert_eq!(status(&["frobnicate"]), 1);
    assert_eq!(status(&["predict", "--card", &w.path("none.json"), "--data", "x.csv", "--out", &w.path("o.csv")]), 2);
    let bad = w.write("bad.json", "{\"version\": 2}");
    assert_eq!(status(&["render", "--card", &bad, "--out", &w.path("o.txt")]), 2);
    let out = w.path("s.csv");
    assert_eq!(status(&["synth", "--n", "50", "--seed", "1", "--out", &out]), 0);
    assert!(Path::new(&out).exists());
}
