//! Command-line front end: `train`, `predict`, `evaluate`, `render`, `synth`.
//!
//! Every command writes its output file plus a manifest next to it
//! (`<out>.manifest.json`) recording the arguments, resolved configuration,
//! seed and the SHA-256 of every input and output.

pub mod config;
pub mod io;
pub mod synth;
pub mod train;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, fit_isotonic, EvaluationReport};
use crate::model::{check_version, Scorecard, SparsityReport, DOCUMENT_VERSION};
use crate::solver::Monotone;
use config::RunConfig;
use io::{csv_bytes, read_schema, to_json, write_output, CsvFile};
use synth::{format_value, SynthSpec, LABEL_COLUMN};
use train::PoolDocument;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "riskscore", version, about = "Sparse integer risk scorecards from tabular data")]
pub struct Cli {
    /// Worker threads (0 = all cores). Outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Manifest path (default: `<out>.manifest.json`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a pool of scorecards from a CSV file.
    Train(TrainArgs),
    /// Append a `risk` column to a CSV file.
    Predict(PredictArgs),
    /// Compute evaluation metrics of a card on labelled data.
    Evaluate(EvaluateArgs),
    /// Render a card as text or as its JSON document.
    Render(RenderArgs),
    /// Sample a synthetic dataset from a known scorecard.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = LABEL_COLUMN)]
    pub label: String,
    /// TOML configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TOML sidecar mapping variable names to `continuous` or `categorical`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<usize>,
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long)]
    pub bins_per_variable: Option<usize>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub epsilon_u: Option<f64>,
    #[arg(long)]
    pub swap_candidates: Option<usize>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub pool_passes: Option<usize>,
    #[arg(long)]
    pub multipliers: Option<usize>,
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Default coefficient box as `LO,HI`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub coefficient_box: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub intercept_box: Option<(f64, f64)>,
    /// Monotone direction as `NAME=nonneg|nonpos|free`; repeatable.
    #[arg(long, value_parser = parse_monotone)]
    pub monotone: Vec<(String, Monotone)>,
}

#[derive(Debug, Args)]
pub struct CardArgs {
    /// A pool file from `train` or a single card document.
    #[arg(long)]
    pub card: PathBuf,
    /// Card index within a pool file (0 = lowest loss).
    #[arg(long, default_value_t = 0)]
    pub index: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub card: CardArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub card: CardArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = LABEL_COLUMN)]
    pub label: String,
    /// Fit isotonic calibration on this many seeded rows and evaluate on the rest.
    #[arg(long)]
    pub calibrate: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenderFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub card: CardArgs,
    #[arg(long, value_enum, default_value_t = RenderFormat::Text)]
    pub format: RenderFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML ground-truth spec; the built-in ten-variable card when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the ground-truth card (default: `<out>.truth.json`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn parse_monotone(s: &str) -> std::result::Result<(String, Monotone), String> {
    let (name, dir) = s.split_once('=').ok_or("expected NAME=DIRECTION")?;
    let dir = match dir.trim() {
        "nonneg" => Monotone::Nonneg,
        "nonpos" => Monotone::Nonpos,
        "free" => Monotone::Free,
        other => return Err(format!("unknown direction `{other}`")),
    };
    Ok((name.trim().to_string(), dir))
}

#[derive(Debug, Serialize)]
struct FileRecord {
    role: &'static str,
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    arguments: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

struct Outcome {
    command: &'static str,
    seed: Option<u64>,
    config: Option<serde_json::Value>,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    /// Printed to stdout after the files are written.
    message: String,
}

impl Outcome {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            seed: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            message: String::new(),
        }
    }

    fn input(&mut self, role: &'static str, path: &Path, sha256: String) {
        self.inputs.push(FileRecord { role, path: path.display().to_string(), sha256 });
    }

    fn output(&mut self, role: &'static str, path: &Path, contents: &[u8]) -> Result<()> {
        let sha256 = write_output(path, contents)?;
        self.outputs.push(FileRecord { role, path: path.display().to_string(), sha256 });
        Ok(())
    }
}

fn file_sha(path: &Path) -> Result<String> {
    Ok(io::sha256_hex(&std::fs::read(path)?))
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let arguments: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli, arguments))) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
        Err(_) => {
            eprintln!("error: internal failure");
            EXIT_INTERNAL
        }
    }
}

fn execute(cli: Cli, arguments: Vec<String>) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let out_path = match &cli.command {
        Command::Train(a) => a.out.clone(),
        Command::Predict(a) => a.out.clone(),
        Command::Evaluate(a) => a.out.clone(),
        Command::Render(a) => a.out.clone(),
        Command::Synth(a) => a.out.clone(),
    };
    let outcome = pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Render(a) => cmd_render(a),
        Command::Synth(a) => cmd_synth(a),
    })?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: outcome.command,
        arguments,
        seed: outcome.seed,
        config: outcome.config,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
    };
    let manifest_path = cli.manifest.unwrap_or_else(|| {
        let mut p = out_path.into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    write_output(&manifest_path, to_json(&manifest)?.as_bytes())?;
    print!("{}", outcome.message);
    Ok(())
}

/// Loads card `index` from a pool file or a single card document.
pub fn load_card(path: &Path, index: usize) -> Result<Scorecard> {
    let text = std::fs::read_to_string(path)?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    check_version(&raw)?;
    if raw.get("cards").is_some() {
        PoolDocument::parse(&text)?.scorecard(index)
    } else {
        if index != 0 {
            return Err(Error::Config(format!("{} holds a single card; index must be 0", path.display())));
        }
        Scorecard::deserialize(&text)
    }
}

fn merged_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { c.$field = v.into(); } )* };
    }
    set!(seed, lambda, gamma);
    set!(bins_per_variable, beam_width, epsilon_u, swap_candidates, pool_size, pool_passes, multipliers, cv_folds);
    set!(coefficient_box, intercept_box);
    for (name, dir) in &a.monotone {
        c.monotone.insert(name.clone(), *dir);
    }
    Ok(c)
}

fn cmd_train(a: TrainArgs) -> Result<Outcome> {
    let config = merged_config(&a)?;
    config.validate()?;
    let mut out = Outcome::new("train");
    let csv = CsvFile::read(&a.data)?;
    out.input("data", &a.data, csv.sha256.clone());
    if let Some(p) = &a.config {
        out.input("config", p, file_sha(p)?);
    }
    let schema = match &a.schema {
        Some(p) => {
            out.input("schema", p, file_sha(p)?);
            read_schema(p)?
        }
        None => Default::default(),
    };
    let (table, labels) = csv.with_labels(&a.label)?;
    let raw = crate::binarize::RawDataset::new(table, labels)?;
    let doc = train::train(&raw, &config, &schema)?;
    out.seed = config.seed;
    out.config = Some(serde_json::to_value(&doc.config).map_err(|e| Error::Data(e.to_string()))?);
    out.output("pool", &a.out, to_json(&doc)?.as_bytes())?;
    out.message = doc.render_summary();
    Ok(out)
}

fn cmd_predict(a: PredictArgs) -> Result<Outcome> {
    let mut out = Outcome::new("predict");
    let card = load_card(&a.card.card, a.card.index)?;
    out.input("card", &a.card.card, file_sha(&a.card.card)?);
    let csv = CsvFile::read(&a.data)?;
    out.input("data", &a.data, csv.sha256.clone());
    if csv.header.iter().any(|h| h == "risk") {
        return Err(Error::Data("input already has a `risk` column".into()));
    }
    let risks = card.predict_table(&csv.table(None)?)?;
    let mut header = csv.header.clone();
    header.push("risk".into());
    let rows: Vec<Vec<String>> = csv
        .records
        .iter()
        .zip(&risks)
        .map(|(r, p)| {
            let mut r = r.clone();
            r.push(format!("{p}"));
            r
        })
        .collect();
    out.output("predictions", &a.out, &csv_bytes(&header, &rows)?)?;
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub version: u32,
    pub card: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationInfo>,
    pub metrics: EvaluationReport,
    pub sparsity: SparsityReport,
}

#[derive(Debug, Serialize)]
pub struct CalibrationInfo {
    pub n_fit: usize,
    pub seed: u64,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<Outcome> {
    let mut out = Outcome::new("evaluate");
    let card = load_card(&a.card.card, a.card.index)?;
    out.input("card", &a.card.card, file_sha(&a.card.card)?);
    let csv = CsvFile::read(&a.data)?;
    out.input("data", &a.data, csv.sha256.clone());
    let (table, labels) = csv.with_labels(&a.label)?;
    let probs = card.predict_table(&table)?;
    let (report, calibration) = match a.calibrate {
        None => (evaluate(&labels, &probs)?, None),
        Some(n_fit) => {
            if n_fit == 0 || n_fit >= labels.len() {
                return Err(Error::Config(format!(
                    "--calibrate {n_fit} must leave rows to evaluate and use at least one (dataset has {})",
                    labels.len()
                )));
            }
            let mut idx: Vec<usize> = (0..labels.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
            let (fit, rest) = idx.split_at(n_fit);
            let mut fit = fit.to_vec();
            let mut rest = rest.to_vec();
            fit.sort_unstable();
            rest.sort_unstable();
            let iso = fit_isotonic(
                &fit.iter().map(|&i| probs[i]).collect::<Vec<_>>(),
                &fit.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
            )?;
            let held_probs: Vec<f64> = rest.iter().map(|&i| iso.apply(probs[i])).collect();
            let held_labels: Vec<bool> = rest.iter().map(|&i| labels[i]).collect();
            out.seed = Some(a.seed);
            (
                evaluate(&held_labels, &held_probs)?,
                Some(CalibrationInfo { n_fit, seed: a.seed }),
            )
        }
    };
    let doc = ReportDocument {
        version: DOCUMENT_VERSION,
        card: card.name().to_string(),
        calibration,
        metrics: report,
        sparsity: card.sparsity(),
    };
    let text = to_json(&doc)?;
    out.output("report", &a.out, text.as_bytes())?;
    out.message = text;
    Ok(out)
}

fn cmd_render(a: RenderArgs) -> Result<Outcome> {
    let mut out = Outcome::new("render");
    let card = load_card(&a.card.card, a.card.index)?;
    out.input("card", &a.card.card, file_sha(&a.card.card)?);
    let text = match a.format {
        RenderFormat::Text => card.render(),
        RenderFormat::Json => {
            let mut s = card.serialize();
            s.push('\n');
            s
        }
    };
    out.output("rendering", &a.out, text.as_bytes())?;
    out.message = text;
    Ok(out)
}

fn cmd_synth(a: SynthArgs) -> Result<Outcome> {
    let mut out = Outcome::new("synth");
    let spec = match &a.spec {
        Some(p) => {
            out.input("spec", p, file_sha(p)?);
            SynthSpec::from_toml(&std::fs::read_to_string(p)?)?
        }
        None => SynthSpec::reference(),
    };
    let (table, labels, _) = spec.sample(a.n, a.seed)?;
    let mut header = table.names().to_vec();
    header.push(LABEL_COLUMN.into());
    let rows: Vec<Vec<String>> = table
        .rows()
        .iter()
        .zip(&labels)
        .map(|(r, &y)| {
            let mut fields: Vec<String> = r.iter().map(format_value).collect();
            fields.push(if y { "1" } else { "0" }.into());
            fields
        })
        .collect();
    out.output("data", &a.out, &csv_bytes(&header, &rows)?)?;
    let truth = spec.to_scorecard(&table, &labels)?;
    let truth_path = a.truth.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".truth.json");
        PathBuf::from(p)
    });
    let mut doc = truth.serialize();
    doc.push('\n');
    out.output("truth", &truth_path, doc.as_bytes())?;
    out.seed = Some(a.seed);
    out.config = Some(serde_json::to_value(&spec).map_err(|e| Error::Data(e.to_string()))?);
    let prevalence = labels.iter().filter(|&&y| y).count() as f64 / labels.len().max(1) as f64;
    out.message = format!("wrote {} rows (prevalence {prevalence:.4})\n", labels.len());
    Ok(out)
}
