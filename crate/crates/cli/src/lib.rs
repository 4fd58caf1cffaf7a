//! The `burstkit` command line.
//!
//! Every subcommand writes a provenance file beside its output holding the
//! tool version and the fully resolved argument list; running
//! `burstkit <argv...>` with that list reproduces the output. Flags can be
//! given defaults in a TOML file passed with `--config`:
//!
//! ```toml
//! seed = 7            # top-level keys apply to every subcommand
//! [eval]
//! bootstrap = 5000    # keys under a table apply to that subcommand
//! ```
//!
//! Flags on the command line win over the file. Exit status is 0 on
//! success, 1 when the work itself fails and 2 on a usage error.

mod clips;
mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use clips::token_clips;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(name = "burstkit", version, about = "Stop-burst annotation toolkit")]
pub struct Cli {
    /// TOML file with default flag values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Scan a corpus of TextGrid/WAV pairs into a token manifest.
    #[command(args_override_self = true)]
    Extract(ExtractArgs),
    /// Draw a sample from a manifest.
    #[command(args_override_self = true)]
    Sample(SampleArgs),
    /// Stratified train/test split.
    #[command(args_override_self = true)]
    Split(SplitArgs),
    /// Nested training subsets of increasing size.
    #[command(args_override_self = true)]
    Ladder(LadderArgs),
    /// Run the annotation HTTP service.
    #[command(args_override_self = true)]
    Serve(ServeArgs),
    /// Fit the feature-based logistic baseline.
    #[command(args_override_self = true)]
    TrainBaseline(TrainArgs),
    /// Label every token of a manifest with a classifier.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Score predictions against gold labels with BCa intervals.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Spline analysis of burst probability over duration.
    #[command(args_override_self = true)]
    Analyze(AnalyzeArgs),
    /// Write TextGrids with a burst tier from a manifest.
    #[command(args_override_self = true)]
    ExportTextgrid(ExportArgs),
    /// Generate a synthetic aligned corpus.
    #[command(args_override_self = true)]
    SynthCorpus(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Sample(_) => "sample",
            Command::Split(_) => "split",
            Command::Ladder(_) => "ladder",
            Command::Serve(_) => "serve",
            Command::TrainBaseline(_) => "train-baseline",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
            Command::Analyze(_) => "analyze",
            Command::ExportTextgrid(_) => "export-textgrid",
            Command::SynthCorpus(_) => "synth-corpus",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Context window recorded on each token, milliseconds.
    #[arg(long, default_value_t = 10.0)]
    pub context_ms: f64,
    #[arg(long, default_value = "phones")]
    pub tier: String,
    #[arg(long, default_value = "<cl>")]
    pub closure_marker: String,
    /// TOML phone-to-voicing map (`voiced = [...]`, `voiceless = [...]`).
    #[arg(long)]
    pub voicing_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Equal numbers of voiced and voiceless tokens.
    Balanced,
    /// A share of every (corpus, voicing) stratum, capped.
    Annotation,
    /// A fixed-size set with every corpus represented.
    Validation,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub scheme: Scheme,
    #[arg(long)]
    pub n_per_voicing: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub frac: f64,
    #[arg(long, default_value_t = 1000)]
    pub cap: usize,
    #[arg(long)]
    pub n_total: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_per_corpus: usize,
    /// Where the validation scheme writes the tokens it did not pick.
    #[arg(long)]
    pub remainder: Option<PathBuf>,
    /// Keep only tokens with a present/absent label before sampling.
    #[arg(long)]
    pub labeled_only: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LadderArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Ladder JSON (sizes and token ids per size).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = burstkit::dataset::DEFAULT_LADDER)]
    pub sizes: Vec<usize>,
    /// Also write one manifest per size, `train_<size>.jsonl`.
    #[arg(long)]
    pub manifests_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Sequential,
    Random,
    Uncertainty,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Store directory (manifest snapshot plus label log).
    #[arg(long)]
    pub store: PathBuf,
    /// Seeds an empty store.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Static files served outside `/v1` (the annotation UI bundle).
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// `baseline:model.json` or `neural:model.onnx`, for uncertainty ordering.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, value_enum, default_value = "sequential")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 100.0)]
    pub annotation_context_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    pub prediction_context_ms: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 10.0)]
    pub context_ms: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `baseline:model.json` or `neural:model.onnx`.
    #[arg(long)]
    pub backend: String,
    #[arg(long, default_value_t = 10.0)]
    pub context_ms: f64,
    /// P(present) at or above which the label is `present`.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// EvalReport JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `model,train_size,metric,point,lo,hi` rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    pub model_name: String,
    #[arg(long, default_value_t = 0)]
    pub train_size: usize,
    #[arg(long, default_value_t = 2000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// `name=manifest.jsonl`, one per annotation source; repeatable.
    #[arg(long = "source", required = true)]
    pub sources: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = ["alpha".to_string(), "beta".to_string()])]
    pub corpora: Vec<String>,
    #[arg(long, default_value_t = 2)]
    pub speakers: usize,
    #[arg(long, default_value_t = 2)]
    pub recordings: usize,
    #[arg(long, default_value_t = 20)]
    pub stops: usize,
    #[arg(long, default_value_t = 25.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 0.1)]
    pub bare_fraction: f64,
}

/// Written beside every output.
#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Resolved arguments; `burstkit` followed by these reproduces the run.
    pub argv: &'a [String],
    pub seed: u64,
    pub config: &'a Cli,
    pub summary: serde_json::Value,
}

/// `out.ext` -> `out.ext.provenance.json`; a directory gets `provenance.json`.
pub fn provenance_path(target: &Path) -> PathBuf {
    if target.is_dir() {
        target.join("provenance.json")
    } else {
        let mut name = target.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".provenance.json");
        target.with_file_name(name)
    }
}

fn toml_flags(table: &toml::Table) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &toml::Value| -> anyhow::Result<String> {
            Ok(match v {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                other => bail!("config key {key}: unsupported value {other}"),
            })
        };
        match value {
            toml::Value::Table(_) => continue,
            toml::Value::Boolean(true) => out.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for v in items {
                    out.push(flag.clone());
                    out.push(scalar(v)?);
                }
            }
            v => {
                out.push(flag);
                out.push(scalar(v)?);
            }
        }
    }
    Ok(out)
}

/// Rebuilds argv as `bin <subcommand> <config flags> <other flags>` so
/// that flags given on the command line, coming later, override the file.
/// `at` is the position of the subcommand token.
fn merge_config(argv: &[String], config: &Path, at: usize) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading config {}", config.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing config {}", config.display()))?;
    let mut flags = toml_flags(&table)?;
    if let Some(toml::Value::Table(sub)) = table.get(&argv[at]) {
        flags.extend(toml_flags(sub)?);
    }
    let mut out = vec![argv[0].clone(), argv[at].clone()];
    out.extend(flags);
    out.extend(argv[1..at].iter().cloned());
    out.extend(argv[at + 1..].iter().cloned());
    Ok(out)
}

/// The `--config` value and the subcommand position, found before clap
/// runs because the file may supply required arguments.
fn locate_config(argv: &[String]) -> Option<(PathBuf, usize)> {
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let at = argv.iter().skip(1).position(|a| names.contains(a))? + 1;
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(|p| (PathBuf::from(p), at));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some((PathBuf::from(p), at));
        }
    }
    None
}

fn parse(argv: &[String]) -> Result<(Cli, Vec<String>), i32> {
    let usage = |e: clap::Error| {
        let _ = e.print();
        if e.use_stderr() {
            EXIT_USAGE
        } else {
            EXIT_OK
        }
    };
    let argv = match locate_config(argv) {
        Some((config, at)) => merge_config(argv, &config, at).map_err(|e| {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        })?,
        None => argv.to_vec(),
    };
    let cli = Cli::try_parse_from(&argv).map_err(usage)?;
    Ok((cli, argv))
}

/// Runs one invocation and returns the exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let argv: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let (cli, argv) = match parse(&argv) {
        Ok(p) => p,
        Err(code) => return code,
    };
    // the recorded argv drops the binary name and the config file, whose
    // contents are already merged in
    let mut recorded = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        if skip {
            skip = false;
        } else if a == "--config" {
            skip = true;
        } else if !a.starts_with("--config=") {
            recorded.push(a.clone());
        }
    }
    if !recorded.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) {
        recorded.push("--seed".into());
        recorded.push(cli.seed.to_string());
    }
    match commands::dispatch(&cli, &recorded) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
