//! `eorkit` command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or input error,
//! 3 partial failure (some cases failed, the rest were written). Errors are
//! printed to stderr as one JSON object with a stable `error` code.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "eorkit", version, about = "Postoperative glioblastoma preprocessing, metrics and extent-of-resection evaluation")]
struct Cli {
    /// Seed for every random draw (bootstrap resampling, phantom generation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cases processed in parallel (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register one scan to the atlas grid, skull-strip and z-score it.
    Preprocess(PreprocessArgs),
    /// Score every model of a cohort manifest and write per-case metrics
    /// and summary reports.
    Evaluate(EvaluateArgs),
    /// Classify gross total resection versus residual tumor per case.
    ClassifyEor(ClassifyArgs),
    /// Generate a synthetic phantom cohort, optionally segmented by the
    /// rule-based baseline.
    Phantom(PhantomArgs),
    /// Re-summarize a per-case metrics CSV without touching any volume.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmptyDice {
    /// Both-empty cases are undefined and excluded from means.
    Undefined,
    /// Both-empty cases score 1.
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CiArg {
    Bootstrap,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Md,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Rigid,
    Affine,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Confidence interval method for means.
    #[arg(long, value_enum)]
    ci_method: Option<CiArg>,
    /// Confidence level of the intervals.
    #[arg(long)]
    confidence: Option<f64>,
    /// Residual enhancing tumor volume (cm³) at or above which a case is RT.
    #[arg(long)]
    threshold: Option<f64>,
    /// Only report these models (comma separated).
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Directory holding t1, t1ce, t2 and flair as .nii or .nii.gz, and
    /// optionally gt.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    t1: Option<PathBuf>,
    #[arg(long)]
    t1ce: Option<PathBuf>,
    #[arg(long)]
    t2: Option<PathBuf>,
    #[arg(long)]
    flair: Option<PathBuf>,
    /// Ground-truth labels in the T1ce frame, carried to the atlas grid.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Precomputed brain mask on the atlas grid; skips skull stripping.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Atlas reference volume (240×240×155, 1 mm); a synthetic one when
    /// omitted.
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Registration stages for T1ce→atlas (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    stages: Vec<StageArg>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Cohort manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Label schemes of the models (TOML); identity when omitted.
    #[arg(long)]
    schemes: Option<PathBuf>,
    /// Score for cases where ground truth and prediction are both empty.
    #[arg(long, value_enum)]
    empty_dice: Option<EmptyDice>,
    #[command(flatten)]
    stats: StatsArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Cohort manifest; volumes are read from its label files.
    #[arg(long, conflicts_with = "metrics", required_unless_present = "metrics")]
    manifest: Option<PathBuf>,
    /// Per-case metrics CSV written by `evaluate`.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    schemes: Option<PathBuf>,
    /// Residual enhancing tumor volume (cm³) at or above which a case is RT.
    #[arg(long)]
    threshold: Option<f64>,
    /// Output directory; prints Markdown to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// Cohort spec (TOML); defaults otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of cases.
    #[arg(long)]
    n: Option<usize>,
    /// Fraction of GTR cases.
    #[arg(long)]
    gtr_fraction: Option<f64>,
    /// Noise standard deviation applied to every sequence.
    #[arg(long)]
    noise: Option<f64>,
    /// Preprocess every case and segment it with the baseline; the manifest
    /// then points at atlas-grid ground truth and predictions.
    #[arg(long)]
    baseline: bool,
    /// Atlas reference volume for `--baseline`.
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Per-case metrics CSV written by `evaluate`.
    #[arg(long)]
    metrics: PathBuf,
    #[command(flatten)]
    stats: StatsArgs,
    /// Format printed to stdout when `--out` is omitted.
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure reported on stderr and mapped to an exit code.
#[derive(Debug)]
pub struct Failure {
    code: String,
    message: String,
    exit: u8,
    details: Option<serde_json::Value>,
}

impl Failure {
    pub fn input(code: &str, message: impl Into<String>) -> Self {
        Failure {
            code: code.into(),
            message: message.into(),
            exit: 2,
            details: None,
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: "Internal".into(),
            message: message.into(),
            exit: 1,
            details: None,
        }
    }

    pub fn partial(message: impl Into<String>, details: serde_json::Value) -> Self {
        Failure {
            code: "PartialFailure".into(),
            message: message.into(),
            exit: 3,
            details: Some(details),
        }
    }

    fn report(&self) {
        let mut v = json!({ "error": self.code, "message": self.message });
        if let Some(d) = &self.details {
            v["details"] = d.clone();
        }
        eprintln!("{v}");
    }
}

impl From<eorkit::Error> for Failure {
    fn from(e: eorkit::Error) -> Self {
        Failure {
            code: e.code().into(),
            message: e.to_string(),
            exit: if e.is_input_error() { 2 } else { 1 },
            details: None,
        }
    }
}

/// Settings resolved from the config file and global flags.
pub struct Context {
    pub seed: Option<u64>,
    pub file: FileConfig,
}

pub fn create_out_dir(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::input("Io", format!("{}: {e}", out.display())))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::input("Io", format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(j) = cli.jobs.or(file.jobs) {
        if j == 0 {
            return Err(Failure::input("Usage", "--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::internal(e.to_string()))?;
    }
    let ctx = Context {
        seed: cli.seed.or(file.seed),
        file,
    };
    match cli.command {
        Command::Preprocess(a) => commands::preprocess(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::ClassifyEor(a) => commands::classify_eor(&ctx, a),
        Command::Phantom(a) => commands::phantom(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            Failure::input("Usage", e.to_string().trim_end()).report();
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.exit)
        }
    }
}
