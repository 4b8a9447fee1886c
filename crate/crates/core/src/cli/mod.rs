//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or input error.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::features::FeatureKind;
use crate::metrics::MetricsError;
use crate::models::ModelError;
use crate::persistence::{ModelKind, PersistError};
use crate::textprep::TextprepError;

pub use config::ConfigFile;

pub const THREADS_ENV: &str = "VERINEWS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "verinews", version, about = "Four-way news claim classifier")]
pub struct Cli {
    /// Worker threads (falls back to VERINEWS_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump cleaned token lists as CSV.
    Prep(PrepArgs),
    /// Fit a model and write a bundle.
    Train(TrainArgs),
    /// Score a bundle against a labeled corpus.
    Eval(EvalArgs),
    /// Label an unlabeled corpus.
    Predict(PredictArgs),
    /// Re-render a saved JSON report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// Stop-word list, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Lemma exceptions, `surface<TAB>lemma` per line.
    #[arg(long)]
    pub lemmas: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PrepArgs {
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub tables: TableArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub model: Option<ModelChoice>,
    /// Defaults to count for nb and tfidf for lr and sgd.
    #[arg(long)]
    pub features: Option<FeatureChoice>,
    /// Allow a non-standard model/feature pairing.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub tables: TableArgs,
    #[arg(long)]
    pub scalar: Option<ScalarChoice>,
    #[arg(long)]
    pub nb_alpha: Option<f64>,
    /// Logistic regression inverse regularization.
    #[arg(long = "c")]
    pub c: Option<f64>,
    /// Logistic regression gradient tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub sgd_alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub sgd_tol: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Creation time stored in the bundle (default: SOURCE_DATE_EPOCH, else 0).
    #[arg(long)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the confusion grid as an HTML table.
    #[arg(long)]
    pub html: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// JSON report written by `eval --format json`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Nb,
    Lr,
    Sgd,
}

impl ModelChoice {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelChoice::Nb => ModelKind::NaiveBayes,
            ModelChoice::Lr => ModelKind::Logistic,
            ModelChoice::Sgd => ModelKind::Sgd,
        }
    }

    pub fn standard_features(self) -> FeatureKind {
        match self {
            ModelChoice::Nb => FeatureKind::Count,
            ModelChoice::Lr | ModelChoice::Sgd => FeatureKind::Tfidf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureChoice {
    Count,
    Tfidf,
}

impl From<FeatureChoice> for FeatureKind {
    fn from(c: FeatureChoice) -> Self {
        match c {
            FeatureChoice::Count => FeatureKind::Count,
            FeatureChoice::Tfidf => FeatureKind::Tfidf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalarChoice {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Html,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error(transparent)]
    Tables(#[from] TextprepError),
    #[error("{path}: {source}")]
    Bundle {
        path: PathBuf,
        #[source]
        source: PersistError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: malformed report: {source}")]
    Report {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl CliError {
    pub(crate) fn read(path: &Path, source: std::io::Error) -> Self {
        CliError::Read {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn write(path: &Path, source: std::io::Error) -> Self {
        CliError::Write {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Write { .. } | CliError::Pool(_) => 1,
            CliError::Model(e) => match e {
                ModelError::EmptyTrainingSet
                | ModelError::SingleClass(_)
                | ModelError::InvalidAlpha(_)
                | ModelError::InvalidConfig(_) => 2,
                _ => 1,
            },
            _ => 2,
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| {
                CliError::Usage(format!(
                    "{THREADS_ENV} must be a positive integer, got `{v}`"
                ))
            })?,
            _ => return Ok(0),
        },
    };
    if n == 0 {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    Ok(n)
}

/// Runs a parsed command inside a sized worker pool.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cli.threads)?)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Prep(a) => commands::prep(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Report(a) => commands::report(&a),
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}
