//! `vnjp`: builds augmented Vietnamese–Japanese training corpora.
//!
//! Every subcommand reads one config file (plus flag overrides), writes its
//! outputs into `paths.out_dir`, and finishes with a `<command>.manifest.json`
//! recording input/output digests and the effective config.
//!
//! Exit status: 0 success, 1 usage or config error, 2 data error, 3 backend
//! error.

pub mod config;
mod manifest;
mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{BackendKind, ConfigError, PipelineConfig};
pub use manifest::{FileDigest, Run};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<vnjp_core::corpus::CorpusError> for CliError {
    fn from(e: vnjp_core::corpus::CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<vnjp_core::analyze::AnalyzeError> for CliError {
    fn from(e: vnjp_core::analyze::AnalyzeError) -> Self {
        use vnjp_core::analyze::AnalyzeError::*;
        match e {
            InvalidTargetFraction(_) | InvalidBucketWidth => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<vnjp_core::retrieve::RetrieveError> for CliError {
    fn from(e: vnjp_core::retrieve::RetrieveError) -> Self {
        use vnjp_core::retrieve::RetrieveError::*;
        match e {
            InvalidParameters { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<vnjp_core::generate::TemplateError> for CliError {
    fn from(e: vnjp_core::generate::TemplateError) -> Self {
        CliError::Config(format!("prompt template: {e}"))
    }
}

impl From<vnjp_core::generate::GenerateError> for CliError {
    fn from(e: vnjp_core::generate::GenerateError) -> Self {
        use vnjp_core::generate::GenerateError::*;
        match e {
            InvalidTemperature(_) => CliError::Config(e.to_string()),
            Template(t) => t.into(),
            Corpus(c) => c.into(),
            Transport { .. } | Rejected { .. } | Extraction { .. } | AllFailed { .. } => {
                CliError::Backend(e.to_string())
            }
        }
    }
}

impl From<vnjp_core::assemble::AssembleError> for CliError {
    fn from(e: vnjp_core::assemble::AssembleError) -> Self {
        use vnjp_core::assemble::AssembleError::*;
        match e {
            InvalidSplit(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<vnjp_core::metrics::MetricsError> for CliError {
    fn from(e: vnjp_core::metrics::MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "vnjp",
    version,
    about = "Rare-word flagging, BM25 few-shot retrieval and synthetic refinement for vi-ja corpora"
)]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Pipeline config file (TOML). Built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config value; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Input corpus (`.tsv` or `.jsonl`); overrides `paths.input`.
    #[arg(long, short = 'i', global = true, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, short = 'o', global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Use the deterministic offline backend.
    #[arg(long, global = true)]
    pub mock_backend: bool,
    /// Fixed rare-word threshold instead of targeting a fraction.
    #[arg(long, global = true, value_name = "T")]
    pub threshold: Option<u64>,
    /// Keep flagged baseline pairs next to their synthetic replacements.
    #[arg(long, global = true)]
    pub keep_flagged_baseline: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Frequency table, threshold report and sentence-length histograms.
    Analyze,
    /// Mark sentences containing rare target-side tokens.
    Flag,
    /// Build the BM25 index and list demonstrations for flagged pairs.
    Retrieve,
    /// Generate two synthetic translations per flagged pair.
    Generate,
    /// Replace flagged pairs by their synthetic translations.
    Merge {
        /// Synthetic pairs; defaults to `<out_dir>/synthetic.jsonl`.
        #[arg(long, value_name = "FILE")]
        synthetic: Option<PathBuf>,
    },
    /// Seeded, source-grouped train/val/test split.
    Split,
    /// Write chat-format training records.
    Export {
        /// Output file name inside the output directory.
        #[arg(long, value_name = "NAME")]
        output: Option<String>,
    },
    /// Corpus BLEU of hypotheses against references.
    Bleu {
        /// Hypotheses, one per line.
        #[arg(long, value_name = "FILE", requires = "reference", conflicts_with = "tsv")]
        hyp: Option<PathBuf>,
        /// References, one per line.
        #[arg(long = "ref", value_name = "FILE", requires = "hyp")]
        reference: Option<PathBuf>,
        /// `id<TAB>hyp<TAB>ref` lines instead of two files.
        #[arg(long, value_name = "FILE", conflicts_with = "reference")]
        tsv: Option<PathBuf>,
    },
    /// Corpus statistics and histograms.
    Stats,
    /// analyze, flag, retrieve, generate, merge, split and export in one go.
    Pipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Flag => "flag",
            Command::Retrieve => "retrieve",
            Command::Generate => "generate",
            Command::Merge { .. } => "merge",
            Command::Split => "split",
            Command::Export { .. } => "export",
            Command::Bleu { .. } => "bleu",
            Command::Stats => "stats",
            Command::Pipeline => "pipeline",
        }
    }
}

/// Loads the config file (if any) and applies `--set` and flag overrides,
/// in that order.
pub fn effective_config(opts: &GlobalOpts) -> Result<PipelineConfig, CliError> {
    let mut config = match &opts.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for assignment in &opts.set {
        config.set(assignment)?;
    }
    if let Some(input) = &opts.input {
        config.paths.input = Some(input.clone());
    }
    if let Some(dir) = &opts.out_dir {
        config.paths.out_dir = dir.clone();
    }
    if opts.mock_backend {
        config.backend.kind = BackendKind::Mock;
    }
    if let Some(t) = opts.threshold {
        config.analyze.threshold = Some(t);
    }
    if opts.keep_flagged_baseline {
        config.export.keep_flagged_baseline = true;
    }
    config.validate()?;
    Ok(config)
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("vnjp {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = effective_config(&cli.opts)?;
    let mut run = Run::new(cli.command.name(), &config.paths.out_dir);
    if let Some(path) = &cli.opts.config {
        run.read_input(path)?;
    }
    let result = stages::dispatch(&cli.command, &config, &mut run);
    // a backend failure still leaves a manifest for the partial outputs
    if result.is_ok() || matches!(result, Err(CliError::Backend(_))) {
        run.finish(&config)?;
    }
    result
}
