use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod settings;

use settings::{Settings, CONFIG_ENV};

/// Exit status 2: bad flags or config. 3: unreadable or invalid data. 1: anything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<wsnids_core::error::Error> for CliError {
    fn from(e: wsnids_core::error::Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wsnids", version, about = "Intrusion detection experiments on WSN-DS style data")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-validate the selected models and write a report.
    Run(RunArgs),
    /// Write a SMOTE-Tomek balanced copy of a dataset.
    Balance(BalanceArgs),
    /// Score prediction files or a confusion matrix.
    Evaluate(EvaluateArgs),
    /// Print row, feature and class counts.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat TOML file with defaults for any flag.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Balanced CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Resampling report; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub drop_columns: Option<String>,
    #[arg(long)]
    pub normal_class: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// True labels, one per row (first CSV column, header required).
    #[arg(long, requires = "pred", conflicts_with = "confusion")]
    pub truth: Option<PathBuf>,
    /// Predicted labels, aligned with --truth.
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    /// Per-class scores aligned with --truth, one column per class.
    #[arg(long, requires = "truth")]
    pub scores: Option<PathBuf>,
    /// Counts as `true,predicted,count` rows.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
    #[arg(long, default_value = "binary")]
    pub task: String,
    /// macro | weighted | binary-positive; defaults by class count.
    #[arg(long)]
    pub averaging: Option<String>,
    #[arg(long)]
    pub normal_class: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "multiclass")]
    pub task: String,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub drop_columns: Option<String>,
    #[arg(long)]
    pub normal_class: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wsnids: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Balance(a) => commands::balance(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Inspect(a) => commands::inspect(a),
    }
}
