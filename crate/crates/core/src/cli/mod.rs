//! The `qpost` command line: `generate`, `train`, `forecast` and `evaluate`.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_evaluate, cmd_forecast, cmd_generate, cmd_train, TrainOptions};
pub use config::{RunConfig, RunFlags, OUT_DIR_ENV};

use crate::combine::CombineError;
use crate::dist::DistError;
use crate::error_model::ErrorModelError;
use crate::ingest::IngestError;
use crate::kv::KvError;
use crate::pipeline::PipelineError;
use crate::qrf::QrfError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// 1 for usage and configuration errors, 2 for data errors, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<KvError> for CliError {
    fn from(e: KvError) -> Self {
        match e {
            KvError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CombineError> for CliError {
    fn from(e: CombineError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ErrorModelError> for CliError {
    fn from(e: ErrorModelError) -> Self {
        match e {
            ErrorModelError::EmptyTable | ErrorModelError::Io(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<QrfError> for CliError {
    fn from(e: QrfError) -> Self {
        match e {
            QrfError::InvalidConfig(_) | QrfError::SampleTooLarge { .. } => {
                CliError::Usage(e.to_string())
            }
            QrfError::EmptyTable | QrfError::Format(_) | QrfError::Io(_) => {
                CliError::Data(e.to_string())
            }
            QrfError::Levels(_) | QrfError::TableMismatch => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(e) => e.into(),
            PipelineError::ErrorModel(e) => e.into(),
            PipelineError::Qrf(e) => e.into(),
            PipelineError::Combine(e) => e.into(),
            PipelineError::InsufficientTraining { .. } | PipelineError::DatasetTooShort(_) => {
                CliError::Data(e.to_string())
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qpost", version, about = "Probabilistic post-processing of multi-model temperature forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: RunFlags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic forecasts.csv and observations.csv
    Generate,
    /// Train a forest and write out-of-bag coverage by lead hour
    Train {
        /// Where to save the forest [default: <out-dir>/forest.json]
        #[arg(long)]
        save: Option<PathBuf>,
        /// Also write the training error table
        #[arg(long)]
        error_table: bool,
    },
    /// Forecast products for one origin
    Forecast,
    /// Score many randomly placed scenarios
    Evaluate,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let config = RunConfig::resolve(&cli.flags, env_out)?;
    let work = || match &cli.command {
        Command::Generate => cmd_generate(&config),
        Command::Train { save, error_table } => cmd_train(
            &config,
            &TrainOptions {
                save: save.clone(),
                error_table: *error_table,
            },
        ),
        Command::Forecast => cmd_forecast(&config),
        Command::Evaluate => cmd_evaluate(&config),
    };
    match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(work),
        None => work(),
    }
}
