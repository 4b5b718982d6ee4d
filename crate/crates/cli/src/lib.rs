//! The `newsflow` command line: label, train, score, eval, backtest,
//! ablate-layer and synth, each writing artifacts plus a JSON manifest
//! under the run's output directory.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("incompatible artifacts: {0}")]
    Incompatible(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Incompatible(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "newsflow", version, about = "Headline sentiment models, extreme-set evaluation and long-short backtests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set rnn.seed=3`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute forward returns and write per-window label files.
    Label(RunArgs),
    /// Fit every configured model on every window.
    Train(RunArgs),
    /// Score each window's headlines with its trained models.
    Score(RunArgs),
    /// Extreme-set accuracy and MCC table.
    Eval(RunArgs),
    /// Simulate the long-short strategies on test-period scores.
    Backtest(RunArgs),
    /// Compare contextual embeddings from three encoder layers.
    AblateLayer {
        #[command(flatten)]
        run: RunArgs,
        /// Embedding files, one per layer.
        #[arg(long, num_args = 1.., required = true)]
        embeddings: Vec<PathBuf>,
    },
    /// Generate a planted-signal corpus with a matching run config.
    Synth {
        /// TOML generator spec; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override a spec value, e.g. `--set effect_size=0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(run: &RunArgs) -> Result<config::Resolved, CliError> {
    config::load(run.config.as_deref(), &run.set)
}

pub fn execute(cli: &Cli) -> Result<manifest::Manifest, CliError> {
    match &cli.command {
        Command::Label(r) => commands::cmd_label(&load(r)?),
        Command::Train(r) => commands::cmd_train(&load(r)?),
        Command::Score(r) => commands::cmd_score(&load(r)?),
        Command::Eval(r) => commands::cmd_eval(&load(r)?),
        Command::Backtest(r) => commands::cmd_backtest(&load(r)?),
        Command::AblateLayer { run, embeddings } => {
            Ok(commands::cmd_ablate_layer(&load(run)?, embeddings)?.0)
        }
        Command::Synth { spec, set, out } => {
            commands::cmd_synth(&commands::load_spec(spec.as_deref(), set)?, out)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(m) => {
            eprintln!("{}: wrote {} artifacts", m.command, m.outputs.len());
            0
        }
        Err(e) => {
            eprintln!("newsflow: {e}");
            e.exit_code()
        }
    }
}
