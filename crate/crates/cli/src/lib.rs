//! The `scriptviolence` command line: configuration, file plumbing and one
//! subcommand per pipeline stage.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
pub mod config;
mod selfcheck;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: scriptviolence::Error },
    #[error(transparent)]
    Core(#[from] scriptviolence::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn file(path: &Path, source: scriptviolence::Error) -> Self {
        CliError::File { path: path.to_path_buf(), source }
    }

    /// 2 for filesystem failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            CliError::File { source, .. } | CliError::Core(source) if source.is_io() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scriptviolence", version, about = "Violence classification and role analysis for screenplays")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `train.k` (context window size, even).
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Overrides `out_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Parse screenplays into the canonical dataset.
    Ingest,
    /// Cross-validate the hidden size and train the final classifier.
    Train,
    /// Write per-utterance violence posteriors and movie labels.
    Classify,
    /// Extract roles and interactions from MED/HIGH utterances.
    Roles,
    /// Run the hypothesis tests over roles and interactions.
    Stats,
    /// Merge the stage outputs into one summary.
    Report,
    /// Run the gradient check and invariant self-tests.
    Check,
}

fn init_logging(level: &str) {
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(k) = cli.k {
        cfg.train.k = k;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = configure(cli)?;
    init_logging(&cfg.log_level);
    match cli.command {
        Command::Ingest => commands::ingest(&cfg, stdout),
        Command::Train => commands::train(&cfg, stdout),
        Command::Classify => commands::classify(&cfg, stdout),
        Command::Roles => commands::roles(&cfg, stdout),
        Command::Stats => commands::stats(&cfg, stdout),
        Command::Report => commands::report(&cfg, stdout),
        Command::Check => selfcheck::check(stdout),
    }
}

/// Run one command line (`argv[0]` is the program name) and return the exit
/// code: 0 on success, 1 on usage or validation errors, 2 on I/O errors.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
