//! `mealwise`: simulate meal streams, train the incremental head, and run
//! personalized evaluations and factor ablations.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// An error while loading a user-supplied input: always a user error.
    pub fn input(e: mealwise::Error) -> Self {
        Self::user(e.to_string())
    }
}

impl From<mealwise::Error> for CliError {
    fn from(e: mealwise::Error) -> Self {
        let code = if e.is_user_error() { 2 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mealwise",
    version,
    about = "Personalized incremental food classification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; required when no config is given.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read embeddings from this emb/1 file instead of the configured provider.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Worker threads for per-user evaluation; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate embeddings (synthetic provider) and a pattern corpus.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the base head and any incremental sessions.
    Train {
        #[command(flatten)]
        common: Common,
        /// Append an incremental session with this many new classes.
        #[arg(long = "add-session", value_name = "N")]
        add_session: Vec<usize>,
        /// Session gate: `learned` or `fixed:<value>`.
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Run personalized streams and write the timestep table.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint; repeat to compare variants.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        patterns: PathBuf,
        /// `all`, `none`, or a comma list of frequency,time,location.
        #[arg(long, default_value = "all")]
        factors: String,
        /// Comma-separated meal counts.
        #[arg(long = "checkpoints", value_delimiter = ',')]
        at: Option<Vec<usize>>,
        /// Also write base/new/total accuracy per checkpoint.
        #[arg(long)]
        breakdown: bool,
        /// Report accuracy over the last N meals instead of cumulatively.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Evaluate the five factor scenarios and write plot data.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long = "checkpoints", value_delimiter = ',')]
        at: Option<Vec<usize>>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Re-run a command from its manifest and verify the outputs.
    Replay {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    use manifest::Invocation;
    match cli.command {
        Command::Simulate { common } => {
            let cfg = commands::resolve(&common, |_| Ok(()))?;
            commands::execute(&cfg, &Invocation::Simulate, common.jobs).map(drop)
        }
        Command::Train {
            common,
            add_session,
            gamma,
        } => {
            let cfg = commands::resolve(&common, |cfg| {
                cfg.model.sessions.extend(add_session);
                if let Some(g) = gamma {
                    cfg.model.gamma = g.parse().map_err(CliError::input)?;
                }
                Ok(())
            })?;
            commands::execute(&cfg, &Invocation::Train, common.jobs).map(drop)
        }
        Command::Evaluate {
            common,
            checkpoints,
            patterns,
            factors,
            at,
            breakdown,
            window,
        } => {
            let cfg = commands::resolve(&common, |cfg| commands::apply_eval_flags(cfg, at, window))?;
            mealwise::harness::parse_factors(&factors).map_err(CliError::input)?;
            let inv = Invocation::Evaluate {
                checkpoints: checkpoints
                    .iter()
                    .map(|p| commands::absolute(p))
                    .collect::<Result<_, _>>()?,
                patterns: commands::absolute(&patterns)?,
                factors,
                breakdown,
            };
            commands::execute(&cfg, &inv, common.jobs).map(drop)
        }
        Command::Ablate {
            common,
            checkpoint,
            patterns,
            at,
            window,
        } => {
            let cfg = commands::resolve(&common, |cfg| commands::apply_eval_flags(cfg, at, window))?;
            let inv = Invocation::Ablate {
                checkpoint: commands::absolute(&checkpoint)?,
                patterns: commands::absolute(&patterns)?,
            };
            commands::execute(&cfg, &inv, common.jobs).map(drop)
        }
        Command::Replay { manifest, out, jobs } => commands::replay(&manifest, out, jobs),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
