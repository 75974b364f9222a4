use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "mpa",
    version,
    about = "Medoid prototype alignment for cross-domain intrusion detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config file; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic source/target pair with hidden target labels
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train on a labeled source CSV and an unlabeled target CSV
    Train {
        #[command(flatten)]
        common: Common,
        /// Labeled source CSV
        #[arg(long)]
        source: PathBuf,
        /// Unlabeled target CSV
        #[arg(long)]
        target: PathBuf,
        /// Label column of the source CSV
        #[arg(long, default_value = "label")]
        label_column: String,
    },
    /// Score a checkpoint's target predictions against a truth file
    Eval {
        /// Training config to embed in the report
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target-domain CSV to predict
        #[arg(long)]
        target: PathBuf,
        /// Single-column `label` CSV
        #[arg(long)]
        truth: PathBuf,
        /// Task name used in the report
        #[arg(long, default_value = "task")]
        name: String,
        #[arg(long, value_enum, default_value = "forward")]
        direction: commands::DirectionArg,
    },
    /// Run the four-task battery, or replay published tables with --fixtures
    Battery {
        #[command(flatten)]
        common: Common,
        /// Worker threads; reports do not depend on this
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Replay the published result tables instead of training
        #[arg(long)]
        fixtures: bool,
    },
    /// Compare analytic and finite-difference gradients
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Offset added to one analytic gradient coordinate (negative control)
        #[arg(long, hide = true)]
        corrupt_gradient: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { common } => commands::synth(&common),
        Command::Train {
            common,
            source,
            target,
            label_column,
        } => commands::train(&common, &source, &target, &label_column),
        Command::Eval {
            config,
            out,
            checkpoint,
            target,
            truth,
            name,
            direction,
        } => commands::eval(
            config.as_deref(),
            &out,
            &checkpoint,
            &target,
            &truth,
            &name,
            direction.into(),
        ),
        Command::Battery {
            common,
            jobs,
            fixtures,
        } => commands::battery(&common, jobs, fixtures),
        Command::Gradcheck {
            common,
            corrupt_gradient,
        } => commands::gradcheck(&common, corrupt_gradient),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::CheckFailed(msg) => write!(f, "check failed: {msg}"),
        }
    }
}
