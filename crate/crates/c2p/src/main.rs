use std::path::PathBuf;
use std::process::ExitCode;

use c2p::commands::{self, Failure, Overrides};
use c2p_core::window::Attribute;
use clap::{Args, Parser, Subcommand};

/// Self-supervised affect-contour pseudo-labels for speech.
#[derive(Parser)]
#[command(name = "c2p", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Affect attribute: arousal or valence.
    #[arg(long)]
    attribute: Option<Attribute>,
}

impl Common {
    fn load(&self) -> Result<c2p::config::ExperimentConfig, Failure> {
        let overrides = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            attribute: self.attribute,
        };
        commands::load_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train C2P (or the configured baseline) on the train split.
    Train(Common),
    /// Score a checkpoint on the dev split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Cluster contour summaries, elbow curve and arousal x valence pairing.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Checkpoint for the configured attribute.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Valence checkpoint; with an arousal --checkpoint enables pairing.
        #[arg(long)]
        checkpoint_valence: Option<PathBuf>,
    },
    /// Inertia against k.
    SweepK {
        #[command(flatten)]
        common: Common,
        /// Sweep this checkpoint's clustering space instead of raw contours.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write a synthetic dataset with known archetypes.
    Synth(Common),
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(c) => commands::train(&c.load()?).map(drop),
        Command::Evaluate { common, checkpoint } => commands::evaluate(&common.load()?, &checkpoint).map(drop),
        Command::Analyze {
            common,
            checkpoint,
            checkpoint_valence,
        } => commands::analyze(&common.load()?, &checkpoint, checkpoint_valence.as_deref()).map(drop),
        Command::SweepK { common, checkpoint } => commands::sweep_k(&common.load()?, checkpoint.as_deref()).map(drop),
        Command::Synth(c) => commands::synth(&c.load()?).map(|p| println!("{}", p.display())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
