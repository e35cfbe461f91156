//! Command-line front end for `dalab`: equilibrium solving and certification,
//! DDPG training and evaluation, and PDA tournaments.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod output;
pub mod tournament;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dalab::equilibrium::MarketSpec;

use commands::{Outcome, Settings, VerifyArgs};
use config::ExperimentConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dalab", version, about = "Periodic double-auction laboratory")]
pub struct Cli {
    /// JSON experiment config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for Monte-Carlo scans and tournament games.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the equilibrium scale factors of one or all cases.
    Solve {
        /// 1-4, a comma-separated list, or `all`.
        #[arg(long)]
        case: Option<String>,
        /// Type supports as `l_b,h_b,l_s,h_s`.
        #[arg(long)]
        spec: Option<MarketSpec>,
    },
    /// Certify solved (or given) profiles with a Monte-Carlo best-response scan.
    Verify {
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        spec: Option<MarketSpec>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        step: Option<f64>,
        /// Profile to certify instead of the solution, as `a_b1,a_b2,a_s1,a_s2`.
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Train a buyer against an equilibrium seller in the two-unit game.
    TrainSingleshot {
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train a PDA bidder on games against ZI buyers.
    TrainPda {
        #[arg(long)]
        updates: Option<usize>,
    },
    /// Play the learned PDA bidder against the baseline buyers.
    Tournament {
        /// Trained PDA checkpoint; without one an agent is trained first.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Games per set.
        #[arg(long)]
        games: Option<u32>,
    },
    /// Evaluate a single-shot checkpoint over sampled states.
    Evaluate {
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        states: Option<usize>,
    },
}

pub fn settings(cli: &Cli) -> CliResult<Settings> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Settings::new(config, cli.seed, cli.jobs, cli.out.clone())
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Solve { case, spec } => commands::cmd_solve(&s, case.as_deref(), *spec),
        Command::Verify { case, spec, samples, step, alphas } => commands::cmd_verify(
            &s,
            VerifyArgs { case: case.as_deref(), spec: *spec, samples: *samples, step: *step, alphas: alphas.as_deref() },
        )
        .map(|(o, _)| o),
        Command::TrainSingleshot { case, episodes } => commands::cmd_train_singleshot(&s, case.as_deref(), *episodes),
        Command::TrainPda { updates } => commands::cmd_train_pda(&s, *updates).map(|(o, _)| o),
        Command::Tournament { checkpoint, games } => {
            commands::cmd_tournament(&s, checkpoint.as_deref(), *games).map(|(o, _)| o)
        }
        Command::Evaluate { case, checkpoint, states } => {
            commands::cmd_evaluate(&s, case.as_deref(), checkpoint.as_deref(), *states).map(|(o, _)| o)
        }
    }
}
