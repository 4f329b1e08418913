//! `kljn` command-line front end.
//!
//! Human-readable summaries go to stdout, machine-readable data only to
//! files: the data file named by `--out` and a `<stem>.summary.json` beside it.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use kljn_core::{AttackMode, KljnError, Resistor};
use thiserror::Error;

mod commands;
pub mod settings;

pub use settings::CliConfig;

#[derive(Debug, Parser)]
#[command(
    name = "kljn",
    version,
    about = "KLJN key-exchange simulator with compromised-RNG eavesdropper attacks"
)]
pub struct Cli {
    /// Flat key = value file; flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: CliConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Honest protocol Monte Carlo: empirical vs nominal mean-square levels.
    Simulate,
    /// Monte Carlo with Eve replaying the compromised generators.
    Attack {
        #[arg(long, value_parser = settings::parse_mode)]
        mode: Option<AttackMode>,
    },
    /// Coincidence run lengths of two quantized noises vs the geometric law.
    Timing {
        /// Sample pairs to draw [default: 1e6].
        #[arg(long, value_name = "N", value_parser = settings::parse_count)]
        samples: Option<usize>,
    },
    /// One BEP and both of Bob's candidate resistance traces.
    #[command(name = "reproduce-fig4")]
    ReproduceFig4 {
        /// Bob's resistor [default: H].
        #[arg(long, value_parser = settings::parse_resistor)]
        bob_choice: Option<Resistor>,
        /// Alice's resistor [default: L].
        #[arg(long, value_parser = settings::parse_resistor)]
        alice_choice: Option<Resistor>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] KljnError),
    #[error("cannot write output: {0}")]
    Stdout(#[from] io::Error),
}

impl CliError {
    /// 2 for bad input (matching clap's usage errors), 1 for failed runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(KljnError::InvalidParameter { .. }) => 2,
            _ => 1,
        }
    }
}

impl Cli {
    /// Merges the config file (if any), the flags and the subcommand options.
    pub fn settings(&self) -> Result<CliConfig, CliError> {
        let file = match &self.config {
            Some(path) => CliConfig::from_file(path)?,
            None => CliConfig::default(),
        };
        let mut top = self.flags.clone();
        match &self.command {
            Command::Simulate => {}
            Command::Attack { mode } => top.mode = *mode,
            Command::Timing { samples } => top.samples = *samples,
            Command::ReproduceFig4 {
                bob_choice,
                alice_choice,
            } => {
                top.bob_choice = *bob_choice;
                top.alice_choice = *alice_choice;
            }
        }
        Ok(file.overlay(top))
    }
}

/// Runs one invocation, writing the summary to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let settings = cli.settings()?;
    match cli.command {
        Command::Simulate => commands::simulate(&settings, out),
        Command::Attack { .. } => commands::attack(&settings, out),
        Command::Timing { .. } => commands::timing(&settings, out),
        Command::ReproduceFig4 { .. } => commands::reproduce_fig4(&settings, out),
    }
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli =
            Cli::try_parse_from(["kljn", "simulate", "--n-beps", "1e4", "--seed", "7"]).unwrap();
        let s = cli.settings().unwrap();
        assert_eq!(s.n_beps, Some(10_000));
        assert_eq!(s.seed, Some(7));
    }

    #[test]
    fn usage_errors() {
        for args in [
            &["kljn", "attack", "--mode", "quantum"][..],
            &["kljn", "timing", "--delta", "0"],
            &["kljn", "simulate", "--format", "xml"],
            &["kljn", "reproduce-fig4", "--bob-choice", "M"],
            &["kljn"],
        ] {
            let e = Cli::try_parse_from(args).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{args:?}");
        }
    }

    #[test]
    fn subcommand_options_reach_settings() {
        let cli = Cli::try_parse_from(["kljn", "attack", "--mode", "unilateral"]).unwrap();
        assert_eq!(cli.settings().unwrap().mode, Some(AttackMode::Unilateral));
        let cli = Cli::try_parse_from(["kljn", "reproduce-fig4", "--bob-choice", "L"]).unwrap();
        assert_eq!(cli.settings().unwrap().bob_choice, Some(Resistor::Low));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Core(KljnError::ModelViolation("x".into())).exit_code(),
            1
        );
    }
}
