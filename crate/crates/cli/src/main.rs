use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use osd3::config::{Config, KEYS};
use osd3::{commands, CliError};

#[derive(Parser)]
#[command(
    name = "osd3",
    version,
    about = "Three-class overlapped speech detection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write a seeded synthetic corpus (WAV, labels, manifest)
    Synth,
    /// Train a model from a manifest
    Train,
    /// Score a WAV file or every clip of a manifest
    Score,
    /// Calibrate a threshold to a target precision
    Calibrate,
    /// Turn a score dump into OSD segments
    Segment,
    /// Split SAD segments at OSD boundaries
    Split,
    /// Assign second speakers to overlap pieces
    Assign,
    /// Report DER or frame-level OSD metrics
    Eval,
    /// List the configuration keys
    Keys,
}

#[derive(Parser)]
#[command(no_binary_name = true, disable_help_flag = true)]
struct RunArgs {
    /// Configuration file of key = value lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as --key value or --key=value
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn run(command: Command, args: Vec<String>) -> Result<(), CliError> {
    if command == Command::Keys {
        for (k, d) in KEYS {
            println!("{k:<24} {d}");
        }
        return Ok(());
    }
    let run = RunArgs::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut cfg = match &run.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_overrides(&run.overrides)?;
    match command {
        Command::Synth => commands::synth(&cfg).map(drop),
        Command::Train => commands::train(&cfg).map(drop),
        Command::Score => commands::score(&cfg).map(drop),
        Command::Calibrate => commands::calibrate_cmd(&cfg).map(drop),
        Command::Segment => commands::segment(&cfg).map(drop),
        Command::Split => commands::split(&cfg).map(drop),
        Command::Assign => commands::assign(&cfg).map(drop),
        Command::Eval => commands::eval(&cfg).map(drop),
        Command::Keys => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let mut argv: Vec<String> = std::env::args().collect();
    // The subcommand is parsed by clap; everything after it is config.
    let split = argv
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(argv.len(), |i| i + 2);
    let rest = argv.split_off(split.min(argv.len()));
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command, rest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
