use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pstat_cli::config::{Format, RunConfig};
use pstat_cli::run::{run, Command, RunOptions};
use pstat_cli::CliError;

/// P-statistical convergence and Korovkin-type approximation experiments.
#[derive(Debug, Parser)]
#[command(name = "pstat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration. `selftest` ignores it.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overrides `output.dir` in the config.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Which outputs to write, overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Exit with status 2 when a check fails.
    #[arg(long, global = true)]
    assert: bool,
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let config = match (&cli.config, cli.command) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Command::Selftest) => RunConfig::default(),
        (None, _) => return Err(CliError::Resolve("--config is required".into())),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("pstat-out"));
    let opts = RunOptions {
        out,
        threads: cli.threads,
        format: cli.format.or(config.output.format).unwrap_or_default(),
        assert: cli.assert || cli.command == Command::Selftest,
    };
    let manifest = run(cli.command, &config, &opts)?;
    for c in &manifest.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("{mark} {}: {}", c.name, c.detail);
    }
    for p in &manifest.outputs {
        println!("wrote {p}");
    }
    Ok(manifest.passed || !opts.assert)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
