mod args;
mod commands;
mod config;
mod error;
mod inputs;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Artifacts;
use config::RunConfig;
use error::CliError;

fn run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    let id = cfg.run_id.as_deref().unwrap_or(command);
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
        return Err(CliError::Other(format!("invalid run id {id:?}")));
    }
    Ok(cfg.out.join(id))
}

fn check_fresh(dir: &Path, force: bool) -> Result<(), CliError> {
    let occupied = dir.exists() && fs::read_dir(dir).map_or(true, |mut d| d.next().is_some());
    if occupied && !force {
        return Err(CliError::Other(format!(
            "run directory {} already exists; choose another --run-id or pass --force",
            dir.display()
        )));
    }
    Ok(())
}

fn write_run(dir: &Path, force: bool, cfg: &RunConfig, artifacts: &Artifacts) -> Result<(), CliError> {
    check_fresh(dir, force)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    for (name, contents) in &artifacts.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).map_err(|e| CliError::Other(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let cfg = RunConfig::resolve(args)?;
    let dir = run_dir(&cfg, command.name())?;
    check_fresh(&dir, args.force)?;
    let artifacts = match command {
        Command::Extract(_) => commands::extract(&cfg)?,
        Command::Train(_) => commands::train(&cfg)?,
        Command::Evaluate(_) => commands::evaluate(&cfg)?,
        Command::Predict(_) => commands::predict(&cfg)?,
        Command::Explain(_) => commands::explain(&cfg)?,
        Command::Baseline(_) => commands::baseline(&cfg)?,
        Command::Synth(_) => commands::synth(&cfg)?,
    };
    write_run(&dir, args.force, &cfg, &artifacts)?;
    println!("{}", artifacts.summary);
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
