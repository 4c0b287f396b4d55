//! `ptsampler`: run, validate and cross-check process tensor sampling experiments.

mod config;
mod error;
mod output;
mod runner;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{validate, ExperimentConfig, Experiment};
use error::CliError;

#[derive(Parser)]
#[command(name = "ptsampler", version, about = "Multi-time sampling experiments on open quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file, or inline as `run <experiment> key=value ...`.
    Run {
        target: String,
        params: Vec<String>,
    },
    /// Check a config and list its problems without running it.
    Validate {
        target: String,
        params: Vec<String>,
    },
    /// Compare trajectory and Choi probabilities on random processes.
    BornCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(target: &str, params: &[String]) -> Result<ExperimentConfig, CliError> {
    let is_experiment = Experiment::ALL.iter().any(|e| e.name() == target);
    if is_experiment && !Path::new(target).is_file() {
        return ExperimentConfig::from_args(target, params);
    }
    let text = std::fs::read_to_string(target).map_err(|e| CliError::Config(format!("cannot read {target}: {e}")))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if !params.is_empty() {
        // Command-line pairs override the file.
        let mut merged: Vec<String> = config.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        merged.push(format!("seed={}", config.seed));
        merged.push(format!("output_dir={}", config.output_dir.display()));
        let overrides: Vec<&String> = params.iter().collect();
        merged.retain(|m| {
            let key = m.split('=').next().unwrap_or("");
            !overrides.iter().any(|o| o.split('=').next() == Some(key))
        });
        merged.extend(params.iter().cloned());
        config = ExperimentConfig::from_args(config.experiment.name(), &merged)?;
    }
    Ok(config)
}

fn set_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PTSAMPLER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("PTSAMPLER_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    set_threads()?;
    match cli.command {
        Command::Run { target, params } => {
            let config = load(&target, &params)?;
            let manifest = runner::run(&config)?;
            println!(
                "{}: wrote {} files to {} in {:.2}s",
                manifest.experiment,
                manifest.outputs.len() + 1,
                manifest.output_dir.display(),
                manifest.wall_time_seconds
            );
        }
        Command::Validate { target, params } => {
            let config = load(&target, &params)?;
            let (_, diags) = validate(&config);
            for d in &diags {
                println!("{d}");
            }
            if diags.is_empty() {
                println!("ok: {} config is complete", config.experiment);
            }
        }
        Command::BornCheck { instances, seed } => {
            let r = ptsampler_core::process::born_check(instances, seed)?;
            println!(
                "born-check: {} instances, max |p_traj - p_choi| = {:.3e} (worst instance {})",
                r.instances, r.max_abs_diff, r.worst_instance
            );
            if !(r.max_abs_diff < runner::BORN_TOLERANCE) {
                return Err(CliError::Check(format!("difference exceeds {:e}", runner::BORN_TOLERANCE)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
