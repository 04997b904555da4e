//! Command-line driver: each subcommand loads a TOML config, runs one
//! experiment, and reports errors in percent on stdout.
//!
//! Exit codes: 0 on success, 1 for configuration or input problems, 2 for
//! numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlmc::runner;
use nlmc::{ErrorClass, ErrorReport};

#[derive(Parser)]
#[command(name = "nlmc", version, about = "Non-local multicontinuum upscaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory from the config
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured permeability fields and write them to disk
    GenerateMedia(RunArgs),
    /// Solve the steady problem on fine and coarse scales and compare
    RunStatic(RunArgs),
    /// Step the time-dependent problem on both scales and compare
    RunTransient(RunArgs),
    /// Compare localized bases against the global one over a layer schedule
    DecayStudy(RunArgs),
    /// Run every configured grid/layer combination and tabulate the errors
    Sweep(RunArgs),
    /// Check a config end to end without solving anything
    ValidateConfig(RunArgs),
}

fn load(args: &RunArgs) -> nlmc::Result<(nlmc::ExperimentConfig, PathBuf)> {
    let (mut config, path) = runner::load_config(&args.config)?;
    if let Some(out) = &args.out {
        let absolute = if out.is_absolute() {
            out.clone()
        } else {
            std::env::current_dir()
                .map_err(|e| nlmc::Error::Config(format!("cannot resolve working directory: {e}")))?
                .join(out)
        };
        config.output.dir = absolute.to_string_lossy().into_owned();
    }
    Ok((config, path))
}

fn print_report(report: &ErrorReport) {
    println!(
        "H=1/{} m={}: e1 = {:.4}%, e2 = {:.4}%",
        report.n_coarse,
        report.layers,
        100.0 * report.e1,
        100.0 * report.e2
    );
}

fn run(command: &Command) -> nlmc::Result<()> {
    match command {
        Command::GenerateMedia(args) => {
            let (config, path) = load(args)?;
            let written = runner::generate_media_files(&config, &path)?;
            for (role, file) in &written {
                println!("{role}: {}", file.display());
            }
        }
        Command::RunStatic(args) => {
            let (config, path) = load(args)?;
            let report = runner::run_static_experiment(&config, &path)?;
            print_report(&report);
        }
        Command::RunTransient(args) => {
            let (config, path) = load(args)?;
            let report = runner::run_transient_experiment(&config, &path)?;
            for point in &report.series {
                println!(
                    "t = {:.4}: e1 = {:.4}%, e2 = {:.4}%",
                    point.time,
                    100.0 * point.e1,
                    100.0 * point.e2
                );
            }
            print_report(&report);
        }
        Command::DecayStudy(args) => {
            let (config, path) = load(args)?;
            let rows = runner::run_decay_study(&config, &path)?;
            println!("m,diff_aq,tail_aq");
            for row in &rows {
                println!("{},{:.6e},{:.6e}", row.layers, row.diff_aq, row.tail_aq);
            }
        }
        Command::Sweep(args) => {
            let (config, path) = load(args)?;
            let reports = runner::run_sweep(&config, &path)?;
            for report in &reports {
                print_report(report);
            }
        }
        Command::ValidateConfig(args) => {
            let (config, path) = load(args)?;
            runner::validate_config(&config, &path)?;
            println!("config ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // bad usage is a configuration problem (exit 1); help and version are not
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err.class() {
                ErrorClass::Config => ExitCode::from(1),
                ErrorClass::Solver => ExitCode::from(2),
            }
        }
    }
}
