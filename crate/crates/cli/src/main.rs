use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sbamdt_cli::{
    cmd_diag, cmd_fit, cmd_predict, cmd_report, cmd_simulate, format_stats, CliError, Config,
};

#[derive(Parser)]
#[command(
    name = "sbamdt",
    version,
    about = "Soft/hard semi-multivariate Bayesian additive decision trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Key-value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate synthetic train/test CSVs.
    Simulate,
    /// Fit a model and save it.
    Fit,
    /// Posterior predictive summaries at test points.
    Predict,
    /// Metrics, feature importance and prediction surfaces.
    Report,
    /// Analytic vs Monte Carlo prior covariance.
    Diag,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed);
    }
    if let Some(out) = &cli.out {
        cfg.set("out", out.display());
    }
    match cli.command {
        Command::Simulate => {
            for p in cmd_simulate(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Fit => println!("{}", format_stats(&cmd_fit(&cfg)?)),
        Command::Predict => {
            for p in cmd_predict(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Report => {
            let m = cmd_report(&cfg)?;
            println!(
                "rmspe {} mape {} crps {} (truth: {})",
                m.rmspe, m.mape, m.crps, m.truth
            );
        }
        Command::Diag => {
            let d = cmd_diag(&cfg)?;
            println!(
                "given T,A: max |dev| {:.3e}, max z {:.2}, psd {}",
                d.given_trees_and_decisions.max_abs_deviation,
                d.given_trees_and_decisions.max_z,
                d.given_trees_and_decisions.psd
            );
            println!(
                "given T: max |dev| {:.3e}, max z {:.2}, psd {}",
                d.given_trees.max_abs_deviation, d.given_trees.max_z, d.given_trees.psd
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
