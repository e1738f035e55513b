//! Command-line front end for the `longline` estimators.
//!
//! [`run`] parses arguments, dispatches to a subcommand and returns the process
//! exit code: 0 on success, 2 for usage errors, 3 for unreadable or invalid
//! input data, 4 for numerical failures and 5 for file system errors.

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

pub mod bayes;
pub mod error;
pub mod estimate;
pub mod manifest;
pub mod simulate;
pub mod study;
pub mod synthetic;
mod table;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "longline", version, about = "Relative abundance indices from longline catch records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit abundance indices per (year, area) group of a survey file.
    Estimate(estimate::EstimateArgs),
    /// Simulate a survey under known catch rates and escape probabilities.
    Simulate(simulate::SimulateArgs),
    /// Run a Monte Carlo study over a grid of catch rates.
    Study(study::StudyArgs),
    /// Sample the posterior of a catch model with Metropolis-Hastings.
    Bayes(bayes::BayesArgs),
    /// Write the bundled synthetic two-area survey.
    Synthetic(synthetic::SyntheticArgs),
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = run_with(args, &mut out);
    let _ = out.flush();
    code
}

/// [`run`] with the report written to `out` instead of standard output.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let recorded: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.command {
        Command::Estimate(a) => estimate::run(&a, &recorded, out),
        Command::Simulate(a) => simulate::run(&a, &recorded, out),
        Command::Study(a) => study::run(&a, &recorded, out),
        Command::Bayes(a) => bayes::run(&a, &recorded, out),
        Command::Synthetic(a) => synthetic::run(&a, &recorded, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `a,b` into two numbers.
pub(crate) fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    Ok((num(a)?, num(b)?))
}
