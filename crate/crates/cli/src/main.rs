//! `chance`: solve chance-constrained benchmark problems and run the
//! verification suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chance_cli::config::{Entry, RunConfig};
use chance_cli::{run, CliError};
use chance_core::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "chance", version, about = "Chance-constrained optimization over scenario data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write iterates.csv, levelsets.csv and config.txt.
    Run {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print outer iterations and warnings to stderr.
        #[arg(long)]
        verbose: bool,
        /// Override one config key.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<Entry>,
    },
    /// Run property suites: errorbound, subgradients, smoothing,
    /// penalization, quantiles or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List built-in problems and file templates.
    ListProblems,
}

fn run_command(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    verbose: bool,
    mut overrides: Vec<Entry>,
) -> Result<i32, CliError> {
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(value) = value {
            overrides.push(Entry {
                key: key.into(),
                value,
            });
        }
    };
    flag("seed", seed.map(|s| s.to_string()));
    flag("out", out.map(|p| p.display().to_string()));
    flag("verbose", verbose.then(|| "true".to_string()));
    let config = match config {
        Some(path) => RunConfig::load(&path, &overrides)?,
        None => RunConfig::from_entries(&overrides)?,
    };
    let outcome = run::execute(&config)?;
    if config.verbose {
        eprint!("{}", run::details(&outcome.report));
    }
    println!("{}", outcome.summary);
    Ok(outcome.exit_code())
}

fn verify_command(suite: &str, seed: u64) -> Result<i32, CliError> {
    let mut failed = false;
    for suite in Suite::parse_list(suite)? {
        let report = run_suite(suite, seed)?;
        print!("{}", report.table());
        failed |= !report.passed();
    }
    println!("{}", if failed { "FAIL" } else { "PASS" });
    Ok(i32::from(failed))
}

fn list_problems() {
    println!("toy2d              2-d quadratic objective, quadratic-form constraint, p = 0.008");
    println!("norm:<d>           d-dimensional norm problem, p = 0.8, known optimum");
    println!("linear:<path>      scenario rows (a_1..a_d, b), g = a^T x - b, f = cost^T x");
    println!("quadratic:<path>   scenario rows (c_1..c_d, r), g = |x - c|^2 - r, f = cost^T x");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            verbose,
            set,
        } => run_command(config, seed, out, verbose, set),
        Command::Verify { suite, seed } => verify_command(&suite, seed),
        Command::ListProblems => {
            list_problems();
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
