use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rbsde_chain::run::{exit_code, run, Command, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Validate,
    Simulate,
    SolveBsde,
    SolveRbsde,
    PriceAmerican,
    Hedge,
    Verify,
    PlotData,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Validate => Command::Validate,
            Sub::Simulate => Command::Simulate,
            Sub::SolveBsde => Command::SolveBsde,
            Sub::SolveRbsde => Command::SolveRbsde,
            Sub::PriceAmerican => Command::PriceAmerican,
            Sub::Hedge => Command::Hedge,
            Sub::Verify => Command::Verify,
            Sub::PlotData => Command::PlotData,
        }
    }
}

/// Markov-chain BSDE, reflected BSDE and American superhedging jobs.
#[derive(Debug, Parser)]
#[command(name = "rbsde", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Fail instead of warning when the contraction condition is violated.
    #[arg(long)]
    strict_contraction: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        steps: cli.steps,
        paths: cli.paths,
        strict_contraction: cli.strict_contraction,
    };
    let command = Command::from(cli.command);
    let result = run(cli.config.as_deref(), command, &overrides);
    match &result {
        Ok(outcome) => {
            for check in &outcome.checks {
                println!(
                    "{:<32} {} lhs={:.10e} rhs={:.10e} se={:.3e}",
                    check.name,
                    if check.pass { "PASS" } else { "FAIL" },
                    check.lhs,
                    check.rhs,
                    check.std_error
                );
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
        }
        Err(failure) => eprintln!("rbsde {command}: {failure}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
