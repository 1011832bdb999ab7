//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 some runs
//! failed or outputs are inconsistent, 3 I/O or other runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use binbo::benchmark::{entry_from_estimate, FunctionId, ProblemRegistry};
use binbo::cli::{load_output_config, run_experiment, verify_outputs, write_report, ConfigErrors, ExperimentConfig};
use binbo::Error;

#[derive(Parser)]
#[command(name = "binbo", version, about = "Binomial Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every configured run not already completed, then write the report.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Rebuild tables and charts of an output directory from its runs.
    Report { output_dir: PathBuf },
    /// Check charts against tables and tables against the run traces.
    Verify { output_dir: PathBuf },
    /// Re-estimate the extrema of one problem and store them in a problem file.
    RegenExtrema {
        function_id: FunctionId,
        dim: usize,
        #[arg(long, default_value = "data/problems.toml")]
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_INVALID: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const MAX_REPORTED_ISSUES: usize = 20;

fn invalid(path: &Path, errs: &ConfigErrors) -> ExitCode {
    eprintln!("invalid configuration {}:", path.display());
    for e in &errs.0 {
        eprintln!("  {e}");
    }
    ExitCode::from(EXIT_INVALID)
}

fn output_config(dir: &Path) -> Result<ExperimentConfig, ExitCode> {
    match load_output_config(dir) {
        Err(e) => Err(fail(e)),
        Ok(Err(errs)) => Err(invalid(dir, &errs)),
        Ok(Ok(cfg)) => Ok(cfg),
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::InvalidInput(_) => ExitCode::from(EXIT_INVALID),
        _ => ExitCode::from(EXIT_RUNTIME),
    }
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.command {
        Command::Run { config: path, output_dir } => {
            let text = std::fs::read_to_string(&path).map_err(|e| fail(Error::io(&path, e)))?;
            let (cfg, summary) = run_experiment(&text, output_dir)
                .map_err(fail)?
                .map_err(|errs| invalid(&path, &errs))?;
            println!(
                "executed {} runs, skipped {} completed, {} failed",
                summary.executed, summary.skipped, summary.failed
            );
            println!("report written to {}", cfg.output_dir.display());
            if summary.failed > 0 {
                eprintln!("see {}", cfg.output_dir.join("failures.csv").display());
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
        }
        Command::Report { output_dir } => {
            let cfg = output_config(&output_dir)?;
            write_report(&cfg).map_err(fail)?;
            println!("report written to {}", cfg.output_dir.display());
        }
        Command::Verify { output_dir } => {
            let cfg = output_config(&output_dir)?;
            let issues = verify_outputs(&cfg).map_err(fail)?;
            if !issues.is_empty() {
                for i in issues.iter().take(MAX_REPORTED_ISSUES) {
                    eprintln!("{i}");
                }
                if issues.len() > MAX_REPORTED_ISSUES {
                    eprintln!("... and {} more", issues.len() - MAX_REPORTED_ISSUES);
                }
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
            println!("outputs consistent");
        }
        Command::RegenExtrema {
            function_id,
            dim,
            file,
            seed,
        } => {
            let mut registry = if file.exists() {
                ProblemRegistry::load(&file).map_err(fail)?
            } else {
                ProblemRegistry::default()
            };
            let entry = entry_from_estimate(function_id, dim, seed).map_err(fail)?;
            println!("{function_id} {dim}d: f_min = {}, f_max = {}", entry.f_min, entry.f_max);
            registry.upsert(entry);
            std::fs::write(&file, registry.to_toml()).map_err(|e| fail(Error::io(&file, e)))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|code| code)
}
