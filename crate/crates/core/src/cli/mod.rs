//! Experiment runner: configuration, scheduling, reports and charts.

pub mod config;
pub mod report;
pub mod runner;
pub mod svg;

pub use config::{parse_config, ConfigErrors, ExperimentConfig, FieldError, ProblemSpec};
pub use report::{build_report, verify_outputs, write_report, Report};
pub use runner::{execute_runs, RunSummary, PARALLELISM_ENV};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Configuration copy stored in every output directory.
pub const CONFIG_SNAPSHOT: &str = "config.toml";
/// Problem extrema stored in every output directory.
pub const PROBLEMS_SNAPSHOT: &str = "problems.toml";

/// Validates `text`, executes the pending runs and writes the report.
/// The outer error is a runtime failure; the inner one lists every
/// configuration problem.
pub fn run_experiment(
    text: &str,
    output_dir: Option<PathBuf>,
) -> Result<std::result::Result<(ExperimentConfig, RunSummary), ConfigErrors>> {
    let mut cfg = match parse_config(text) {
        Ok(cfg) => cfg,
        Err(e) => return Ok(Err(e)),
    };
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let problems = runner::problem_snapshot(&cfg)?;
    write(&dir.join(CONFIG_SNAPSHOT), text)?;
    write(&dir.join(PROBLEMS_SNAPSHOT), &problems.to_toml())?;
    let summary = execute_runs(&cfg)?;
    write_report(&cfg)?;
    Ok(Ok((cfg, summary)))
}

/// Configuration of an existing output directory, pointed at that
/// directory and at its frozen problem extrema.
pub fn load_output_config(dir: &Path) -> Result<std::result::Result<ExperimentConfig, ConfigErrors>> {
    let path = dir.join(CONFIG_SNAPSHOT);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(parse_config(&text).map(|mut cfg| {
        cfg.output_dir = dir.to_path_buf();
        cfg.problems_file = Some(dir.join(PROBLEMS_SNAPSHOT));
        cfg
    }))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
