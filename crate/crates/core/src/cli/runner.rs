//! Scheduling of experiment runs and persistence of their outputs.
//!
//! Layout of an output directory:
//!
//! ```text
//! config.toml                  copy of the configuration that produced the runs
//! problems.toml                extrema of the problems used
//! manifest.csv                 run_id,problem,solver,seed,status
//! failures.csv                 run_id,problem,solver,seed,message
//! runs/<run_id>/trace.csv      problem,solver,seed,cumulative_cost,best_fraction,true_value_at_incumbent
//! runs/<run_id>/observations.csv
//!     problem,solver,seed,iteration,stage,x0..x{d-1},successes,trials,cumulative_cost
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::benchmark::{BenchmarkProblem, Objective, ProblemEntry, ProblemRegistry, DEFAULT_TRIALS};
use crate::engine::{run_bo, Budget, EvalRecord, RunOutput, RunTrace, SolverSpec, Stage, TraceEntry};
use crate::error::{Error, Result};

/// Bumped whenever a change alters run results, invalidating cached runs.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+r1");
pub const PARALLELISM_ENV: &str = "BINBO_PARALLELISM";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub run_id: String,
    pub problem: String,
    pub solver: String,
    pub seed: u64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRow {
    pub run_id: String,
    pub problem: String,
    pub solver: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Identifier of a run: hash of everything that determines its result.
pub fn run_id(problem: &BenchmarkProblem, solver: &SolverSpec, budget: &Budget, seed: u64) -> String {
    let mut h = Sha256::new();
    let key = format!(
        "{}|{}|{}|{}|{:?}|{:?}|{:?}|{}|{}|{}|{:?}|{}|{}",
        CODE_VERSION,
        problem.id(),
        problem.f_min,
        problem.f_max,
        solver.name,
        solver.kind,
        solver.fidelity,
        solver.acquisition.mc_samples,
        solver.acquisition.restarts,
        solver.acquisition.local_steps,
        budget,
        solver.hyper_evals,
        seed,
    );
    h.update(key.as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_dir(output_dir: &Path, run_id: &str) -> PathBuf {
    output_dir.join("runs").join(run_id)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    problem: String,
    solver: String,
    seed: u64,
    cumulative_cost: u64,
    best_fraction: f64,
    true_value_at_incumbent: f64,
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    for e in &trace.entries {
        w.serialize(TraceRow {
            problem: trace.problem.clone(),
            solver: trace.solver.clone(),
            seed: trace.seed,
            cumulative_cost: e.cumulative_cost,
            best_fraction: e.best_fraction,
            true_value_at_incumbent: e.true_value_at_incumbent,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEntry>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize::<TraceRow>()
        .map(|row| {
            let row = row.map_err(|e| csv_err(path, e))?;
            Ok(TraceEntry {
                cumulative_cost: row.cumulative_cost,
                best_fraction: row.best_fraction,
                true_value_at_incumbent: row.true_value_at_incumbent,
            })
        })
        .collect()
}

pub fn write_observations(path: &Path, trace: &RunTrace, log: &[EvalRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let dim = log.first().map_or(0, |r| r.x.len());
    let mut header: Vec<String> = ["problem", "solver", "seed", "iteration", "stage"].map(String::from).to_vec();
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend(["successes", "trials", "cumulative_cost"].map(String::from));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in log {
        let mut row = vec![
            trace.problem.clone(),
            trace.solver.clone(),
            trace.seed.to_string(),
            r.iteration.to_string(),
            r.stage.as_str().to_string(),
        ];
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.extend([r.successes.to_string(), r.trials.to_string(), r.cumulative_cost.to_string()]);
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw observation log as written by [`write_observations`].
pub fn read_observations(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let dim = headers.iter().filter(|h| h.starts_with('x')).count();
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("short row"));
        let stage = match field(4)? {
            "init" => Stage::Init,
            "high" => Stage::High,
            "low" => Stage::Low,
            "continued" => Stage::Continued,
            s => return Err(bad(&format!("unknown stage `{s}`"))),
        };
        let x = (0..dim)
            .map(|i| field(5 + i)?.parse::<f64>().map_err(|_| bad("bad coordinate")))
            .collect::<Result<Vec<_>>>()?;
        let num = |i: usize| -> Result<u64> { field(i)?.parse::<u64>().map_err(|_| bad("bad count")) };
        out.push(EvalRecord {
            iteration: num(3)? as usize,
            stage,
            x,
            successes: num(5 + dim)? as u32,
            trials: num(6 + dim)? as u32,
            cumulative_cost: num(7 + dim)?,
            dataset_index: 0,
        });
    }
    Ok(out)
}

pub fn read_manifest(output_dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = output_dir.join("manifest.csv");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(&path, e))).collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = if rows.is_empty() {
        let mut w = csv_writer(path)?;
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        w
    } else {
        csv_writer(path)?
    };
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Problems of a config, with extrema from its problem file or the
/// built-in table.
pub fn resolve_problems(cfg: &ExperimentConfig) -> Result<Vec<BenchmarkProblem>> {
    let registry = match &cfg.problems_file {
        Some(p) => ProblemRegistry::load(p)?,
        None => ProblemRegistry::builtin()?,
    };
    cfg.problems
        .iter()
        .map(|p| registry.problem(p.function_id, p.dim, p.trials))
        .collect()
}

/// Frozen extrema of the configured problems, in problem-file format.
pub fn problem_snapshot(cfg: &ExperimentConfig) -> Result<ProblemRegistry> {
    let mut reg = ProblemRegistry::default();
    for p in resolve_problems(cfg)? {
        let (lower, upper) = p.function_id.domain();
        reg.upsert(ProblemEntry {
            function_id: p.function_id,
            dim: p.dim,
            lower,
            upper,
            f_min: p.f_min,
            f_max: p.f_max,
            trials: DEFAULT_TRIALS,
        });
    }
    Ok(reg)
}

pub fn effective_parallelism(cfg: &ExperimentConfig) -> usize {
    std::env::var(PARALLELISM_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(cfg.parallelism)
}

struct Job<'a> {
    problem: &'a BenchmarkProblem,
    solver: &'a SolverSpec,
    seed: u64,
    run_id: String,
}

fn execute(job: &Job<'_>, budget: &Budget, output_dir: &Path) -> Result<RunOutput> {
    let out = run_bo(job.problem, job.solver, budget, job.seed)?;
    let dir = run_dir(output_dir, &job.run_id);
    write_observations(&dir.join("observations.csv"), &out.trace, &out.log)?;
    write_trace(&dir.join("trace.csv"), &out.trace)?;
    Ok(out)
}

/// Executes every (problem, solver, seed) run not already recorded in the
/// manifest, then writes the manifest and failure report.
pub fn execute_runs(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let problems = resolve_problems(cfg)?;
    let out_dir = &cfg.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let previous: BTreeMap<String, ManifestRow> = read_manifest(out_dir)?
        .into_iter()
        .map(|r| (r.run_id.clone(), r))
        .collect();

    let mut jobs = Vec::new();
    for problem in &problems {
        for solver in &cfg.solvers {
            for &seed in &cfg.seeds {
                jobs.push(Job {
                    problem,
                    solver,
                    seed,
                    run_id: run_id(problem, solver, &cfg.budget, seed),
                });
            }
        }
    }

    let done = |job: &Job<'_>| {
        previous.get(&job.run_id).is_some_and(|r| r.status == "ok" || r.status == "failed")
            && run_dir(out_dir, &job.run_id).join("trace.csv").exists()
    };
    let pending: Vec<&Job<'_>> = jobs.iter().filter(|j| !done(j)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_parallelism(cfg))
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    let results: Vec<(String, Result<RunOutput>)> = pool.install(|| {
        pending
            .par_iter()
            .map(|job| (job.run_id.clone(), execute(job, &cfg.budget, out_dir)))
            .collect()
    });
    let mut fresh: BTreeMap<String, Result<RunOutput>> = results.into_iter().collect();

    let mut manifest = Vec::new();
    let mut failures = Vec::new();
    let mut summary = RunSummary {
        skipped: jobs.len() - pending.len(),
        ..Default::default()
    };
    let previous_failures: BTreeMap<String, FailureRow> = read_failures(out_dir)?
        .into_iter()
        .map(|r| (r.run_id.clone(), r))
        .collect();
    for job in &jobs {
        let failure = |message: String| FailureRow {
            run_id: job.run_id.clone(),
            problem: job.problem.id(),
            solver: job.solver.name.clone(),
            seed: job.seed,
            message,
        };
        let status = match fresh.remove(&job.run_id) {
            Some(Ok(out)) => {
                summary.executed += 1;
                match out.trace.failed {
                    Some(msg) => {
                        failures.push(failure(msg));
                        "failed"
                    }
                    None => "ok",
                }
            }
            Some(Err(e @ Error::Io { .. })) => return Err(e),
            Some(Err(e)) => {
                summary.executed += 1;
                failures.push(failure(e.to_string()));
                "error"
            }
            None => {
                let status = previous[&job.run_id].status.as_str();
                if status != "ok" {
                    if let Some(f) = previous_failures.get(&job.run_id) {
                        failures.push(f.clone());
                    }
                }
                match status {
                    "failed" => "failed",
                    _ => "ok",
                }
            }
        };
        manifest.push(ManifestRow {
            run_id: job.run_id.clone(),
            problem: job.problem.id(),
            solver: job.solver.name.clone(),
            seed: job.seed,
            status: status.to_string(),
        });
    }
    summary.failed = failures.len();
    write_rows(&out_dir.join("manifest.csv"), &manifest, &["run_id", "problem", "solver", "seed", "status"])?;
    write_rows(
        &out_dir.join("failures.csv"),
        &failures,
        &["run_id", "problem", "solver", "seed", "message"],
    )?;
    Ok(summary)
}

pub fn read_failures(output_dir: &Path) -> Result<Vec<FailureRow>> {
    let path = output_dir.join("failures.csv");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(&path, e))).collect()
}
