//! Aggregated tables and charts built from the per-run traces.
//!
//! ```text
//! averaged.csv        problem,solver,cost,mean_regret,n_runs
//! final_regret.csv    problem,group,solver,final_regret,n_runs
//! dolan_more.csv      group,solver,tau,rho
//! plots/regret_<problem>.svg
//! plots/dolan_more_<group>.svg
//! ```
//!
//! Every problem is averaged on one cost grid shared by all its solvers, so
//! final regrets compare equal spending.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{csv_err, read_manifest, read_trace, resolve_problems, run_dir, run_id};
use super::svg::{read_series, Chart, Series};
use crate::benchmark::{BenchmarkProblem, Objective};
use crate::engine::RunTrace;
use crate::error::{Error, Result};
use crate::metrics::{align_and_average, common_grid, dolan_more, AveragedTrace, DolanMoreTable, ProfileCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRow {
    pub problem: String,
    pub solver: String,
    pub cost: u64,
    pub mean_regret: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRow {
    pub problem: String,
    pub group: String,
    pub solver: String,
    pub final_regret: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub group: String,
    pub solver: String,
    pub tau: f64,
    pub rho: f64,
}

/// Everything the report derives from the traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub averaged: Vec<AveragedTrace>,
    pub finals: Vec<FinalRow>,
    pub profiles: BTreeMap<String, Vec<ProfileCurve>>,
}

/// Grid spacing used for averaging: half a full evaluation.
pub fn grid_step(problem: &BenchmarkProblem) -> u64 {
    (u64::from(problem.trials_high) / 2).max(1)
}

/// Loads the traces of every configured run, marking failures from the
/// manifest.
pub fn load_traces(cfg: &ExperimentConfig) -> Result<Vec<(BenchmarkProblem, Vec<RunTrace>)>> {
    let problems = resolve_problems(cfg)?;
    let manifest: BTreeMap<String, String> = read_manifest(&cfg.output_dir)?
        .into_iter()
        .map(|r| (r.run_id, r.status))
        .collect();
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for problem in problems {
        let mut traces = Vec::new();
        for solver in &cfg.solvers {
            for &seed in &cfg.seeds {
                let id = run_id(&problem, solver, &cfg.budget, seed);
                let Some(status) = manifest.get(&id) else {
                    missing.push(format!("{id} ({}, {}, seed {seed})", problem.id(), solver.name));
                    continue;
                };
                let entries = if status == "error" {
                    Vec::new()
                } else {
                    read_trace(&run_dir(&cfg.output_dir, &id).join("trace.csv"))?
                };
                traces.push(RunTrace {
                    problem: problem.id(),
                    solver: solver.name.clone(),
                    seed,
                    entries,
                    failed: (status != "ok").then(|| status.clone()),
                });
            }
        }
        out.push((problem, traces));
    }
    if !missing.is_empty() {
        return Err(Error::State(format!("missing runs: {}", missing.join(", "))));
    }
    Ok(out)
}

/// Averages, final regrets and per-group performance profiles.
pub fn build_report(cfg: &ExperimentConfig) -> Result<Report> {
    let loaded = load_traces(cfg)?;
    let mut averaged = Vec::new();
    let mut finals = Vec::new();
    for (problem, traces) in &loaded {
        let usable: Vec<RunTrace> = traces.iter().filter(|t| t.failed.is_none()).cloned().collect();
        if usable.is_empty() {
            continue;
        }
        let grid = common_grid(&usable, grid_step(problem))?;
        for solver in &cfg.solvers {
            let mine: Vec<RunTrace> = usable.iter().filter(|t| t.solver == solver.name).cloned().collect();
            if mine.is_empty() {
                continue;
            }
            let avg = align_and_average(&mine, &grid)?;
            finals.push(FinalRow {
                problem: avg.problem.clone(),
                group: problem.function_id.group().to_string(),
                solver: avg.solver.clone(),
                final_regret: avg.final_regret().unwrap_or(f64::NAN),
                n_runs: avg.n_runs,
            });
            averaged.push(avg);
        }
    }

    let mut profiles = BTreeMap::new();
    let solvers: Vec<String> = cfg.solvers.iter().map(|s| s.name.clone()).collect();
    let mut groups: Vec<&str> = loaded.iter().map(|(p, _)| p.function_id.group()).collect();
    groups.sort_unstable();
    groups.dedup();
    for group in groups {
        let mut names = Vec::new();
        let mut rows = Vec::new();
        for (problem, _) in loaded.iter().filter(|(p, _)| p.function_id.group() == group) {
            let id = problem.id();
            let row: Option<Vec<f64>> = solvers
                .iter()
                .map(|s| finals.iter().find(|f| f.problem == id && &f.solver == s).map(|f| f.final_regret))
                .collect();
            // problems where some solver has no completed run are left out
            if let Some(row) = row {
                names.push(id);
                rows.push(row);
            }
        }
        if rows.is_empty() {
            continue;
        }
        let table = DolanMoreTable::new(names, solvers.clone(), rows)?;
        profiles.insert(group.to_string(), dolan_more(&table)?);
    }
    Ok(Report {
        averaged,
        finals,
        profiles,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        w.write_record(header).map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn averaged_rows(report: &Report) -> Vec<AveragedRow> {
    report
        .averaged
        .iter()
        .flat_map(|a| {
            a.costs.iter().zip(&a.mean_regret).map(|(&cost, &mean_regret)| AveragedRow {
                problem: a.problem.clone(),
                solver: a.solver.clone(),
                cost,
                mean_regret,
                n_runs: a.n_runs,
            })
        })
        .collect()
}

fn profile_rows(report: &Report) -> Vec<ProfileRow> {
    report
        .profiles
        .iter()
        .flat_map(|(group, curves)| {
            curves.iter().flat_map(move |c| {
                c.taus.iter().zip(&c.rho).map(move |(&tau, &rho)| ProfileRow {
                    group: group.clone(),
                    solver: c.solver.clone(),
                    tau,
                    rho,
                })
            })
        })
        .collect()
}

fn regret_chart(problem: &str, rows: &[AveragedRow]) -> Chart {
    let mut series: Vec<Series> = Vec::new();
    for r in rows.iter().filter(|r| r.problem == problem) {
        match series.iter_mut().find(|s| s.label == r.solver) {
            Some(s) => {
                s.x.push(r.cost.to_string());
                s.y.push(r.mean_regret.to_string());
            }
            None => series.push(Series {
                label: r.solver.clone(),
                x: vec![r.cost.to_string()],
                y: vec![r.mean_regret.to_string()],
            }),
        }
    }
    Chart {
        title: format!("Mean regret on {problem}"),
        x_label: "Bernoulli draws".into(),
        y_label: "mean regret".into(),
        log_x: false,
        steps: true,
        series,
    }
}

fn profile_chart(group: &str, rows: &[ProfileRow]) -> Chart {
    let mut series: Vec<Series> = Vec::new();
    for r in rows.iter().filter(|r| r.group == group) {
        match series.iter_mut().find(|s| s.label == r.solver) {
            Some(s) => {
                s.x.push(r.tau.to_string());
                s.y.push(r.rho.to_string());
            }
            None => series.push(Series {
                label: r.solver.clone(),
                x: vec![r.tau.to_string()],
                y: vec![r.rho.to_string()],
            }),
        }
    }
    Chart {
        title: format!("Performance profile ({group})"),
        x_label: "tau".into(),
        y_label: "share of problems".into(),
        log_x: true,
        steps: true,
        series,
    }
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the report tables and charts into the output directory.
pub fn write_report(cfg: &ExperimentConfig) -> Result<Report> {
    let report = build_report(cfg)?;
    let dir = &cfg.output_dir;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;

    let averaged = averaged_rows(&report);
    write_csv(
        &dir.join("averaged.csv"),
        &averaged,
        &["problem", "solver", "cost", "mean_regret", "n_runs"],
    )?;
    write_csv(
        &dir.join("final_regret.csv"),
        &report.finals,
        &["problem", "group", "solver", "final_regret", "n_runs"],
    )?;
    let profiles = profile_rows(&report);
    write_csv(&dir.join("dolan_more.csv"), &profiles, &["group", "solver", "tau", "rho"])?;

    let mut problems: Vec<&str> = averaged.iter().map(|r| r.problem.as_str()).collect();
    problems.dedup();
    for p in problems {
        let path = plots.join(format!("regret_{}.svg", file_safe(p)));
        write_file(&path, &regret_chart(p, &averaged).render())?;
    }
    for group in report.profiles.keys() {
        let path = plots.join(format!("dolan_more_{}.svg", file_safe(group)));
        write_file(&path, &profile_chart(group, &profiles).render())?;
    }
    Ok(report)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn check_svg(path: &Path, expected: &Chart, issues: &mut Vec<String>) -> Result<()> {
    if !path.exists() {
        issues.push(format!("{} is missing", path.display()));
        return Ok(());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if read_series(&text) != expected.series {
        issues.push(format!("{} does not match its CSV source", path.display()));
    }
    Ok(())
}

/// Cross-checks the written outputs. Charts must carry the CSV values
/// verbatim, and the CSVs must match metrics recomputed from the traces.
/// Returns the list of discrepancies (empty when consistent).
pub fn verify_outputs(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let dir = &cfg.output_dir;
    let mut issues = Vec::new();
    let averaged: Vec<AveragedRow> = read_csv(&dir.join("averaged.csv"))?;
    let finals: Vec<FinalRow> = read_csv(&dir.join("final_regret.csv"))?;
    let profiles: Vec<ProfileRow> = read_csv(&dir.join("dolan_more.csv"))?;

    let mut problems: Vec<&str> = averaged.iter().map(|r| r.problem.as_str()).collect();
    problems.dedup();
    for p in problems {
        let path = dir.join("plots").join(format!("regret_{}.svg", file_safe(p)));
        check_svg(&path, &regret_chart(p, &averaged), &mut issues)?;
    }
    let mut groups: Vec<&str> = profiles.iter().map(|r| r.group.as_str()).collect();
    groups.dedup();
    for g in groups {
        let path = dir.join("plots").join(format!("dolan_more_{}.svg", file_safe(g)));
        check_svg(&path, &profile_chart(g, &profiles), &mut issues)?;
    }

    let fresh = build_report(cfg)?;
    let expected_avg = averaged_rows(&fresh);
    if expected_avg.len() != averaged.len() {
        issues.push(format!(
            "averaged.csv has {} rows, recomputation gives {}",
            averaged.len(),
            expected_avg.len()
        ));
    }
    for (got, want) in averaged.iter().zip(&expected_avg) {
        if got.problem != want.problem
            || got.solver != want.solver
            || got.cost != want.cost
            || got.n_runs != want.n_runs
            || !close(got.mean_regret, want.mean_regret)
        {
            issues.push(format!("averaged.csv row {got:?} differs from recomputed {want:?}"));
        }
    }
    if finals.len() != fresh.finals.len() {
        issues.push("final_regret.csv row count differs from recomputation".into());
    }
    for (got, want) in finals.iter().zip(&fresh.finals) {
        if got.problem != want.problem || got.solver != want.solver || !close(got.final_regret, want.final_regret) {
            issues.push(format!("final_regret.csv row {got:?} differs from recomputed {want:?}"));
        }
    }
    let expected_prof = profile_rows(&fresh);
    if expected_prof.len() != profiles.len() {
        issues.push("dolan_more.csv row count differs from recomputation".into());
    }
    for (got, want) in profiles.iter().zip(&expected_prof) {
        if got.group != want.group || got.solver != want.solver || !close(got.tau, want.tau) || got.rho != want.rho {
            issues.push(format!("dolan_more.csv row {got:?} differs from recomputed {want:?}"));
        }
    }
    Ok(issues)
}
