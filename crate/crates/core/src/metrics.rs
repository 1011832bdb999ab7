//! Regret averaging over runs and Dolan-More performance profiles.

use serde::{Deserialize, Serialize};

use crate::benchmark::BenchmarkProblem;
use crate::engine::RunTrace;
use crate::error::{Error, Result};

/// Denominator guard for performance ratios when the best result is 0.
pub const RATIO_EPS: f64 = 1e-12;
const TAU_GRID_POINTS: usize = 200;
const TAU_MARGIN: f64 = 1.1;

/// Mean of several runs at shared cost checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedTrace {
    pub problem: String,
    pub solver: String,
    pub costs: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub mean_best_fraction: Vec<f64>,
    pub n_runs: usize,
}

impl AveragedTrace {
    /// End-of-budget regret.
    pub fn final_regret(&self) -> Option<f64> {
        self.mean_regret.last().copied()
    }
}

fn usable(traces: &[RunTrace]) -> Vec<&RunTrace> {
    traces
        .iter()
        .filter(|t| t.failed.is_none() && !t.entries.is_empty())
        .collect()
}

/// Checkpoints every `step` draws between the latest first entry and the
/// earliest last entry of the non-failed traces; the common final cost is
/// always included.
pub fn common_grid(traces: &[RunTrace], step: u64) -> Result<Vec<u64>> {
    let ok = usable(traces);
    if ok.is_empty() {
        return Err(Error::invalid("no completed traces to align"));
    }
    if step == 0 {
        return Err(Error::invalid("grid step must be positive"));
    }
    let start = ok.iter().map(|t| t.entries[0].cumulative_cost).max().unwrap();
    let end = ok
        .iter()
        .map(|t| t.entries.last().unwrap().cumulative_cost)
        .min()
        .unwrap();
    if end < start {
        return Err(Error::invalid("traces share no common cost range"));
    }
    let mut grid: Vec<u64> = (start.div_ceil(step)..=end / step).map(|k| k * step).collect();
    if grid.first() != Some(&start) {
        grid.insert(0, start);
    }
    if grid.last() != Some(&end) {
        grid.push(end);
    }
    Ok(grid)
}

/// Averages step-interpolated traces of one (problem, solver) pair. Each
/// trace contributes its last entry with `cumulative_cost <= c`; failed
/// traces are skipped.
pub fn align_and_average(traces: &[RunTrace], grid: &[u64]) -> Result<AveragedTrace> {
    let ok = usable(traces);
    let Some(first) = ok.first() else {
        return Err(Error::invalid("no completed traces to average"));
    };
    if ok.iter().any(|t| t.problem != first.problem || t.solver != first.solver) {
        return Err(Error::invalid("traces mix problems or solvers"));
    }
    let mut mean_regret = Vec::with_capacity(grid.len());
    let mut mean_best = Vec::with_capacity(grid.len());
    for &c in grid {
        let mut regret = 0.0;
        let mut best = 0.0;
        for t in &ok {
            let k = t.entries.partition_point(|e| e.cumulative_cost <= c);
            if k == 0 {
                return Err(Error::invalid(format!(
                    "cost {c} precedes the first entry of run seed {}",
                    t.seed
                )));
            }
            regret += t.entries[k - 1].true_value_at_incumbent;
            best += t.entries[k - 1].best_fraction;
        }
        mean_regret.push(regret / ok.len() as f64);
        mean_best.push(best / ok.len() as f64);
    }
    Ok(AveragedTrace {
        problem: first.problem.clone(),
        solver: first.solver.clone(),
        costs: grid.to_vec(),
        mean_regret,
        mean_best_fraction: mean_best,
        n_runs: ok.len(),
    })
}

/// `t[p][s]`: the result of solver `s` on problem `p` (lower is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DolanMoreTable {
    pub problems: Vec<String>,
    pub solvers: Vec<String>,
    pub t: Vec<Vec<f64>>,
}

impl DolanMoreTable {
    pub fn new(problems: Vec<String>, solvers: Vec<String>, t: Vec<Vec<f64>>) -> Result<Self> {
        let table = DolanMoreTable { problems, solvers, t };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() || self.solvers.is_empty() {
            return Err(Error::invalid("performance table needs problems and solvers"));
        }
        if self.t.len() != self.problems.len() || self.t.iter().any(|r| r.len() != self.solvers.len()) {
            return Err(Error::invalid("performance table shape does not match its labels"));
        }
        if self.t.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("performance table entries must be finite and non-negative"));
        }
        Ok(())
    }

    /// `r[p][s] = t[p][s] / min_s t[p][s]`. The per-problem best gets exactly
    /// 1; a zero best is replaced by `RATIO_EPS` in the denominator.
    pub fn ratios(&self) -> Vec<Vec<f64>> {
        self.t
            .iter()
            .map(|row| {
                let best = row.iter().copied().fold(f64::INFINITY, f64::min);
                row.iter()
                    .map(|&v| if v == best { 1.0 } else { v / best.max(RATIO_EPS) })
                    .collect()
            })
            .collect()
    }
}

/// Performance profile `ρ_s(τ)` of one solver sampled on `taus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub solver: String,
    pub taus: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Share of problems with ratio strictly below `tau`.
pub fn rho_at(ratios: &[f64], tau: f64) -> f64 {
    ratios.iter().filter(|r| **r < tau).count() as f64 / ratios.len() as f64
}

fn tau_grid(ratios: &[Vec<f64>]) -> Vec<f64> {
    let max_r = ratios.iter().flatten().copied().fold(1.0, f64::max);
    let upper = max_r * TAU_MARGIN;
    let log_hi = upper.ln();
    let mut taus: Vec<f64> = (0..TAU_GRID_POINTS)
        .map(|k| (log_hi * k as f64 / (TAU_GRID_POINTS - 1) as f64).exp())
        .collect();
    taus[0] = 1.0;
    // the profile jumps just above every ratio; sample both sides
    for &r in ratios.iter().flatten() {
        taus.push(r);
        taus.push(r.next_up());
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

/// Performance profiles of every solver on a shared τ grid.
pub fn dolan_more(table: &DolanMoreTable) -> Result<Vec<ProfileCurve>> {
    table.validate()?;
    let ratios = table.ratios();
    let taus = tau_grid(&ratios);
    Ok(table
        .solvers
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let column: Vec<f64> = ratios.iter().map(|row| row[s]).collect();
            ProfileCurve {
                solver: name.clone(),
                rho: taus.iter().map(|&tau| rho_at(&column, tau)).collect(),
                taus: taus.clone(),
            }
        })
        .collect())
}

/// Noiseless rescaled objective at `x`; the regret, since the rescaled
/// minimum is 0.
pub fn true_regret(problem: &BenchmarkProblem, x: &[f64]) -> Result<f64> {
    problem.true_value(x)
}
