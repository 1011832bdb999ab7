//! Experiment configuration (TOML).
//!
//! ```toml
//! output_dir = "out/reference"   # relative paths resolve against the CWD
//! seeds = [0, 1, 2]
//! parallelism = 4                # optional, default = available CPUs
//! problems_file = "data/problems.toml"  # optional, default = built-in table
//!
//! [budget]
//! total_draws = 10000
//! init_points = 10               # optional, default max(5, 2·dim)
//!
//! [[problem]]
//! function_id = "zakharov"
//! dim = 5
//! trials = 70                    # optional, default 70
//!
//! [[solver]]
//! name = "mf-0.5"
//! kind = "binomial_multifidelity"   # or gaussian_vanilla, binomial_vanilla
//! lambda = 0.5                   # multifidelity only, required there
//! n_low = 35                     # multifidelity only, default 35
//! n_high = 70                    # multifidelity only, default 70
//! mc_samples = 1024              # optional acquisition settings
//! restarts = 16
//! local_steps = 60
//! hyper_evals = 24
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use crate::acquisition::{AcquisitionConfig, MIN_MC_SAMPLES};
use crate::benchmark::{FunctionId, DEFAULT_LOW_TRIALS, DEFAULT_TRIALS};
use crate::engine::{Budget, SolverKind, SolverSpec};
use crate::fidelity::FidelityConfig;
use crate::hyper::HyperSearch;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub function_id: FunctionId,
    pub dim: usize,
    pub trials: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problems: Vec<ProblemSpec>,
    pub solvers: Vec<SolverSpec>,
    pub budget: Budget,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub problems_file: Option<PathBuf>,
}

/// One validation failure, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<String>,
    seeds: Option<Vec<u64>>,
    parallelism: Option<i64>,
    problems_file: Option<String>,
    budget: Option<RawBudget>,
    #[serde(default)]
    problem: Vec<RawProblem>,
    #[serde(default)]
    solver: Vec<RawSolver>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    total_draws: Option<i64>,
    init_points: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    function_id: Option<String>,
    dim: Option<i64>,
    trials: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    name: Option<String>,
    kind: Option<String>,
    lambda: Option<f64>,
    n_low: Option<i64>,
    n_high: Option<i64>,
    mc_samples: Option<i64>,
    restarts: Option<i64>,
    local_steps: Option<i64>,
    hyper_evals: Option<i64>,
}

struct Collector(Vec<FieldError>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, path: &str, v: Option<i64>, default: i64) -> i64 {
        let v = v.unwrap_or(default);
        if v < 1 {
            self.push(path, format!("must be a positive integer, got {v}"));
        }
        v.max(1)
    }
}

fn to_u32(v: i64) -> u32 {
    u32::try_from(v).unwrap_or(u32::MAX)
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        ConfigErrors(vec![FieldError {
            path: "<document>".into(),
            message: e.message().to_string(),
        }])
    })?;
    let mut errs = Collector(Vec::new());

    let output_dir = match raw.output_dir {
        Some(d) if !d.trim().is_empty() => PathBuf::from(d),
        _ => {
            errs.push("output_dir", "is required");
            PathBuf::new()
        }
    };
    let seeds = raw.seeds.unwrap_or_default();
    if seeds.is_empty() {
        errs.push("seeds", "needs at least one seed");
    }
    let default_parallelism = std::thread::available_parallelism().map_or(1, |n| n.get()) as i64;
    let parallelism = errs.positive("parallelism", raw.parallelism, default_parallelism) as usize;

    let (total_draws, init_points) = match raw.budget {
        None => {
            errs.push("budget", "section is required");
            (1, None)
        }
        Some(b) => {
            let total = match b.total_draws {
                None => {
                    errs.push("budget.total_draws", "is required");
                    1
                }
                Some(v) => errs.positive("budget.total_draws", Some(v), 1),
            };
            let init = b
                .init_points
                .map(|v| errs.positive("budget.init_points", Some(v), 1) as usize);
            (total as u64, init)
        }
    };
    let budget = Budget {
        total_draws,
        init_points,
    };

    if raw.problem.is_empty() {
        errs.push("problem", "needs at least one [[problem]] entry");
    }
    let mut problems = Vec::new();
    let mut seen_problems = HashSet::new();
    for (i, p) in raw.problem.iter().enumerate() {
        let path = format!("problem[{i}]");
        let function_id = match &p.function_id {
            None => {
                errs.push(format!("{path}.function_id"), "is required");
                None
            }
            Some(s) => match s.parse::<FunctionId>() {
                Ok(f) => Some(f),
                Err(e) => {
                    errs.push(format!("{path}.function_id"), e.to_string());
                    None
                }
            },
        };
        let dim = match p.dim {
            None => {
                errs.push(format!("{path}.dim"), "is required");
                1
            }
            Some(d) => errs.positive(&format!("{path}.dim"), Some(d), 1) as usize,
        };
        let trials = to_u32(errs.positive(&format!("{path}.trials"), p.trials, DEFAULT_TRIALS.into()));
        if let Some(function_id) = function_id {
            if !seen_problems.insert((function_id, dim, trials)) {
                errs.push(path.clone(), "duplicates an earlier problem");
            }
            let init = budget.init_points_for(dim) as u64;
            if init * u64::from(trials) > budget.total_draws {
                errs.push(
                    "budget.total_draws",
                    format!(
                        "{} draws cannot cover {init} initial points of {trials} trials for {function_id} in {dim}d",
                        budget.total_draws
                    ),
                );
            }
            problems.push(ProblemSpec {
                function_id,
                dim,
                trials,
            });
        }
    }

    if raw.solver.is_empty() {
        errs.push("solver", "needs at least one [[solver]] entry");
    }
    let mut solvers = Vec::new();
    let mut names = HashSet::new();
    let defaults = AcquisitionConfig::default();
    for (i, s) in raw.solver.iter().enumerate() {
        let path = format!("solver[{i}]");
        let name = match &s.name {
            Some(n) if !n.trim().is_empty() => n.clone(),
            _ => {
                errs.push(format!("{path}.name"), "is required");
                format!("solver-{i}")
            }
        };
        if !names.insert(name.clone()) {
            errs.push(format!("{path}.name"), format!("duplicate solver name `{name}`"));
        }
        let kind = match s.kind.as_deref() {
            Some("gaussian_vanilla") => Some(SolverKind::GaussianVanilla),
            Some("binomial_vanilla") => Some(SolverKind::BinomialVanilla),
            Some("binomial_multifidelity") => Some(SolverKind::BinomialMultifidelity),
            Some(other) => {
                errs.push(
                    format!("{path}.kind"),
                    format!("unknown solver kind `{other}` (expected gaussian_vanilla, binomial_vanilla or binomial_multifidelity)"),
                );
                None
            }
            None => {
                errs.push(format!("{path}.kind"), "is required");
                None
            }
        };
        let mc_samples = errs.positive(&format!("{path}.mc_samples"), s.mc_samples, defaults.mc_samples as i64);
        if (mc_samples as usize) < MIN_MC_SAMPLES {
            errs.push(format!("{path}.mc_samples"), format!("must be at least {MIN_MC_SAMPLES}"));
        }
        let acquisition = AcquisitionConfig {
            mc_samples: mc_samples as usize,
            restarts: errs.positive(&format!("{path}.restarts"), s.restarts, defaults.restarts as i64) as usize,
            local_steps: errs.positive(&format!("{path}.local_steps"), s.local_steps, defaults.local_steps as i64)
                as usize,
            seed: 0,
        };
        let hyper_evals = errs.positive(
            &format!("{path}.hyper_evals"),
            s.hyper_evals,
            HyperSearch::default().evals_per_start as i64,
        ) as usize;

        let fidelity = match kind {
            Some(SolverKind::BinomialMultifidelity) => {
                let lambda = match s.lambda {
                    None => {
                        errs.push(format!("{path}.lambda"), "is required for the multifidelity kind");
                        0.5
                    }
                    Some(l) if !(l > 0.0 && l < 1.0) => {
                        errs.push(format!("{path}.lambda"), format!("must lie in (0, 1), got {l}"));
                        0.5
                    }
                    Some(l) => l,
                };
                let n_low = to_u32(errs.positive(&format!("{path}.n_low"), s.n_low, DEFAULT_LOW_TRIALS.into()));
                let n_high = to_u32(errs.positive(&format!("{path}.n_high"), s.n_high, DEFAULT_TRIALS.into()));
                if n_low >= n_high {
                    errs.push(
                        format!("{path}.n_low"),
                        format!("must be smaller than n_high ({n_low} >= {n_high})"),
                    );
                }
                for p in &problems {
                    if p.trials != n_high {
                        errs.push(
                            format!("{path}.n_high"),
                            format!(
                                "must equal the trial count of every problem ({} has {})",
                                p.function_id, p.trials
                            ),
                        );
                    }
                }
                Some(FidelityConfig { n_low, n_high, lambda })
            }
            Some(_) => {
                for (field, present) in [
                    ("lambda", s.lambda.is_some()),
                    ("n_low", s.n_low.is_some()),
                    ("n_high", s.n_high.is_some()),
                ] {
                    if present {
                        errs.push(
                            format!("{path}.{field}"),
                            "only applies to the binomial_multifidelity kind",
                        );
                    }
                }
                None
            }
            None => None,
        };
        if let Some(kind) = kind {
            solvers.push(SolverSpec {
                name,
                kind,
                fidelity,
                acquisition,
                hyper_evals,
            });
        }
    }

    if !errs.0.is_empty() {
        return Err(ConfigErrors(errs.0));
    }
    Ok(ExperimentConfig {
        problems,
        solvers,
        budget,
        seeds,
        output_dir,
        parallelism,
        problems_file: raw.problems_file.map(PathBuf::from),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"
seeds = [1]
[budget]
total_draws = 2000
[[problem]]
function_id = "rastrigin"
dim = 4
[[solver]]
name = "mf"
kind = "binomial_multifidelity"
lambda = 0.3
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.problems[0].trials, 70);
        let f = cfg.solvers[0].fidelity.unwrap();
        assert_eq!((f.n_low, f.n_high), (35, 70));
        assert_eq!(cfg.budget.init_points_for(4), 8);
        assert_eq!(cfg.solvers[0].acquisition, AcquisitionConfig::default());
    }

    #[test]
    fn bad_lambda_is_named() {
        let text = MINIMAL.replace("lambda = 0.3", "lambda = 1.5");
        let errs = parse_config(&text).unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert_eq!(errs.0[0].path, "solver[0].lambda");
    }

    #[test]
    fn reports_every_error() {
        let text = r#"
output_dir = "out"
seeds = []
[budget]
total_draws = 100
[[problem]]
function_id = "ackley"
dim = 4
[[solver]]
name = "a"
kind = "binomial_multifidelity"
lambda = 0.5
n_low = 70
n_high = 70
[[solver]]
name = "a"
kind = "gaussian_vanilla"
lambda = 0.2
"#;
        let errs = parse_config(text).unwrap_err();
        let paths: Vec<&str> = errs.0.iter().map(|e| e.path.as_str()).collect();
        for expected in ["seeds", "problem[0].function_id", "solver[0].n_low", "solver[1].name", "solver[1].lambda"] {
            assert!(paths.contains(&expected), "{expected} missing from {paths:?}");
        }
    }

    #[test]
    fn syntax_errors_are_reported() {
        assert!(parse_config("output_dir = ").is_err());
        assert!(parse_config("unknown_key = 3").is_err());
    }
}
