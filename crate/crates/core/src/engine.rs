//! The optimization loop: fit a surrogate, maximize Expected Improvement,
//! evaluate, record.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{ei_closed, optimize_acquisition, AcquisitionConfig, Incumbent, McEi};
use crate::benchmark::{sample_binomial, Objective};
use crate::binomial::{success_prob, LaplaceModel};
use crate::error::{Error, Result};
use crate::fidelity::{decide_continue, FidelityConfig};
use crate::gaussian::GPModel;
use crate::hyper::{fit_gaussian, fit_laplace, HyperSearch};
use crate::kernel::{Bounds, Dataset, KernelParams, Observation};
use crate::rng::{derive_seed, stream};

/// Proposals closer than this to an existing point are merged into it.
pub const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    GaussianVanilla,
    BinomialVanilla,
    BinomialMultifidelity,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::GaussianVanilla => "gaussian_vanilla",
            SolverKind::BinomialVanilla => "binomial_vanilla",
            SolverKind::BinomialMultifidelity => "binomial_multifidelity",
        }
    }
}

/// A named solver variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub name: String,
    pub kind: SolverKind,
    /// Present exactly for the multifidelity kind.
    pub fidelity: Option<FidelityConfig>,
    pub acquisition: AcquisitionConfig,
    /// Pattern-search evaluations per hyperparameter start.
    pub hyper_evals: usize,
}

impl SolverSpec {
    pub fn gaussian(name: &str) -> Self {
        SolverSpec {
            name: name.into(),
            kind: SolverKind::GaussianVanilla,
            fidelity: None,
            acquisition: AcquisitionConfig::default(),
            hyper_evals: HyperSearch::default().evals_per_start,
        }
    }

    pub fn binomial(name: &str) -> Self {
        SolverSpec {
            kind: SolverKind::BinomialVanilla,
            ..SolverSpec::gaussian(name)
        }
    }

    pub fn multifidelity(name: &str, fidelity: FidelityConfig) -> Self {
        SolverSpec {
            kind: SolverKind::BinomialMultifidelity,
            fidelity: Some(fidelity),
            ..SolverSpec::gaussian(name)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.fidelity) {
            (SolverKind::BinomialMultifidelity, Some(f)) => f.validate()?,
            (SolverKind::BinomialMultifidelity, None) => {
                return Err(Error::invalid(format!(
                    "solver `{}`: the multifidelity kind needs a fidelity configuration",
                    self.name
                )))
            }
            (_, Some(_)) => {
                return Err(Error::invalid(format!(
                    "solver `{}`: fidelity settings only apply to the multifidelity kind",
                    self.name
                )))
            }
            (_, None) => {}
        }
        self.acquisition.validate()
    }
}

/// Total Bernoulli-draw budget of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub total_draws: u64,
    /// Initial design size; `None` means `max(5, 2·dim)`.
    pub init_points: Option<usize>,
}

impl Budget {
    pub fn new(total_draws: u64) -> Self {
        Budget {
            total_draws,
            init_points: None,
        }
    }

    pub fn init_points_for(&self, dim: usize) -> usize {
        self.init_points.unwrap_or_else(|| (2 * dim).max(5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub cumulative_cost: u64,
    pub best_fraction: f64,
    pub true_value_at_incumbent: f64,
}

/// Cost-indexed history of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub problem: String,
    pub solver: String,
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
    /// Diagnostic when the run was aborted.
    pub failed: Option<String>,
}

/// How an evaluation was carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Initial design, full fidelity.
    Init,
    /// Full-fidelity evaluation of a proposal.
    High,
    /// Low-fidelity draw that was not continued.
    Low,
    /// Low-fidelity draw topped up to full fidelity.
    Continued,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::High => "high",
            Stage::Low => "low",
            Stage::Continued => "continued",
        }
    }
}

/// One row of the raw observation log. `successes`/`trials` are the draws
/// made by this evaluation alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub stage: Stage,
    pub x: Vec<f64>,
    pub successes: u32,
    pub trials: u32,
    pub cumulative_cost: u64,
    /// Row of the dataset this evaluation landed in.
    pub dataset_index: usize,
}

impl EvalRecord {
    pub fn fraction(&self) -> f64 {
        f64::from(self.successes) / f64::from(self.trials)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub log: Vec<EvalRecord>,
    pub dataset: Dataset,
}

/// Seeded Latin-hypercube design of `n` points in `bounds`.
pub fn initial_design(n: usize, bounds: &Bounds, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("initial design needs at least one point"));
    }
    let dim = bounds.dim();
    let mut rng = stream(seed, &["lhs"]);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        columns.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.random::<f64>()) / n as f64)
                .collect(),
        );
    }
    Ok((0..n)
        .map(|i| {
            let u: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            let mut x = bounds.from_unit(&u);
            bounds.clamp(&mut x);
            x
        })
        .collect())
}

/// Smallest observed success fraction; the earliest observation wins ties.
pub fn update_incumbent(data: &Dataset) -> Result<Incumbent> {
    let mut best: Option<Incumbent> = None;
    for (i, p) in data.points().iter().enumerate() {
        let f = p.fraction();
        if best.as_ref().is_none_or(|b| f < b.y_min) {
            best = Some(Incumbent {
                y_min: f,
                x_min: p.x.clone(),
                index: i,
            });
        }
    }
    best.ok_or_else(|| Error::State("incumbent of an empty dataset".into()))
}

enum Surrogate {
    Gaussian(GPModel),
    Binomial(LaplaceModel),
}

struct Run<'a> {
    problem: &'a dyn Objective,
    solver: &'a SolverSpec,
    budget: &'a Budget,
    seed: u64,
    run_seed: u64,
    data: Dataset,
    log: Vec<EvalRecord>,
    entries: Vec<TraceEntry>,
    cost: u64,
    best_fraction: f64,
    surrogate: Option<Surrogate>,
    obs_rng: rand_chacha::ChaCha8Rng,
    gaussian_warm: Option<KernelParams>,
    laplace_warm: Option<(KernelParams, nalgebra::DVector<f64>)>,
}

impl Run<'_> {
    fn draw(&mut self, x: &[f64], trials: u32) -> u32 {
        let p = self.problem.success_probability(x);
        sample_binomial(p, trials, &mut self.obs_rng)
    }

    fn record(&mut self, iteration: usize, stage: Stage, x: Vec<f64>, successes: u32, trials: u32) -> Result<()> {
        self.cost += u64::from(trials);
        let dataset_index = match self.data.find_near(&x, DUPLICATE_TOL) {
            Some(i) => {
                self.data.merge_into(i, successes, trials)?;
                i
            }
            None => {
                self.data.push(Observation::new(x.clone(), successes, trials)?)?;
                self.data.len() - 1
            }
        };
        self.best_fraction = self.best_fraction.min(f64::from(successes) / f64::from(trials));
        self.log.push(EvalRecord {
            iteration,
            stage,
            x,
            successes,
            trials,
            cumulative_cost: self.cost,
            dataset_index,
        });
        let incumbent = self.reported_incumbent();
        self.entries.push(TraceEntry {
            cumulative_cost: self.cost,
            best_fraction: self.best_fraction,
            true_value_at_incumbent: self.problem.success_probability(incumbent),
        });
        Ok(())
    }

    /// Point reported as the run's current answer: an evaluation with the
    /// smallest observed fraction. Ties, common when most draws return no
    /// successes, go to the lowest predicted success probability under the
    /// latest surrogate, then to the earliest evaluation.
    fn reported_incumbent(&self) -> &[f64] {
        let mut best: Option<(f64, &EvalRecord)> = None;
        for r in self.log.iter().filter(|r| r.fraction() == self.best_fraction) {
            let score = match &self.surrogate {
                None => 0.0,
                Some(Surrogate::Gaussian(m)) => m.predict_unchecked(&r.x).mean,
                Some(Surrogate::Binomial(m)) => success_prob(&m.predict_latent_unchecked(&r.x)),
            };
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, r));
            }
        }
        &best.expect("log holds the minimal fraction").1.x
    }

    fn fit(&mut self, iteration: usize) -> Result<()> {
        let search = HyperSearch {
            starts: HyperSearch::default().starts,
            evals_per_start: self.solver.hyper_evals,
            seed: derive_seed(self.run_seed, &["hyper", &iteration.to_string()]),
        };
        let diameter = self.problem.bounds().diameter();
        match self.solver.kind {
            SolverKind::GaussianVanilla => {
                let targets = self.data.fractions();
                let m = fit_gaussian(&self.data, &targets, diameter, &search, self.gaussian_warm.as_ref())?;
                self.gaussian_warm = Some(*m.params());
                self.surrogate = Some(Surrogate::Gaussian(m));
                Ok(())
            }
            SolverKind::BinomialVanilla | SolverKind::BinomialMultifidelity => {
                let warm = self.laplace_warm.as_ref().map(|(p, a)| (p, a));
                let m = fit_laplace(&self.data, diameter, &search, warm)?;
                if !m.converged() {
                    return Err(Error::Numerical(format!(
                        "Laplace approximation did not converge at iteration {iteration} ({} points)",
                        self.data.len()
                    )));
                }
                self.laplace_warm = Some((*m.params(), m.alpha().clone()));
                self.surrogate = Some(Surrogate::Binomial(m));
                Ok(())
            }
        }
    }

    /// Incumbent value for the acquisition and the continuation rule: the
    /// smallest observed fraction. When that is 0 under the binomial model,
    /// improvement through the logistic link is impossible and EI vanishes
    /// everywhere, so the smallest posterior success probability over the
    /// observed points is used instead.
    fn y_min(&self) -> Result<f64> {
        let observed = update_incumbent(&self.data)?.y_min;
        match &self.surrogate {
            Some(Surrogate::Binomial(m)) if observed == 0.0 => Ok(self
                .data
                .points()
                .iter()
                .map(|p| success_prob(&m.predict_latent_unchecked(&p.x)))
                .fold(f64::INFINITY, f64::min)),
            _ => Ok(observed),
        }
    }

    fn propose(&self, iteration: usize) -> Result<Vec<f64>> {
        let surrogate = self
            .surrogate
            .as_ref()
            .ok_or_else(|| Error::State("proposal requested before any surrogate fit".into()))?;
        let y_min = self.y_min()?;
        let mut cfg = self.solver.acquisition;
        cfg.seed = derive_seed(self.run_seed, &["acquisition", &iteration.to_string()]);
        let bounds = self.problem.bounds();
        match surrogate {
            Surrogate::Gaussian(m) => optimize_acquisition(|x| ei_closed(&m.predict_unchecked(x), y_min), bounds, &cfg),
            Surrogate::Binomial(m) => {
                let mc = McEi::from_config(&cfg);
                optimize_acquisition(|x| mc.eval(&m.predict_latent_unchecked(x), y_min), bounds, &cfg)
            }
        }
    }

    fn trace(&self, failed: Option<String>) -> RunTrace {
        RunTrace {
            problem: self.problem.id(),
            solver: self.solver.name.clone(),
            seed: self.seed,
            entries: self.entries.clone(),
            failed,
        }
    }
}

/// Runs one Bayesian optimization until the budget cannot pay for another
/// evaluation. A surrogate failure aborts the run and is reported through
/// `RunTrace::failed` rather than as an error.
pub fn run_bo(problem: &dyn Objective, solver: &SolverSpec, budget: &Budget, seed: u64) -> Result<RunOutput> {
    solver.validate()?;
    let bounds = problem.bounds();
    let dim = bounds.dim();
    let n_high = match &solver.fidelity {
        Some(f) => f.n_high,
        None => problem.trials_high(),
    };
    let init = budget.init_points_for(dim);
    if init == 0 || budget.total_draws < init as u64 * u64::from(n_high) {
        return Err(Error::invalid(format!(
            "budget of {} draws cannot cover {init} initial points at {n_high} trials",
            budget.total_draws
        )));
    }

    let problem_id = problem.id();
    // The design and the observation stream depend on the problem and seed
    // only, so every solver sees the same initial data for a given seed.
    let design = initial_design(init, bounds, derive_seed(seed, &["design", &problem_id]))?;
    let mut run = Run {
        problem,
        solver,
        budget,
        seed,
        run_seed: derive_seed(seed, &[&problem_id, &solver.name]),
        data: Dataset::new(dim)?,
        log: Vec::new(),
        entries: Vec::new(),
        cost: 0,
        best_fraction: f64::INFINITY,
        surrogate: None,
        obs_rng: stream(seed, &["observations", &problem_id]),
        gaussian_warm: None,
        laplace_warm: None,
    };
    for x in design {
        let y = run.draw(&x, n_high);
        run.record(0, Stage::Init, x, y, n_high)?;
    }

    let mut failure = None;
    let mut iteration = 0;
    loop {
        let min_cost = match &solver.fidelity {
            Some(f) => f.n_low,
            None => n_high,
        };
        if run.cost + u64::from(min_cost) > run.budget.total_draws {
            break;
        }
        iteration += 1;
        if let Err(e) = run.fit(iteration) {
            failure = Some(e.to_string());
            break;
        }
        let x = match run.propose(iteration) {
            Ok(x) => x,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        match &solver.fidelity {
            None => {
                let y = run.draw(&x, n_high);
                run.record(iteration, Stage::High, x, y, n_high)?;
            }
            Some(fid) => {
                let y_min = run.y_min()?;
                let y_low = run.draw(&x, fid.n_low);
                let extra = fid.n_high - fid.n_low;
                let affordable = run.cost + u64::from(fid.n_low) + u64::from(extra) <= run.budget.total_draws;
                if affordable && decide_continue(y_low, fid, y_min)? {
                    let y_extra = run.draw(&x, extra);
                    run.record(iteration, Stage::Continued, x, y_low + y_extra, fid.n_high)?;
                } else {
                    run.record(iteration, Stage::Low, x, y_low, fid.n_low)?;
                }
            }
        }
    }

    Ok(RunOutput {
        trace: run.trace(failure),
        log: run.log,
        dataset: run.data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::FnObjective;

    #[test]
    fn lhs_stratifies_each_axis() {
        let b = Bounds::new(vec![2.0], vec![6.0]).unwrap();
        let d = initial_design(4, &b, 11).unwrap();
        let mut q: Vec<usize> = d.iter().map(|x| ((x[0] - 2.0) / 1.0).floor() as usize).collect();
        q.sort();
        assert_eq!(q, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lhs_is_seeded() {
        let b = Bounds::cube(3, -1.0, 1.0).unwrap();
        assert_eq!(initial_design(6, &b, 1).unwrap(), initial_design(6, &b, 1).unwrap());
        assert_ne!(initial_design(6, &b, 1).unwrap(), initial_design(6, &b, 2).unwrap());
        let one = initial_design(1, &b, 5).unwrap();
        assert_eq!(one.len(), 1);
        assert!(b.contains(&one[0]));
        assert!(initial_design(0, &b, 5).is_err());
    }

    #[test]
    fn incumbent_rules() {
        let obs = |x: f64, y, n| Observation::new(vec![x], y, n).unwrap();
        let d = Dataset::from_observations(1, vec![obs(0.0, 3, 10)]).unwrap();
        assert!((update_incumbent(&d).unwrap().y_min - 0.3).abs() < 1e-15);

        let d = Dataset::from_observations(1, vec![obs(0.0, 5, 10), obs(1.0, 1, 2)]).unwrap();
        assert_eq!(update_incumbent(&d).unwrap().index, 0);

        let d = Dataset::from_observations(1, vec![obs(0.0, 2, 35), obs(1.0, 1, 70)]).unwrap();
        let inc = update_incumbent(&d).unwrap();
        assert_eq!(inc.x_min, vec![1.0]);
        assert!((inc.y_min - 1.0 / 70.0).abs() < 1e-15);

        assert!(matches!(update_incumbent(&Dataset::new(1).unwrap()), Err(Error::State(_))));
    }

    #[test]
    fn solver_validation() {
        let mut s = SolverSpec::gaussian("g");
        s.fidelity = Some(FidelityConfig::new(35, 70, 0.5).unwrap());
        assert!(s.validate().is_err());
        let mut s = SolverSpec::multifidelity("m", FidelityConfig::new(35, 70, 0.5).unwrap());
        s.fidelity = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn budget_for_design_only() {
        let obj = FnObjective {
            name: "bowl".into(),
            bounds: Bounds::cube(1, 0.0, 1.0).unwrap(),
            trials_high: 10,
            f: |x: &[f64]| (x[0] - 0.3).powi(2),
        };
        let out = run_bo(&obj, &SolverSpec::binomial("b"), &Budget { total_draws: 59, init_points: Some(5) }, 3).unwrap();
        assert_eq!(out.trace.entries.len(), 5);
        let min = out.log.iter().map(EvalRecord::fraction).fold(f64::INFINITY, f64::min);
        assert_eq!(out.trace.entries.last().unwrap().best_fraction, min);
        assert!(run_bo(&obj, &SolverSpec::binomial("b"), &Budget { total_draws: 49, init_points: Some(5) }, 3).is_err());
    }
}
