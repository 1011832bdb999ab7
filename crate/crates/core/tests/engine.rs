use binbo::benchmark::{FnObjective, ProblemRegistry};
use binbo::engine::{run_bo, Budget, RunOutput, SolverSpec, Stage};
use binbo::fidelity::FidelityConfig;
use binbo::benchmark::FunctionId;
use binbo::Bounds;

fn bowl() -> FnObjective<impl Fn(&[f64]) -> f64 + Sync> {
    FnObjective {
        name: "bowl".into(),
        bounds: Bounds::cube(1, 0.0, 1.0).unwrap(),
        trials_high: 70,
        f: |x: &[f64]| ((x[0] - 0.3) / 0.7).powi(2),
    }
}

fn mf(lambda: f64) -> SolverSpec {
    SolverSpec::multifidelity("mf", FidelityConfig::new(35, 70, lambda).unwrap())
}

/// Running minimum of the logged fractions, rebuilt from the raw log.
fn replay_best(out: &RunOutput) -> Vec<f64> {
    let mut best = f64::INFINITY;
    out.log
        .iter()
        .map(|r| {
            best = best.min(f64::from(r.successes) / f64::from(r.trials));
            best
        })
        .collect()
}

#[test]
fn quadratic_bowl_is_solved() {
    let solver = SolverSpec::binomial("binomial");
    let solved = (0..20)
        .filter(|&seed| {
            let out = run_bo(&bowl(), &solver, &Budget::new(2000), seed).unwrap();
            assert!(out.trace.failed.is_none());
            out.trace.entries.last().unwrap().true_value_at_incumbent <= 0.1
        })
        .count();
    assert!(solved >= 18, "{solved} of 20 seeds reached regret 0.1");
}

#[test]
fn initial_design_only_budget() {
    let out = run_bo(&bowl(), &SolverSpec::gaussian("g"), &Budget::new(5 * 70 + 69), 4).unwrap();
    assert_eq!(out.trace.entries.len(), 5);
    assert!(out.log.iter().all(|r| r.stage == Stage::Init));
    let min = out.log.iter().map(|r| r.fraction()).fold(f64::INFINITY, f64::min);
    assert_eq!(out.trace.entries.last().unwrap().best_fraction, min);
    assert!(run_bo(&bowl(), &SolverSpec::gaussian("g"), &Budget::new(5 * 70 - 1), 4).is_err());
}

#[test]
fn constant_zero_problem() {
    let zero = FnObjective {
        name: "zero".into(),
        bounds: Bounds::cube(2, -1.0, 1.0).unwrap(),
        trials_high: 70,
        f: |_: &[f64]| 0.0,
    };
    for solver in [SolverSpec::gaussian("g"), SolverSpec::binomial("b"), mf(0.3)] {
        let out = run_bo(&zero, &solver, &Budget::new(1500), 1).unwrap();
        assert!(out.log.iter().all(|r| r.successes == 0));
        for e in &out.trace.entries {
            assert_eq!(e.best_fraction, 0.0);
            assert_eq!(e.true_value_at_incumbent, 0.0);
        }
    }
}

#[test]
fn budget_soundness_and_trace_bookkeeping() {
    let reg = ProblemRegistry::builtin().unwrap();
    let problem = reg.problem(FunctionId::StyblinskiTang, 4, 70).unwrap();
    for (solver, budget) in [(SolverSpec::gaussian("g"), 1234), (SolverSpec::binomial("b"), 1000), (mf(0.5), 1111)] {
        let out = run_bo(&problem, &solver, &Budget::new(budget), 2).unwrap();
        let entries = &out.trace.entries;
        assert_eq!(entries.len(), out.log.len());
        let last = entries.last().unwrap().cumulative_cost;
        assert!(last <= budget);
        // stopped only because the cheapest next evaluation would not fit
        let cheapest = if solver.fidelity.is_some() { 35 } else { 70 };
        assert!(last + cheapest > budget, "{} stopped early at {last}", solver.name);
        let mut prev = 0;
        for (e, r) in entries.iter().zip(&out.log) {
            assert_eq!(e.cumulative_cost - prev, u64::from(r.trials));
            assert_eq!(e.cumulative_cost, r.cumulative_cost);
            prev = e.cumulative_cost;
        }
        let replay = replay_best(&out);
        for (e, b) in entries.iter().zip(replay) {
            assert_eq!(e.best_fraction, b);
        }
        assert!(entries.windows(2).all(|w| w[1].best_fraction <= w[0].best_fraction));
        let total: u64 = out.dataset.points().iter().map(|p| u64::from(p.trials)).sum();
        assert_eq!(total, last);
    }
}

#[test]
fn multifidelity_marginal_costs() {
    let reg = ProblemRegistry::builtin().unwrap();
    let problem = reg.problem(FunctionId::Rastrigin, 4, 70).unwrap();
    for lambda in [0.3, 0.5] {
        let out = run_bo(&problem, &mf(lambda), &Budget::new(2500), 3).unwrap();
        let mut prev = 0;
        for r in &out.log {
            let step = r.cumulative_cost - prev;
            prev = r.cumulative_cost;
            match r.stage {
                Stage::Init | Stage::Continued => assert_eq!((step, r.trials), (70, 70)),
                Stage::Low => assert_eq!((step, r.trials), (35, 35)),
                Stage::High => panic!("vanilla stage in a multifidelity run"),
            }
        }
        assert!(out.log.iter().any(|r| r.stage != Stage::Init));
    }
}

#[test]
fn runs_are_deterministic() {
    let reg = ProblemRegistry::builtin().unwrap();
    let problem = reg.problem(FunctionId::Zakharov, 4, 70).unwrap();
    for solver in [SolverSpec::gaussian("g"), SolverSpec::binomial("b"), mf(0.3)] {
        let a = run_bo(&problem, &solver, &Budget::new(1200), 9).unwrap();
        let b = run_bo(&problem, &solver, &Budget::new(1200), 9).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.log, b.log);
        let c = run_bo(&problem, &solver, &Budget::new(1200), 10).unwrap();
        assert_ne!(a.log, c.log);
    }
}

#[test]
fn seeds_are_paired_across_solvers() {
    let reg = ProblemRegistry::builtin().unwrap();
    let problem = reg.problem(FunctionId::Michalewicz, 4, 70).unwrap();
    let a = run_bo(&problem, &SolverSpec::gaussian("g"), &Budget::new(600), 5).unwrap();
    let b = run_bo(&problem, &SolverSpec::binomial("b"), &Budget::new(600), 5).unwrap();
    let init = |o: &RunOutput| o.log.iter().filter(|r| r.stage == Stage::Init).cloned().collect::<Vec<_>>();
    assert_eq!(init(&a), init(&b));
}
