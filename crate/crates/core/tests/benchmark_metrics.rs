mod common;

use binbo::benchmark::{eval_raw, rescale, sample_binomial, FunctionId, Objective, ProblemRegistry};
use binbo::engine::{RunTrace, TraceEntry};
use binbo::metrics::{align_and_average, common_grid, dolan_more, true_regret, DolanMoreTable};
use common::*;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

fn rastrigin_1d(x: f64) -> f64 {
    x * x - 10.0 * (2.0 * PI * x).cos() + 10.0
}

/// Dense-grid maximum of one Rastrigin coordinate, refined by golden
/// section on the bracketing cells.
fn rastrigin_coordinate_max() -> (f64, f64) {
    let n = 1_000_001;
    let h = 10.24 / (n - 1) as f64;
    let k = (0..n).max_by(|a, b| rastrigin_1d(-5.12 + h * *a as f64).total_cmp(&rastrigin_1d(-5.12 + h * *b as f64))).unwrap();
    let (mut lo, mut hi) = (-5.12 + h * (k as f64 - 1.0), -5.12 + h * (k as f64 + 1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if rastrigin_1d(a) > rastrigin_1d(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, rastrigin_1d(x))
}

fn registry() -> ProblemRegistry {
    ProblemRegistry::builtin().unwrap()
}

#[test]
fn michalewicz_minimum_matches_literature() {
    let e = registry().find(FunctionId::Michalewicz, 5).unwrap().clone();
    assert!((e.f_min - (-4.6877)).abs() < 0.01, "{}", e.f_min);
}

#[test]
fn styblinski_tang_constant() {
    let v = eval_raw(FunctionId::StyblinskiTang, &[-2.903534; 5]).unwrap();
    assert!((v - (-195.8308)).abs() < 1e-3, "{v}");
    let e = registry().find(FunctionId::StyblinskiTang, 5).unwrap().clone();
    assert!((e.f_min - (-39.16617 * 5.0)).abs() < 1e-3);
}

#[test]
fn rastrigin_maximum_is_interior_not_corner() {
    let (x, per_coord) = rastrigin_coordinate_max();
    for dim in 4..=6 {
        let e = registry().find(FunctionId::Rastrigin, dim).unwrap().clone();
        let want = per_coord * dim as f64;
        assert!((e.f_max - want).abs() / want < 1e-6, "{dim}d: {} vs {want}", e.f_max);
        assert!(e.f_max > rastrigin_1d(5.12) * dim as f64);
        let p = registry().problem(FunctionId::Rastrigin, dim, 70).unwrap();
        assert!((true_regret(&p, &vec![x; dim]).unwrap() - 1.0).abs() < 1e-6);
        assert!(true_regret(&p, &vec![0.0; dim]).unwrap().abs() < 1e-6);
    }
}

#[test]
fn zakharov_maximum_at_upper_corner() {
    for dim in 4..=6 {
        let x = vec![10.0; dim];
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let s: f64 = (1..=dim).map(|i| 0.5 * i as f64 * 10.0).sum();
        let want = sq + s.powi(2) + s.powi(4);
        let e = registry().find(FunctionId::Zakharov, dim).unwrap().clone();
        assert!((e.f_max - want).abs() / want < 1e-9, "{} vs {want}", e.f_max);
        assert_eq!(e.f_min, 0.0);
    }
}

#[test]
fn true_regret_composes_raw_and_rescale() {
    let mut r = rng(21);
    for dim in 4..=6 {
        let e = registry().find(FunctionId::Rastrigin, dim).unwrap().clone();
        let p = registry().problem(FunctionId::Rastrigin, dim, 70).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..dim).map(|_| r.random_range(-5.12..=5.12)).collect();
            let raw: f64 = x.iter().map(|v| rastrigin_1d(*v)).sum();
            let want = ((raw - e.f_min) / (e.f_max - e.f_min)).clamp(0.0, 1.0);
            assert!((true_regret(&p, &x).unwrap() - want).abs() < 1e-12);
            assert_eq!(p.success_probability(&x), true_regret(&p, &x).unwrap());
        }
    }
}

#[test]
fn stored_extrema_bound_random_samples() {
    let mut r = rng(22);
    for e in &registry().problems {
        let p = registry().problem(e.function_id, e.dim, 70).unwrap();
        for _ in 0..2000 {
            let x: Vec<f64> = (0..e.dim).map(|_| r.random_range(e.lower..=e.upper)).collect();
            let raw = eval_raw(e.function_id, &x).unwrap();
            assert!(raw >= e.f_min - 1e-6 && raw <= e.f_max + 1e-6, "{} {}d: {raw}", e.function_id, e.dim);
            let v = p.true_value(&x).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn out_of_domain_is_rejected() {
    assert!(eval_raw(FunctionId::Rastrigin, &[6.0, 0.0]).is_err());
    assert!(eval_raw(FunctionId::Zakharov, &[]).is_err());
}

proptest! {
    #[test]
    fn rescale_is_clamped_affine(lo in -100.0..100.0f64, w in 1e-3..100.0f64, raw in -300.0..300.0f64) {
        let v = rescale(raw, lo, lo + w).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        if raw >= lo && raw <= lo + w {
            prop_assert!((v - (raw - lo) / w).abs() < 1e-12);
        }
    }
}

#[test]
fn rescale_rejects_empty_range() {
    assert!(rescale(1.0, 2.0, 2.0).is_err());
}

#[test]
fn binomial_sampler_moments() {
    let mut r = rng(23);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| f64::from(sample_binomial(0.3, 70, &mut r))).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 21.0).abs() <= 3.0 * (14.7f64 / n as f64).sqrt(), "mean {mean}");
    assert!((var - 14.7).abs() <= 0.05 * 14.7, "variance {var}");
    assert_eq!(sample_binomial(0.0, 70, &mut r), 0);
    assert_eq!(sample_binomial(1.0, 70, &mut r), 70);
}

fn table(t: Vec<Vec<f64>>) -> DolanMoreTable {
    let problems = (0..t.len()).map(|p| format!("p{p}")).collect();
    let solvers = (0..t[0].len()).map(|s| format!("s{s}")).collect();
    DolanMoreTable::new(problems, solvers, t).unwrap()
}

#[test]
fn dolan_more_symmetric_two_by_two() {
    let curves = dolan_more(&table(vec![vec![1.0, 2.0], vec![2.0, 1.0]])).unwrap();
    for c in &curves {
        for (tau, rho) in c.taus.iter().zip(&c.rho) {
            let want = if *tau <= 1.0 { 0.0 } else if *tau <= 2.0 { 0.5 } else { 1.0 };
            assert_eq!(*rho, want, "tau {tau}");
        }
        assert!(c.taus.contains(&1.0f64.next_up()) && c.taus.contains(&2.0f64.next_up()));
    }
}

#[test]
fn dolan_more_single_solver() {
    let curves = dolan_more(&table(vec![vec![0.3], vec![0.0], vec![7.0]])).unwrap();
    for (tau, rho) in curves[0].taus.iter().zip(&curves[0].rho) {
        assert_eq!(*rho, if *tau > 1.0 { 1.0 } else { 0.0 });
    }
}

fn random_table(r: &mut impl Rng) -> Vec<Vec<f64>> {
    let np = r.random_range(1..=8);
    let ns = r.random_range(1..=5);
    // one decimal place so ties occur
    (0..np)
        .map(|_| (0..ns).map(|_| (r.random_range(0.1..5.0f64) * 10.0).round() / 10.0).collect())
        .collect()
}

#[test]
fn dolan_more_matches_counting_oracle() {
    let mut r = rng(24);
    for _ in 0..100 {
        let t = random_table(&mut r);
        let curves = dolan_more(&table(t.clone())).unwrap();
        for (s, c) in curves.iter().enumerate() {
            for (tau, rho) in c.taus.iter().zip(&c.rho) {
                assert_eq!(*rho, counting_rho(&t, s, *tau));
            }
        }
    }
}

#[test]
fn dolan_more_properties() {
    let mut r = rng(25);
    for _ in 0..100 {
        let t = random_table(&mut r);
        let tab = table(t.clone());
        let ratios = tab.ratios();
        for row in &ratios {
            assert!(row.contains(&1.0));
        }
        let scaled: Vec<Vec<f64>> = t
            .iter()
            .map(|row| {
                let k = r.random_range(0.01..100.0);
                row.iter().map(|v| v * k).collect()
            })
            .collect();
        for (a, b) in ratios.iter().flatten().zip(table(scaled).ratios().iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
        for c in dolan_more(&tab).unwrap() {
            assert!(c.rho.windows(2).all(|w| w[0] <= w[1]));
            assert!(c.taus.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(c.rho[0], 0.0);
            assert_eq!(*c.rho.last().unwrap(), 1.0);
        }
    }
}

fn trace(seed: u64, pts: &[(u64, f64)]) -> RunTrace {
    RunTrace {
        problem: "p".into(),
        solver: "s".into(),
        seed,
        entries: pts
            .iter()
            .map(|&(c, v)| TraceEntry {
                cumulative_cost: c,
                best_fraction: v,
                true_value_at_incumbent: v,
            })
            .collect(),
        failed: None,
    }
}

#[test]
fn averaging_examples() {
    let stag = trace(0, &[(10, 0.9), (30, 0.5)]);
    let avg = align_and_average(std::slice::from_ref(&stag), &[20]).unwrap();
    assert_eq!(avg.mean_regret, vec![0.9]);
    let pair = [trace(0, &[(5, 0.2), (50, 0.2)]), trace(1, &[(5, 0.4), (50, 0.4)])];
    let grid = common_grid(&pair, 10).unwrap();
    assert_eq!(grid, vec![5, 10, 20, 30, 40, 50]);
    let avg = align_and_average(&pair, &grid).unwrap();
    assert!(avg.mean_regret.iter().all(|v| (v - 0.3).abs() < 1e-15));
    assert!(align_and_average(&[], &grid).is_err());
}

#[test]
fn averaged_best_fraction_is_non_increasing() {
    let mut r = rng(26);
    let traces: Vec<RunTrace> = (0..10)
        .map(|s| {
            let mut cost = 0;
            let mut best: f64 = 1.0;
            let pts: Vec<(u64, f64)> = (0..30)
                .map(|_| {
                    cost += r.random_range(35..=70);
                    best = best.min(r.random::<f64>());
                    (cost, best)
                })
                .collect();
            trace(s, &pts)
        })
        .collect();
    let grid = common_grid(&traces, 35).unwrap();
    let avg = align_and_average(&traces, &grid).unwrap();
    assert!(avg.mean_best_fraction.windows(2).all(|w| w[1] <= w[0]));
}
