//! Test functions rescaled to success probabilities, and the binomial
//! observation simulator.
//!
//! Formulas (`d` = dimension, `i` = 1-based coordinate index):
//!
//! | function          | value                                                | domain          |
//! |-------------------|------------------------------------------------------|-----------------|
//! | `michalewicz`     | `−Σ sin(x_i)·sin(i·x_i²/π)^(2m)`, `m = 10`           | `[0, π]^d`      |
//! | `rastrigin`       | `10d + Σ (x_i² − 10·cos(2πx_i))`                     | `[−5.12, 5.12]^d` |
//! | `zakharov`        | `Σ x_i² + s² + s⁴` with `s = Σ 0.5·i·x_i`            | `[−5, 10]^d`    |
//! | `styblinski_tang` | `½ Σ (x_i⁴ − 16x_i² + 5x_i)`                          | `[−5, 5]^d`     |
//!
//! A raw value `f̂` becomes `(f̂ − f̂_min)/(f̂_max − f̂_min)`, clamped to `[0, 1]`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Bounds;
use crate::rng::stream;

pub const MICHALEWICZ_STEEPNESS: i32 = 10;
pub const DEFAULT_TRIALS: u32 = 70;
pub const DEFAULT_LOW_TRIALS: u32 = 35;
pub const EXTREMA_STARTS: usize = 1000;
const SPOT_CHECK_POINTS: usize = 10_000;
const RESCALE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionId {
    Michalewicz,
    Rastrigin,
    Zakharov,
    StyblinskiTang,
}

impl FunctionId {
    pub const ALL: [FunctionId; 4] = [
        FunctionId::Michalewicz,
        FunctionId::Rastrigin,
        FunctionId::Zakharov,
        FunctionId::StyblinskiTang,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionId::Michalewicz => "michalewicz",
            FunctionId::Rastrigin => "rastrigin",
            FunctionId::Zakharov => "zakharov",
            FunctionId::StyblinskiTang => "styblinski_tang",
        }
    }

    /// Standard search interval, identical on every axis.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            FunctionId::Michalewicz => (0.0, PI),
            FunctionId::Rastrigin => (-5.12, 5.12),
            FunctionId::Zakharov => (-5.0, 10.0),
            FunctionId::StyblinskiTang => (-5.0, 5.0),
        }
    }

    pub fn bounds(&self, dim: usize) -> Result<Bounds> {
        let (lo, hi) = self.domain();
        Bounds::cube(dim, lo, hi)
    }

    /// Zakharov and Styblinski-Tang have a single global minimum; the other
    /// two are highly multimodal.
    pub fn single_minimum(&self) -> bool {
        matches!(self, FunctionId::Zakharov | FunctionId::StyblinskiTang)
    }

    pub fn group(&self) -> &'static str {
        if self.single_minimum() {
            "single_minimum"
        } else {
            "multi_minimum"
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FunctionId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown function_id `{s}` (expected one of michalewicz, rastrigin, zakharov, styblinski_tang)"
                ))
            })
    }
}

pub(crate) fn raw_unchecked(id: FunctionId, x: &[f64]) -> f64 {
    match id {
        FunctionId::Michalewicz => -x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let inner = ((i + 1) as f64 * v * v / PI).sin();
                v.sin() * inner.powi(2 * MICHALEWICZ_STEEPNESS)
            })
            .sum::<f64>(),
        FunctionId::Rastrigin => {
            10.0 * x.len() as f64
                + x.iter()
                    .map(|&v| v * v - 10.0 * (2.0 * PI * v).cos())
                    .sum::<f64>()
        }
        FunctionId::Zakharov => {
            let sq: f64 = x.iter().map(|v| v * v).sum();
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| 0.5 * (i + 1) as f64 * v)
                .sum();
            sq + s * s + s.powi(4)
        }
        FunctionId::StyblinskiTang => {
            0.5 * x
                .iter()
                .map(|&v| v.powi(4) - 16.0 * v * v + 5.0 * v)
                .sum::<f64>()
        }
    }
}

/// Raw function value; `x` must lie in the function's standard domain.
pub fn eval_raw(id: FunctionId, x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("empty input vector"));
    }
    id.bounds(x.len())?.check(x)?;
    Ok(raw_unchecked(id, x))
}

/// Affine map of `[f_min, f_max]` onto `[0, 1]`, clamped.
pub fn rescale(raw: f64, f_min: f64, f_max: f64) -> Result<f64> {
    if !(f_min < f_max) {
        return Err(Error::invalid(format!(
            "rescaling needs f_min < f_max (got {f_min} and {f_max})"
        )));
    }
    Ok(((raw - f_min) / (f_max - f_min)).clamp(0.0, 1.0))
}

/// Per-coordinate minimizer of `½(x⁴ − 16x² + 5x)`: the root of
/// `4x³ − 32x + 5` near −2.9035.
fn styblinski_tang_coordinate_min() -> f64 {
    let mut x = -2.9f64;
    for _ in 0..50 {
        let g = 4.0 * x.powi(3) - 32.0 * x + 5.0;
        let h = 12.0 * x * x - 32.0;
        x -= g / h;
    }
    0.5 * (x.powi(4) - 16.0 * x * x + 5.0 * x)
}

/// Best point found by maximizing `g` from seeded random starts. Each start
/// gets two sweeps of per-axis grid scans followed by a compass search.
fn multistart_maximize<G: Fn(&[f64]) -> f64>(bounds: &Bounds, starts: usize, seed: u64, label: &str, g: G) -> (Vec<f64>, f64) {
    const GRID: usize = 101;
    let dim = bounds.dim();
    let mut rng = stream(seed, &["extrema", label]);
    let mut best = (bounds.lower().to_vec(), f64::NEG_INFINITY);
    for _ in 0..starts {
        let mut x: Vec<f64> = (0..dim)
            .map(|i| rng.random_range(bounds.lower()[i]..=bounds.upper()[i]))
            .collect();
        let mut value = g(&x);
        for _ in 0..2 {
            for axis in 0..dim {
                for k in 0..GRID {
                    let mut cand = x.clone();
                    cand[axis] = bounds.lower()[axis] + bounds.width(axis) * k as f64 / (GRID - 1) as f64;
                    let v = g(&cand);
                    if v > value {
                        value = v;
                        x = cand;
                    }
                }
            }
        }
        let mut step: Vec<f64> = (0..dim).map(|i| bounds.width(i) / (GRID - 1) as f64).collect();
        while step.iter().any(|s| *s > 1e-10) {
            let mut improved = false;
            for axis in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut cand = x.clone();
                    cand[axis] += sign * step[axis];
                    bounds.clamp(&mut cand);
                    let v = g(&cand);
                    if v > value {
                        value = v;
                        x = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in &mut step {
                    *s *= 0.5;
                }
            }
        }
        if value > best.1 {
            best = (x, value);
        }
    }
    best
}

/// `(f̂_min, f̂_max)` over the standard domain. Analytic minima are used where
/// known; the rest comes from `starts` seeded multi-start searches.
pub fn estimate_extrema_with(id: FunctionId, dim: usize, seed: u64, starts: usize) -> Result<(f64, f64)> {
    let bounds = id.bounds(dim)?;
    let f_min = match id {
        FunctionId::Rastrigin | FunctionId::Zakharov => 0.0,
        FunctionId::StyblinskiTang => dim as f64 * styblinski_tang_coordinate_min(),
        FunctionId::Michalewicz => {
            -multistart_maximize(&bounds, starts, seed, "min", |x| -raw_unchecked(id, x)).1
        }
    };
    let f_max = multistart_maximize(&bounds, starts, seed, "max", |x| raw_unchecked(id, x)).1;
    Ok((f_min, f_max))
}

pub fn estimate_extrema(id: FunctionId, dim: usize, seed: u64) -> Result<(f64, f64)> {
    estimate_extrema_with(id, dim, seed, EXTREMA_STARTS)
}

/// Count of successes in `trials` Bernoulli(`p`) draws.
pub fn sample_binomial<R: Rng + ?Sized>(p: f64, trials: u32, rng: &mut R) -> u32 {
    let p = p.clamp(0.0, 1.0);
    (0..trials).filter(|_| rng.random::<f64>() < p).count() as u32
}

/// Anything the optimization loop can query: a box and a success
/// probability at each point of it.
pub trait Objective: Sync {
    fn id(&self) -> String;
    fn bounds(&self) -> &Bounds;
    /// Default trial count of a full evaluation.
    fn trials_high(&self) -> u32;
    /// Noiseless success probability in `[0, 1]`.
    fn success_probability(&self, x: &[f64]) -> f64;
}

/// One rescaled test problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkProblem {
    pub function_id: FunctionId,
    pub dim: usize,
    pub bounds: Bounds,
    pub f_min: f64,
    pub f_max: f64,
    pub trials_high: u32,
}

impl BenchmarkProblem {
    /// Validates the extrema and spot-checks that the rescaled target stays
    /// within `[0, 1]` (up to 1e-6) on 10⁴ random points.
    pub fn new(function_id: FunctionId, dim: usize, f_min: f64, f_max: f64, trials_high: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(f_min.is_finite() && f_max.is_finite() && f_min < f_max) {
            return Err(Error::invalid(format!(
                "{function_id}: need finite f_min < f_max (got {f_min}, {f_max})"
            )));
        }
        if trials_high == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        let bounds = function_id.bounds(dim)?;
        let mut rng = stream(0, &["spot-check", function_id.as_str(), &dim.to_string()]);
        let span = f_max - f_min;
        for _ in 0..SPOT_CHECK_POINTS {
            let x: Vec<f64> = (0..dim)
                .map(|i| rng.random_range(bounds.lower()[i]..=bounds.upper()[i]))
                .collect();
            let r = (raw_unchecked(function_id, &x) - f_min) / span;
            if !(-RESCALE_TOL..=1.0 + RESCALE_TOL).contains(&r) {
                return Err(Error::invalid(format!(
                    "{function_id} in {dim}d: rescaled value {r} at {x:?} falls outside [0, 1]; \
                     the stored extrema are wrong"
                )));
            }
        }
        Ok(BenchmarkProblem {
            function_id,
            dim,
            bounds,
            f_min,
            f_max,
            trials_high,
        })
    }

    /// Builds a problem by estimating the extrema on the spot.
    pub fn estimated(function_id: FunctionId, dim: usize, trials_high: u32, seed: u64) -> Result<Self> {
        let (lo, hi) = estimate_extrema(function_id, dim, seed)?;
        BenchmarkProblem::new(function_id, dim, lo, hi, trials_high)
    }

    /// Rescaled noiseless value, i.e. the regret at `x`.
    pub fn true_value(&self, x: &[f64]) -> Result<f64> {
        rescale(eval_raw(self.function_id, x)?, self.f_min, self.f_max)
    }
}

impl Objective for BenchmarkProblem {
    fn id(&self) -> String {
        format!("{}-{}d-n{}", self.function_id, self.dim, self.trials_high)
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn trials_high(&self) -> u32 {
        self.trials_high
    }

    fn success_probability(&self, x: &[f64]) -> f64 {
        ((raw_unchecked(self.function_id, x) - self.f_min) / (self.f_max - self.f_min)).clamp(0.0, 1.0)
    }
}

/// An objective defined by a closure, for custom targets and tests.
pub struct FnObjective<F> {
    pub name: String,
    pub bounds: Bounds,
    pub trials_high: u32,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn trials_high(&self) -> u32 {
        self.trials_high
    }

    fn success_probability(&self, x: &[f64]) -> f64 {
        (self.f)(x).clamp(0.0, 1.0)
    }
}

/// One row of the problem-definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemEntry {
    pub function_id: FunctionId,
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub trials: u32,
}

/// Problem-definition file with frozen extrema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemRegistry {
    #[serde(default, rename = "problem")]
    pub problems: Vec<ProblemEntry>,
}

/// Contents of `data/problems.toml`, compiled in.
pub const BUILTIN_PROBLEMS: &str = include_str!("../../../data/problems.toml");

impl ProblemRegistry {
    pub fn builtin() -> Result<Self> {
        ProblemRegistry::parse(BUILTIN_PROBLEMS)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let reg: ProblemRegistry =
            toml::from_str(text).map_err(|e| Error::Format(format!("problem file: {e}")))?;
        for e in &reg.problems {
            let (lo, hi) = e.function_id.domain();
            if e.lower != lo || e.upper != hi {
                return Err(Error::Format(format!(
                    "problem file: {} bounds [{}, {}] differ from the standard domain [{lo}, {hi}]",
                    e.function_id, e.lower, e.upper
                )));
            }
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ProblemRegistry::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("registry serializes")
    }

    pub fn find(&self, id: FunctionId, dim: usize) -> Option<&ProblemEntry> {
        self.problems.iter().find(|e| e.function_id == id && e.dim == dim)
    }

    /// Inserts or replaces the entry for `(function_id, dim)`, keeping a
    /// stable order.
    pub fn upsert(&mut self, entry: ProblemEntry) {
        match self
            .problems
            .iter_mut()
            .find(|e| e.function_id == entry.function_id && e.dim == entry.dim)
        {
            Some(e) => *e = entry,
            None => self.problems.push(entry),
        }
        self.problems.sort_by_key(|e| (e.function_id, e.dim));
    }

    /// Problem with frozen extrema and the given trial count.
    pub fn problem(&self, id: FunctionId, dim: usize, trials: u32) -> Result<BenchmarkProblem> {
        let e = self.find(id, dim).ok_or_else(|| {
            Error::invalid(format!(
                "no stored extrema for {id} in {dim}d; run `regen-extrema {id} {dim}` first"
            ))
        })?;
        BenchmarkProblem::new(id, dim, e.f_min, e.f_max, trials)
    }
}

pub fn entry_from_estimate(id: FunctionId, dim: usize, seed: u64) -> Result<ProblemEntry> {
    let (f_min, f_max) = estimate_extrema(id, dim, seed)?;
    let (lower, upper) = id.domain();
    // adding zero turns a negative zero into zero
    Ok(ProblemEntry {
        function_id: id,
        dim,
        lower,
        upper,
        f_min: f_min + 0.0,
        f_max: f_max + 0.0,
        trials: DEFAULT_TRIALS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_minima() {
        assert_eq!(eval_raw(FunctionId::Rastrigin, &[0.0; 5]).unwrap(), 0.0);
        assert_eq!(eval_raw(FunctionId::Zakharov, &[0.0; 5]).unwrap(), 0.0);
        let v = eval_raw(FunctionId::StyblinskiTang, &[-2.903534; 5]).unwrap();
        assert!((v + 195.8308).abs() < 1e-3, "{v}");
        assert!((v - 5.0 * -39.16617).abs() < 1e-3);
    }

    #[test]
    fn out_of_domain_rejected() {
        assert!(eval_raw(FunctionId::Michalewicz, &[-0.1, 1.0]).is_err());
        assert!(eval_raw(FunctionId::Zakharov, &[10.5]).is_err());
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale(-3.0, -3.0, 5.0).unwrap(), 0.0);
        assert_eq!(rescale(5.0, -3.0, 5.0).unwrap(), 1.0);
        assert_eq!(rescale(1.0, -3.0, 5.0).unwrap(), 0.5);
        assert_eq!(rescale(5.5, -3.0, 5.0).unwrap(), 1.0);
        assert!(rescale(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn binomial_degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_binomial(0.0, 70, &mut rng), 0);
            assert_eq!(sample_binomial(1.0, 70, &mut rng), 70);
        }
    }

    #[test]
    fn parses_function_ids() {
        for f in FunctionId::ALL {
            assert_eq!(f.as_str().parse::<FunctionId>().unwrap(), f);
        }
        assert!("ackley".parse::<FunctionId>().is_err());
    }

    #[test]
    fn builtin_registry_covers_grid() {
        let reg = ProblemRegistry::builtin().unwrap();
        for f in FunctionId::ALL {
            for d in 4..=6 {
                let p = reg.problem(f, d, 70).unwrap();
                assert!(p.f_min < p.f_max);
            }
        }
    }

    #[test]
    fn bad_extrema_fail_spot_check() {
        let r = BenchmarkProblem::new(FunctionId::Rastrigin, 4, 0.0, 10.0, 70);
        assert!(r.is_err());
    }
}
