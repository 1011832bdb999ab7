//! Python bindings: surrogates, acquisition, the continuation rule,
//! benchmark problems, single runs and whole experiments.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use binbo::acquisition::{self, AcquisitionConfig};
use binbo::benchmark::{FunctionId, ProblemRegistry};
use binbo::binomial::{self, LatentPosterior};
use binbo::engine::{self, Budget, SolverSpec};
use binbo::fidelity::{self, BetaParams, FidelityConfig};
use binbo::gaussian::{self, GaussianPosterior};
use binbo::hyper::{fit_gaussian, fit_laplace, HyperSearch};
use binbo::metrics::{self, DolanMoreTable};
use binbo::{Dataset, Error, Observation};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn dataset(xs: &[Vec<f64>], successes: &[u32], trials: &[u32]) -> PyResult<Dataset> {
    if xs.is_empty() || xs.len() != successes.len() || xs.len() != trials.len() {
        return Err(PyValueError::new_err("xs, successes and trials must be non-empty and equally long"));
    }
    let obs = xs
        .iter()
        .zip(successes)
        .zip(trials)
        .map(|((x, y), n)| Observation::new(x.clone(), *y, *n))
        .collect::<binbo::Result<Vec<_>>>()
        .map_err(to_py)?;
    Dataset::from_observations(xs[0].len(), obs).map_err(to_py)
}

/// Diagonal of the bounding box of `xs`, the scale for length-scale search.
fn data_diameter(xs: &[Vec<f64>]) -> f64 {
    let dim = xs[0].len();
    let d2: f64 = (0..dim)
        .map(|i| {
            let lo = xs.iter().map(|x| x[i]).fold(f64::INFINITY, f64::min);
            let hi = xs.iter().map(|x| x[i]).fold(f64::NEG_INFINITY, f64::max);
            (hi - lo).powi(2)
        })
        .sum();
    d2.sqrt().max(1e-6)
}

/// Squared-exponential kernel hyperparameters.
#[pyclass(name = "KernelParams", from_py_object)]
#[derive(Clone)]
struct PyKernelParams {
    inner: binbo::KernelParams,
}

#[pymethods]
impl PyKernelParams {
    #[new]
    #[pyo3(signature = (signal_variance, length_scale, noise_variance = 0.0))]
    fn new(signal_variance: f64, length_scale: f64, noise_variance: f64) -> PyResult<Self> {
        let inner = binbo::KernelParams::new(signal_variance, length_scale, noise_variance).map_err(to_py)?;
        Ok(PyKernelParams { inner })
    }

    #[getter]
    fn signal_variance(&self) -> f64 {
        self.inner.signal_variance
    }

    #[getter]
    fn length_scale(&self) -> f64 {
        self.inner.length_scale
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance
    }

    fn __repr__(&self) -> String {
        format!(
            "KernelParams(signal_variance={}, length_scale={}, noise_variance={})",
            self.inner.signal_variance, self.inner.length_scale, self.inner.noise_variance
        )
    }
}

/// Exact GP regression on real targets.
#[pyclass(name = "GaussianProcess")]
struct PyGaussianProcess {
    model: gaussian::GPModel,
    targets: Vec<f64>,
}

#[pymethods]
impl PyGaussianProcess {
    /// Fits with the given hyperparameters, or by marginal likelihood when
    /// `params` is omitted.
    #[new]
    #[pyo3(signature = (xs, ys, params = None, seed = 0))]
    fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>, params: Option<PyKernelParams>, seed: u64) -> PyResult<Self> {
        let data = dataset(&xs, &vec![0; xs.len()], &vec![1; xs.len()])?;
        let model = match params {
            Some(p) => gaussian::gp_fit(&data, &p.inner, &ys),
            None => {
                let search = HyperSearch { seed, ..HyperSearch::default() };
                fit_gaussian(&data, &ys, data_diameter(&xs), &search, None)
            }
        }
        .map_err(to_py)?;
        Ok(PyGaussianProcess { model, targets: ys })
    }

    /// Posterior `(mean, variance)` at `x`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let p = gaussian::gp_predict(&self.model, &x).map_err(to_py)?;
        Ok((p.mean, p.variance))
    }

    fn log_marginal(&self) -> PyResult<f64> {
        gaussian::gaussian_log_marginal(&self.model, &self.targets).map_err(to_py)
    }

    #[getter]
    fn params(&self) -> PyKernelParams {
        PyKernelParams { inner: *self.model.params() }
    }
}

/// Laplace-approximated GP with a binomial likelihood and logit link.
#[pyclass(name = "BinomialGP")]
struct PyBinomialGP {
    model: binomial::LaplaceModel,
}

#[pymethods]
impl PyBinomialGP {
    #[new]
    #[pyo3(signature = (xs, successes, trials, params = None, seed = 0))]
    fn new(
        xs: Vec<Vec<f64>>,
        successes: Vec<u32>,
        trials: Vec<u32>,
        params: Option<PyKernelParams>,
        seed: u64,
    ) -> PyResult<Self> {
        let data = dataset(&xs, &successes, &trials)?;
        let model = match params {
            Some(p) => binomial::laplace_fit(&data, &p.inner),
            None => {
                let search = HyperSearch { seed, ..HyperSearch::default() };
                fit_laplace(&data, data_diameter(&xs), &search, None)
            }
        }
        .map_err(to_py)?;
        Ok(PyBinomialGP { model })
    }

    /// Latent posterior `(mean, variance)` at `x`.
    fn predict_latent(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let p = binomial::laplace_predict_latent(&self.model, &x).map_err(to_py)?;
        Ok((p.mean, p.variance))
    }

    fn predict_success_prob(&self, x: Vec<f64>) -> PyResult<f64> {
        binomial::predict_success_prob(&self.model, &x).map_err(to_py)
    }

    fn log_marginal(&self) -> PyResult<f64> {
        binomial::laplace_log_marginal(&self.model).map_err(to_py)
    }

    #[getter]
    fn latent_mode(&self) -> Vec<f64> {
        self.model.latent_mode().iter().copied().collect()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.model.converged()
    }

    #[getter]
    fn params(&self) -> PyKernelParams {
        PyKernelParams { inner: *self.model.params() }
    }
}

/// Closed-form expected improvement below `y_min` of a Gaussian prediction.
#[pyfunction]
fn ei_closed(mean: f64, variance: f64, y_min: f64) -> f64 {
    acquisition::ei_closed(&GaussianPosterior { mean, variance }, y_min)
}

/// Monte-Carlo expected improvement of `sigmoid(f)`, `f ~ Normal(mean, variance)`.
#[pyfunction]
#[pyo3(signature = (mean, variance, y_min, mc_samples = 1024, seed = 0))]
fn ei_mc(mean: f64, variance: f64, y_min: f64, mc_samples: usize, seed: u64) -> f64 {
    let cfg = AcquisitionConfig { mc_samples, seed, ..AcquisitionConfig::default() };
    acquisition::ei_mc(&LatentPosterior { mean, variance }, y_min, &cfg)
}

/// Regularized incomplete beta function `I_t(alpha, beta)`.
#[pyfunction]
fn beta_cdf(alpha: f64, beta: f64, t: f64) -> PyResult<f64> {
    fidelity::beta_cdf(&BetaParams { alpha, beta }, t).map_err(to_py)
}

/// Whether a point with `y_low` successes in `n_low` draws earns the top-up.
#[pyfunction]
fn decide_continue(y_low: u32, n_low: u32, n_high: u32, lam: f64, y_min: f64) -> PyResult<bool> {
    let cfg = FidelityConfig::new(n_low, n_high, lam).map_err(to_py)?;
    fidelity::decide_continue(y_low, &cfg, y_min).map_err(to_py)
}

fn registry_problem(function_id: &str, dim: usize, trials: u32) -> PyResult<binbo::benchmark::BenchmarkProblem> {
    let id: FunctionId = function_id.parse().map_err(to_py)?;
    ProblemRegistry::builtin().and_then(|r| r.problem(id, dim, trials)).map_err(to_py)
}

/// Rescaled benchmark value (the success probability) at `x`.
#[pyfunction]
#[pyo3(signature = (function_id, x, trials = 70))]
fn true_value(function_id: &str, x: Vec<f64>, trials: u32) -> PyResult<f64> {
    registry_problem(function_id, x.len(), trials)?.true_value(&x).map_err(to_py)
}

fn solver_spec(kind: &str, lam: Option<f64>) -> PyResult<SolverSpec> {
    match (kind, lam) {
        ("gaussian_vanilla", None) => Ok(SolverSpec::gaussian(kind)),
        ("binomial_vanilla", None) => Ok(SolverSpec::binomial(kind)),
        ("binomial_multifidelity", Some(l)) => Ok(SolverSpec::multifidelity(
            kind,
            FidelityConfig::halved(binbo::benchmark::DEFAULT_TRIALS, l).map_err(to_py)?,
        )),
        ("binomial_multifidelity", None) => Err(PyValueError::new_err("binomial_multifidelity needs lam")),
        (_, Some(_)) => Err(PyValueError::new_err("lam applies only to binomial_multifidelity")),
        (other, None) => Err(PyValueError::new_err(format!("unknown solver kind `{other}`"))),
    }
}

/// One optimization run. Returns `(cumulative_cost, best_fraction,
/// true_value_at_incumbent)` lists.
#[pyfunction]
#[pyo3(signature = (function_id, dim, kind, total_draws, seed = 0, lam = None))]
fn run_bo(
    py: Python<'_>,
    function_id: &str,
    dim: usize,
    kind: &str,
    total_draws: u64,
    seed: u64,
    lam: Option<f64>,
) -> PyResult<(Vec<u64>, Vec<f64>, Vec<f64>)> {
    let problem = registry_problem(function_id, dim, binbo::benchmark::DEFAULT_TRIALS)?;
    let solver = solver_spec(kind, lam)?;
    let out = py
        .detach(|| engine::run_bo(&problem, &solver, &Budget::new(total_draws), seed))
        .map_err(to_py)?;
    if let Some(msg) = out.trace.failed {
        return Err(PyRuntimeError::new_err(msg));
    }
    let e = &out.trace.entries;
    Ok((
        e.iter().map(|t| t.cumulative_cost).collect(),
        e.iter().map(|t| t.best_fraction).collect(),
        e.iter().map(|t| t.true_value_at_incumbent).collect(),
    ))
}

/// Performance profiles of a `problems × solvers` result table. Returns
/// one `(taus, rho)` pair per solver.
#[pyfunction]
fn dolan_more(t: Vec<Vec<f64>>) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let solvers = t.first().map_or(0, Vec::len);
    let table = DolanMoreTable::new(
        (0..t.len()).map(|p| format!("p{p}")).collect(),
        (0..solvers).map(|s| format!("s{s}")).collect(),
        t,
    )
    .map_err(to_py)?;
    Ok(metrics::dolan_more(&table)
        .map_err(to_py)?
        .into_iter()
        .map(|c| (c.taus, c.rho))
        .collect())
}

/// Runs an experiment from TOML text. Returns `(executed, skipped, failed)`.
#[pyfunction]
#[pyo3(signature = (config_text, output_dir = None))]
fn run_experiment(py: Python<'_>, config_text: &str, output_dir: Option<PathBuf>) -> PyResult<(usize, usize, usize)> {
    let (_, s) = py
        .detach(|| binbo::cli::run_experiment(config_text, output_dir))
        .map_err(to_py)?
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((s.executed, s.skipped, s.failed))
}

#[pymodule]
fn binbo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernelParams>()?;
    m.add_class::<PyGaussianProcess>()?;
    m.add_class::<PyBinomialGP>()?;
    m.add_function(wrap_pyfunction!(ei_closed, m)?)?;
    m.add_function(wrap_pyfunction!(ei_mc, m)?)?;
    m.add_function(wrap_pyfunction!(beta_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(decide_continue, m)?)?;
    m.add_function(wrap_pyfunction!(true_value, m)?)?;
    m.add_function(wrap_pyfunction!(run_bo, m)?)?;
    m.add_function(wrap_pyfunction!(dolan_more, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
