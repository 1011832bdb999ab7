//! Gaussian process with a binomial likelihood through the logistic link,
//! fitted by a Laplace approximation around the posterior mode of the latent
//! function.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::{cross_cov, gram_matrix, Dataset, KernelParams};
use crate::linalg::{JITTER_MAX, JITTER_START};
use crate::special::gauss_hermite_32;

pub const MAX_NEWTON_ITERS: usize = 100;
pub const MAX_HALVINGS: usize = 20;
pub const GRAD_TOL: f64 = 1e-6;

/// Logistic sigmoid `1 / (1 + e^{−f})`.
#[inline]
pub fn inverse_link(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

pub fn ln_binomial_coeff(n: u32, k: u32) -> f64 {
    let (n, k) = (f64::from(n), f64::from(k));
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Log-likelihood of `y ~ Bin(N, σ(f))` with its first derivative and
/// negated second derivative in `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub grad: f64,
    pub neg_hess: f64,
}

pub fn binom_loglik(f: f64, successes: u32, trials: u32) -> Result<LogLik> {
    if trials == 0 || successes > trials {
        return Err(Error::invalid(format!(
            "binomial counts must satisfy 0 <= y <= N, N >= 1 (got y={successes}, N={trials})"
        )));
    }
    if !f.is_finite() {
        return Err(Error::invalid("latent value must be finite"));
    }
    Ok(loglik_unchecked(f, successes, trials, ln_binomial_coeff(trials, successes)))
}

#[inline]
fn loglik_unchecked(f: f64, y: u32, n: u32, ln_coeff: f64) -> LogLik {
    let (y, n) = (f64::from(y), f64::from(n));
    let p = inverse_link(f);
    let q = inverse_link(-f);
    LogLik {
        value: y * f - n * softplus(f) + ln_coeff,
        grad: y - n * p,
        neg_hess: n * p * q,
    }
}

/// Gaussian approximation of the latent value at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPosterior {
    pub mean: f64,
    pub variance: f64,
}

/// A fitted Laplace approximation. Immutable once built.
#[derive(Debug, Clone)]
pub struct LaplaceModel {
    params: KernelParams,
    xs: Vec<Vec<f64>>,
    latent_mode: DVector<f64>,
    /// `K⁻¹ f̂`, kept so that `f̂ = K·alpha` exactly.
    alpha: DVector<f64>,
    neg_hessian_diag: DVector<f64>,
    sqrt_w: DVector<f64>,
    stab_chol: Option<Cholesky<f64, Dyn>>,
    loglik_at_mode: f64,
    jitter: f64,
    converged: bool,
    newton_iters: usize,
    objective_history: Vec<f64>,
}

struct Counts {
    y: Vec<u32>,
    n: Vec<u32>,
    ln_coeff: Vec<f64>,
}

impl Counts {
    fn from(data: &Dataset) -> Self {
        let y: Vec<u32> = data.points().iter().map(|p| p.successes).collect();
        let n: Vec<u32> = data.points().iter().map(|p| p.trials).collect();
        let ln_coeff = y.iter().zip(&n).map(|(&y, &n)| ln_binomial_coeff(n, y)).collect();
        Counts { y, n, ln_coeff }
    }

    fn eval(&self, f: &DVector<f64>) -> (f64, DVector<f64>, DVector<f64>) {
        let m = f.len();
        let mut value = 0.0;
        let mut grad = DVector::zeros(m);
        let mut w = DVector::zeros(m);
        for i in 0..m {
            let l = loglik_unchecked(f[i], self.y[i], self.n[i], self.ln_coeff[i]);
            value += l.value;
            grad[i] = l.grad;
            w[i] = l.neg_hess;
        }
        (value, grad, w)
    }

    fn value(&self, f: &DVector<f64>) -> f64 {
        (0..f.len())
            .map(|i| loglik_unchecked(f[i], self.y[i], self.n[i], self.ln_coeff[i]).value)
            .sum()
    }
}

/// Factor of `B = I + W^½ K W^½`.
fn factor_b(k: &DMatrix<f64>, sqrt_w: &DVector<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] = sqrt_w[i] * k[(i, j)] * sqrt_w[j];
        }
        b[(j, j)] += 1.0;
    }
    Cholesky::new(b)
}

/// Finds the mode of the latent posterior by damped Newton iterations.
pub fn laplace_fit(data: &Dataset, params: &KernelParams) -> Result<LaplaceModel> {
    laplace_fit_warm(data, params, None)
}

/// As [`laplace_fit`], starting Newton from `f = K·warm_alpha` when a
/// correctly sized vector is supplied.
pub fn laplace_fit_warm(
    data: &Dataset,
    params: &KernelParams,
    warm_alpha: Option<&DVector<f64>>,
) -> Result<LaplaceModel> {
    params.validate()?;
    let params = params.noise_free();
    let xs = data.xs();
    let n = xs.len();
    if n == 0 {
        return Ok(LaplaceModel {
            params,
            xs,
            latent_mode: DVector::zeros(0),
            alpha: DVector::zeros(0),
            neg_hessian_diag: DVector::zeros(0),
            sqrt_w: DVector::zeros(0),
            stab_chol: None,
            loglik_at_mode: 0.0,
            jitter: 0.0,
            converged: true,
            newton_iters: 0,
            objective_history: Vec::new(),
        });
    }
    let counts = Counts::from(data);
    let base = gram_matrix(&params, &xs);

    let mut rel = JITTER_START;
    loop {
        let jitter = rel * params.signal_variance;
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        match newton(&k, &counts, warm_alpha.filter(|a| a.len() == n)) {
            Some(state) => {
                return Ok(LaplaceModel {
                    params,
                    xs,
                    latent_mode: state.f,
                    alpha: state.a,
                    neg_hessian_diag: state.w,
                    sqrt_w: state.sqrt_w,
                    stab_chol: Some(state.chol),
                    loglik_at_mode: state.loglik,
                    jitter,
                    converged: state.converged,
                    newton_iters: state.iters,
                    objective_history: state.history,
                })
            }
            None => {
                rel *= 10.0;
                if rel > JITTER_MAX * (1.0 + 1e-9) {
                    return Err(Error::Numerical(format!(
                        "Laplace factorization of I + W^1/2 K W^1/2 failed for {n} points \
                         even with jitter {:.1e}",
                        JITTER_MAX * params.signal_variance
                    )));
                }
            }
        }
    }
}

struct NewtonState {
    f: DVector<f64>,
    a: DVector<f64>,
    w: DVector<f64>,
    sqrt_w: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    loglik: f64,
    converged: bool,
    iters: usize,
    history: Vec<f64>,
}

fn newton(k: &DMatrix<f64>, counts: &Counts, warm: Option<&DVector<f64>>) -> Option<NewtonState> {
    let n = k.nrows();
    let tol = GRAD_TOL * (n as f64).sqrt();
    let mut a = warm.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut f = k * &a;
    let (mut loglik, mut grad, mut w) = counts.eval(&f);
    let mut objective = loglik - 0.5 * a.dot(&f);
    if !objective.is_finite() {
        // a bad warm start; fall back to the prior mode
        a = DVector::zeros(n);
        f = DVector::zeros(n);
        (loglik, grad, w) = counts.eval(&f);
        objective = loglik;
    }
    let mut history = vec![objective];
    let mut converged = false;
    let mut iters = 0;

    while iters < MAX_NEWTON_ITERS {
        if (&grad - &a).norm() <= tol {
            converged = true;
            break;
        }
        iters += 1;
        let sqrt_w = w.map(f64::sqrt);
        let chol = factor_b(k, &sqrt_w)?;
        let b = w.component_mul(&f) + &grad;
        let kb = k * &b;
        let mut c = sqrt_w.component_mul(&kb);
        let l = chol.l_dirty();
        l.solve_lower_triangular_mut(&mut c);
        l.tr_solve_lower_triangular_mut(&mut c);
        let a_newton = &b - sqrt_w.component_mul(&c);
        let step_dir = a_newton - &a;

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let a_try = &a + &step_dir * step;
            let f_try = k * &a_try;
            let obj_try = counts.value(&f_try) - 0.5 * a_try.dot(&f_try);
            if obj_try.is_finite() && obj_try >= objective {
                a = a_try;
                f = f_try;
                objective = obj_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        debug_assert!(objective >= *history.last().unwrap());
        history.push(objective);
        (loglik, grad, w) = counts.eval(&f);
    }
    if !converged && (&grad - &a).norm() <= tol {
        converged = true;
    }
    let sqrt_w = w.map(f64::sqrt);
    let chol = factor_b(k, &sqrt_w)?;
    Some(NewtonState {
        f,
        a,
        w,
        sqrt_w,
        chol,
        loglik,
        converged,
        iters,
        history,
    })
}

impl LaplaceModel {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn latent_mode(&self) -> &DVector<f64> {
        &self.latent_mode
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn neg_hessian_diag(&self) -> &DVector<f64> {
        &self.neg_hessian_diag
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn newton_iters(&self) -> usize {
        self.newton_iters
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Newton objective after the start and after every accepted step.
    pub fn objective_history(&self) -> &[f64] {
        &self.objective_history
    }

    fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::State(format!(
                "Laplace mode search did not converge within {MAX_NEWTON_ITERS} Newton iterations"
            )))
        }
    }

    fn check_dim(&self, x_star: &[f64]) -> Result<()> {
        match self.xs.first() {
            Some(x0) if x0.len() != x_star.len() => Err(Error::invalid(format!(
                "prediction point has dimension {}, model has {}",
                x_star.len(),
                x0.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn predict_latent(&self, x_star: &[f64]) -> Result<LatentPosterior> {
        self.ensure_converged()?;
        self.check_dim(x_star)?;
        Ok(self.predict_latent_unchecked(x_star))
    }

    pub(crate) fn predict_latent_unchecked(&self, x_star: &[f64]) -> LatentPosterior {
        let prior = self.params.signal_variance;
        let Some(chol) = &self.stab_chol else {
            return LatentPosterior {
                mean: 0.0,
                variance: prior,
            };
        };
        let k_star = cross_cov(&self.params, &self.xs, x_star);
        let mean = k_star.dot(&self.alpha);
        let mut v = self.sqrt_w.component_mul(&k_star);
        chol.l_dirty().solve_lower_triangular_mut(&mut v);
        LatentPosterior {
            mean,
            variance: (prior - v.norm_squared()).max(0.0),
        }
    }

    /// Predictive success probability `E[σ(f*)]` under the latent posterior.
    pub fn predict_success_prob(&self, x_star: &[f64]) -> Result<f64> {
        let post = self.predict_latent(x_star)?;
        Ok(success_prob(&post))
    }

    /// Laplace evidence `log q(y|X) = log p(y|f̂) − ½f̂ᵀK⁻¹f̂ − ½log|B|`.
    pub fn log_marginal(&self) -> Result<f64> {
        self.ensure_converged()?;
        let Some(chol) = &self.stab_chol else {
            return Ok(0.0);
        };
        let half_logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        Ok(self.loglik_at_mode - 0.5 * self.alpha.dot(&self.latent_mode) - half_logdet)
    }
}

/// `E[σ(f)]` for `f ~ Normal(mean, variance)` by 32-node Gauss-Hermite.
pub fn success_prob(post: &LatentPosterior) -> f64 {
    if post.variance <= 0.0 {
        return inverse_link(post.mean);
    }
    gauss_hermite_32().expect(post.mean, post.variance, inverse_link)
}

pub fn laplace_predict_latent(model: &LaplaceModel, x_star: &[f64]) -> Result<LatentPosterior> {
    model.predict_latent(x_star)
}

pub fn predict_success_prob(model: &LaplaceModel, x_star: &[f64]) -> Result<f64> {
    model.predict_success_prob(x_star)
}

pub fn laplace_log_marginal(model: &LaplaceModel) -> Result<f64> {
    model.log_marginal()
}
