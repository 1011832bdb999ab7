//! Independent reference implementations used as test oracles. None of
//! these call into the library's numerical code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn se_kernel(sf2: f64, theta: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sf2 * (-d2 / (2.0 * theta * theta)).exp()
}

pub fn gram(sf2: f64, theta: f64, xs: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), xs.len(), |i, j| se_kernel(sf2, theta, &xs[i], &xs[j]))
}

/// Posterior mean and variance from an explicit inverse of `K + s·I`.
pub fn dense_gp_predict(
    xs: &[Vec<f64>],
    ys: &[f64],
    sf2: f64,
    theta: f64,
    diag: f64,
    x_star: &[f64],
) -> (f64, f64) {
    let n = xs.len();
    let k = gram(sf2, theta, xs) + DMatrix::identity(n, n) * diag;
    let kinv = k.try_inverse().expect("invertible test Gram");
    let ks = DVector::from_iterator(n, xs.iter().map(|x| se_kernel(sf2, theta, x, x_star)));
    let y = DVector::from_column_slice(ys);
    let mean = (ks.transpose() * &kinv * y)[(0, 0)];
    let var = sf2 - (ks.transpose() * &kinv * &ks)[(0, 0)];
    (mean, var)
}

/// `−½ yᵀK⁻¹y − ½ log|K| − n/2 log 2π` from an explicit inverse and
/// determinant.
pub fn dense_log_marginal(xs: &[Vec<f64>], ys: &[f64], sf2: f64, theta: f64, diag: f64) -> f64 {
    let n = xs.len();
    let k = gram(sf2, theta, xs) + DMatrix::identity(n, n) * diag;
    let det = k.determinant();
    let kinv = k.try_inverse().expect("invertible test Gram");
    let y = DVector::from_column_slice(ys);
    -0.5 * (y.transpose() * kinv * &y)[(0, 0)] - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

fn log1pexp(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

/// `ln C(n, k)` by direct summation of logs.
pub fn ln_choose(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| (f64::from(n - i)).ln() - (f64::from(i + 1)).ln()).sum()
}

/// Binomial log-likelihood without the binomial coefficient.
pub fn loglik_kernel(f: f64, y: u32, n: u32) -> f64 {
    f64::from(y) * f - f64::from(n) * log1pexp(f)
}

/// Unnormalized exact log-posterior of the latent values.
pub struct LatentProblem {
    pub kinv: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub ys: Vec<u32>,
    pub ns: Vec<u32>,
}

impl LatentProblem {
    pub fn new(xs: &[Vec<f64>], ys: &[u32], ns: &[u32], sf2: f64, theta: f64) -> Self {
        let k = gram(sf2, theta, xs);
        LatentProblem {
            kinv: k.clone().try_inverse().expect("invertible prior"),
            k,
            ys: ys.to_vec(),
            ns: ns.to_vec(),
        }
    }

    pub fn log_post(&self, f: &DVector<f64>) -> f64 {
        let lik: f64 = (0..f.len()).map(|i| loglik_kernel(f[i], self.ys[i], self.ns[i])).sum();
        lik - 0.5 * (f.transpose() * &self.kinv * f)[(0, 0)]
    }

    /// Mode by repeated grid scans over a shrinking box; valid because the
    /// log-posterior is strictly concave.
    pub fn grid_mode(&self) -> DVector<f64> {
        let n = self.ys.len();
        let per_axis = 21usize;
        let mut center = DVector::zeros(n);
        let mut half = 12.0;
        while half > 1e-6 {
            let step = 2.0 * half / (per_axis - 1) as f64;
            let mut best = (f64::NEG_INFINITY, center.clone());
            let total = per_axis.pow(n as u32);
            for idx in 0..total {
                let mut f = center.clone();
                let mut r = idx;
                for d in 0..n {
                    f[d] += -half + step * (r % per_axis) as f64;
                    r /= per_axis;
                }
                let v = self.log_post(&f);
                if v > best.0 {
                    best = (v, f);
                }
            }
            center = best.1;
            half = 2.0 * step;
        }
        center
    }

    /// Negative Hessian of the log-posterior.
    pub fn neg_hessian(&self, f: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.kinv.clone();
        for i in 0..f.len() {
            let s = sigmoid(f[i]);
            h[(i, i)] += f64::from(self.ns[i]) * s * (1.0 - s);
        }
        h
    }

    /// Integrates `g(f)·exp(log_post(f) − log_post(mode))` on a whitened
    /// tensor grid around the mode; returns `(∫g·w, ∫w, log scale)` where the
    /// true integral of `exp(log_post)` is `∫w · exp(log scale)`.
    pub fn integrate<G: Fn(&DVector<f64>) -> f64>(&self, step: f64, reach: f64, g: G) -> (f64, f64, f64) {
        let n = self.ys.len();
        let mode = self.grid_mode();
        let cov = self.neg_hessian(&mode).try_inverse().expect("invertible Hessian");
        let l = cov.cholesky().expect("positive Hessian").l();
        let per_axis = (2.0 * reach / step).round() as usize + 1;
        let top = self.log_post(&mode);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut z = DVector::zeros(n);
        for idx in 0..per_axis.pow(n as u32) {
            let mut r = idx;
            for d in 0..n {
                z[d] = -reach + step * (r % per_axis) as f64;
                r /= per_axis;
            }
            let f = &mode + &l * &z;
            let w = (self.log_post(&f) - top).exp();
            num += g(&f) * w;
            den += w;
        }
        let jac = l.determinant() * step.powi(n as i32);
        (num * jac, den * jac, top)
    }
}

/// `E[σ(F)]` for `F ~ Normal(m, v)` by trapezoid on ±10 standard deviations.
pub fn expected_sigmoid(m: f64, v: f64, points: usize) -> f64 {
    if v <= 0.0 {
        return sigmoid(m);
    }
    let s = v.sqrt();
    trapezoid(|u| sigmoid(m + s * u) * normal_pdf(u), -10.0, 10.0, points)
}

pub fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize) -> f64 {
    let h = (b - a) / (points - 1) as f64;
    let inner: f64 = (1..points - 1).map(|i| f(a + h * i as f64)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // the relative floor stops refinement once round-off dominates
        if depth == 0 || delta.abs() <= (15.0 * tol).max(1e-15 * (left + right).abs()) {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Beta(a, b) CDF at `t` as a ratio of two quadratures of the density
/// scaled by its mode value.
pub fn beta_cdf_quadrature(a: f64, b: f64, t: f64) -> f64 {
    let mode = if a + b > 2.0 { (a - 1.0) / (a + b - 2.0) } else { 0.5 };
    let log_density = |x: f64| (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln();
    let top = if mode > 0.0 && mode < 1.0 { log_density(mode) } else { 0.0 };
    let g = |x: f64| {
        if x <= 0.0 || x >= 1.0 {
            let v: f64 = if x <= 0.0 { if a == 1.0 { 1.0 } else { 0.0 } } else if b == 1.0 { 1.0 } else { 0.0 };
            return v * (-top).exp();
        }
        (log_density(x) - top).exp()
    };
    // split at the mode so each piece is monotone
    let split = |lo: f64, hi: f64| {
        if mode > lo && mode < hi {
            adaptive_simpson(&g, lo, mode, 1e-15) + adaptive_simpson(&g, mode, hi, 1e-15)
        } else {
            adaptive_simpson(&g, lo, hi, 1e-15)
        }
    };
    split(0.0, t) / split(0.0, 1.0)
}

/// `I_t(a, b)` for integer parameters: `P(Binomial(a+b−1, t) ≥ a)`.
pub fn beta_cdf_binomial_tail(a: u32, b: u32, t: f64) -> f64 {
    let n = a + b - 1;
    (a..=n)
        .map(|j| (ln_choose(n, j) + f64::from(j) * t.ln() + f64::from(n - j) * (1.0 - t).ln()).exp())
        .sum()
}

/// `ρ_s(τ)` by direct counting: share of problems with `t[p][s] < τ·min_s' t[p][s']`.
pub fn counting_rho(t: &[Vec<f64>], s: usize, tau: f64) -> f64 {
    let hits = t
        .iter()
        .filter(|row| {
            let best = row.iter().copied().fold(f64::INFINITY, f64::min);
            row[s] / best < tau
        })
        .count();
    hits as f64 / t.len() as f64
}
