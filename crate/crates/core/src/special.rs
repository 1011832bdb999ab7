//! Special functions: regularized incomplete beta, Gauss-Hermite rules and
//! standard-normal helpers.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use libm::erfc;
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function `I_t(a, b)`.
///
/// Evaluated by the Lentz continued fraction on whichever side of the
/// distribution mean converges fastest, using `I_t(a,b) = 1 − I_{1−t}(b,a)`
/// for the other side.
pub fn reg_inc_beta(a: f64, b: f64, t: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!(
            "beta parameters must be positive and finite, got ({a}, {b})"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("beta CDF argument {t} is outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t == 1.0 {
        return Ok(1.0);
    }
    let front = ln_front(a, b, t).exp();
    let v = if t < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, t)? / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - t)? / b
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Stirling remainder `lnΓ(x) − [(x−½)ln x − x + ½ln 2π]` for `x ≥ 10`.
fn stirling_corr(x: f64) -> f64 {
    let r = 1.0 / (x * x);
    (1.0 / 12.0 - r * (1.0 / 360.0 - r * (1.0 / 1260.0 - r * (1.0 / 1680.0 - r / 1188.0)))) / x
}

/// `ln[t^a (1−t)^b / B(a, b)]`. Large parameters use a Stirling form that
/// avoids cancelling large log-gamma terms.
fn ln_front(a: f64, b: f64, t: f64) -> f64 {
    if a.min(b) < 10.0 {
        return a * t.ln() + b * (-t).ln_1p() - ln_beta(a, b);
    }
    let s = a + b;
    let u = t * b - (1.0 - t) * a;
    a * (u / a).ln_1p() + b * (-u / b).ln_1p() + 0.5 * (a * b / s).ln() - 0.5 * (2.0 * PI).ln()
        - stirling_corr(a)
        - stirling_corr(b)
        + stirling_corr(s)
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::Numerical(format!(
        "incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )))
}

/// Nodes and weights of an `n`-point Gauss-Hermite rule for the weight
/// `exp(−x²)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        // Newton iteration on the orthonormal Hermite recurrence.
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussHermite { nodes, weights }
    }

    /// `E[g(X)]` for `X ~ Normal(mean, variance)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, mean: f64, variance: f64, g: F) -> f64 {
        let s = (2.0 * variance.max(0.0)).sqrt();
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * g(mean + s * x))
            .sum();
        total / PI.sqrt()
    }
}

/// Shared 32-node rule.
pub fn gauss_hermite_32() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(32))
}
