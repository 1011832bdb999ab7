//! Expected Improvement for minimization and a gradient-free maximizer for
//! acquisition surfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binomial::{inverse_link, LatentPosterior};
use crate::error::{Error, Result};
use crate::gaussian::GaussianPosterior;
use crate::kernel::Bounds;
use crate::special::{normal_cdf, normal_pdf};

pub const MIN_MC_SAMPLES: usize = 64;

/// Best observed success fraction and where it was seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub y_min: f64,
    pub x_min: Vec<f64>,
    /// Position of the incumbent in the dataset.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub mc_samples: usize,
    pub restarts: usize,
    pub local_steps: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            mc_samples: 1024,
            restarts: 16,
            local_steps: 60,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::invalid(format!(
                "mc_samples must be at least {MIN_MC_SAMPLES}, got {}",
                self.mc_samples
            )));
        }
        if self.restarts == 0 || self.local_steps == 0 {
            return Err(Error::invalid("restarts and local_steps must be positive"));
        }
        Ok(())
    }
}

/// Closed-form EI, `(y_min−μ)Φ(z) + σφ(z)` with `z = (y_min−μ)/σ`.
pub fn ei_closed(post: &GaussianPosterior, y_min: f64) -> f64 {
    let sigma = post.std_dev();
    let diff = y_min - post.mean;
    if sigma <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / sigma;
    (diff * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Monte-Carlo EI through the logistic link with a fixed set of standard
/// normal draws, so repeated evaluations share common random numbers.
#[derive(Debug, Clone)]
pub struct McEi {
    normals: Vec<f64>,
}

impl McEi {
    pub fn new(samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        McEi {
            normals: (0..samples).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    pub fn from_config(cfg: &AcquisitionConfig) -> Self {
        McEi::new(cfg.mc_samples, cfg.seed)
    }

    pub fn samples(&self) -> usize {
        self.normals.len()
    }

    pub fn eval(&self, latent: &LatentPosterior, y_min: f64) -> f64 {
        if y_min <= 0.0 || self.normals.is_empty() {
            return 0.0;
        }
        let sd = latent.variance.max(0.0).sqrt();
        let total: f64 = self
            .normals
            .iter()
            .map(|z| (y_min - inverse_link(latent.mean + sd * z)).max(0.0))
            .sum();
        total / self.normals.len() as f64
    }
}

/// EI of `σ(f)` with `f` drawn from `latent`, averaged over `cfg.mc_samples`
/// draws seeded by `cfg.seed`.
pub fn ei_mc(latent: &LatentPosterior, y_min: f64, cfg: &AcquisitionConfig) -> f64 {
    McEi::from_config(cfg).eval(latent, y_min)
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|p| *p * *p <= c).all(|p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `count` points of a Halton sequence in the unit cube, randomly shifted
/// modulo 1 with a seeded offset.
pub fn shifted_halton(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let primes = first_primes(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            primes
                .iter()
                .zip(&shift)
                .map(|(&b, s)| (radical_inverse(i, b) + s).fract())
                .collect()
        })
        .collect()
}

/// Maximizes `acq` over `bounds`: one compass search of `local_steps` sweeps
/// from each of `restarts` low-discrepancy starts. Non-finite probes are
/// discarded. Ties resolve to the earliest restart.
pub fn optimize_acquisition<F>(acq: F, bounds: &Bounds, cfg: &AcquisitionConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = bounds.dim();
    let starts = shifted_halton(dim, cfg.restarts.max(1), cfg.seed);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for (restart, u) in starts.iter().enumerate() {
        let mut x = bounds.from_unit(u);
        bounds.clamp(&mut x);
        let mut value = acq(&x);
        let mut steps: Vec<f64> = (0..dim).map(|i| 0.25 * bounds.width(i)).collect();
        for _ in 0..cfg.local_steps {
            let mut improved = false;
            for axis in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut cand = x.clone();
                    cand[axis] += sign * steps[axis];
                    bounds.clamp(&mut cand);
                    if cand[axis] == x[axis] {
                        continue;
                    }
                    let v = acq(&cand);
                    if v.is_finite() && (!value.is_finite() || v > value) {
                        value = v;
                        x = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in &mut steps {
                    *s *= 0.5;
                }
            }
        }
        if !value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bv, bi, _)) => value > *bv || (value == *bv && restart < *bi),
        };
        if better {
            best = Some((value, restart, x));
        }
    }
    best.map(|(_, _, x)| x).ok_or_else(|| {
        Error::Numerical("acquisition function was non-finite at every probe".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(mean: f64, sd: f64) -> GaussianPosterior {
        GaussianPosterior {
            mean,
            variance: sd * sd,
        }
    }

    #[test]
    fn ei_closed_examples() {
        assert!((ei_closed(&post(0.2, 0.0), 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(ei_closed(&post(0.7, 0.0), 0.5), 0.0);
        let v = ei_closed(&post(0.4, 0.1), 0.4);
        assert!((v - 0.1 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ei_closed_monotone_on_grid() {
        for i in 0..20 {
            let sd = 0.02 + 0.05 * i as f64;
            let mut prev = f64::INFINITY;
            for j in 0..40 {
                let mu = -1.0 + 0.05 * j as f64;
                let v = ei_closed(&post(mu, sd), 0.3);
                assert!(v <= prev + 1e-15);
                assert!(v >= (0.3 - mu).max(0.0) - 1e-15);
                prev = v;
            }
        }
        for j in 0..10 {
            let mu = 0.3 - 0.05 * j as f64;
            let mut prev = 0.0;
            for i in 0..40 {
                let v = ei_closed(&post(mu, 0.01 * i as f64), 0.3);
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn ei_mc_limits() {
        let cfg = AcquisitionConfig::default();
        let l = LatentPosterior { mean: -1.0, variance: 2.0 };
        assert_eq!(ei_mc(&l, 0.0, &cfg), 0.0);
        let l = LatentPosterior { mean: -1.0, variance: 0.0 };
        assert!((ei_mc(&l, 0.6, &cfg) - (0.6 - inverse_link(-1.0))).abs() < 1e-14);
        let l = LatentPosterior { mean: 0.3, variance: 1.7 };
        let a = ei_mc(&l, 0.4, &cfg);
        let b = ei_mc(&l, 0.4, &cfg);
        assert_eq!(a.to_bits(), b.to_bits());
        assert!((0.0..=0.4).contains(&a));
    }

    #[test]
    fn concave_quadratic_peak() {
        let b = Bounds::new(vec![-1.0, 0.0, 2.0], vec![1.0, 5.0, 3.0]).unwrap();
        let c = [0.3, 1.7, 2.9];
        let cfg = AcquisitionConfig { restarts: 4, local_steps: 40, ..Default::default() };
        let x = optimize_acquisition(
            |x| -x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            &b,
            &cfg,
        )
        .unwrap();
        for (xi, ci) in x.iter().zip(&c) {
            assert!((xi - ci).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_surface_returns_in_bounds() {
        let b = Bounds::cube(2, 0.0, 1.0).unwrap();
        let x = optimize_acquisition(|_| 1.0, &b, &AcquisitionConfig::default()).unwrap();
        assert!(b.contains(&x));
    }

    #[test]
    fn non_finite_surface_errors() {
        let b = Bounds::cube(2, 0.0, 1.0).unwrap();
        let r = optimize_acquisition(|_| f64::NAN, &b, &AcquisitionConfig::default());
        assert!(matches!(r, Err(Error::Numerical(_))));
        // partially non-finite is fine
        let x = optimize_acquisition(
            |x| if x[0] < 0.5 { f64::NAN } else { -x[1] },
            &b,
            &AcquisitionConfig::default(),
        )
        .unwrap();
        assert!(x[0] >= 0.5);
    }

    #[test]
    fn halton_is_seeded() {
        assert_eq!(shifted_halton(3, 5, 1), shifted_halton(3, 5, 1));
        assert_ne!(shifted_halton(3, 5, 1), shifted_halton(3, 5, 2));
    }
}
