//! Hyperparameter selection for both surrogates by multi-start pattern
//! search on the (approximate) log evidence, in log-parameter space.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binomial::{laplace_fit_warm, LaplaceModel};
use crate::error::{Error, Result};
use crate::gaussian::{gp_fit, GPModel};
use crate::kernel::{Dataset, KernelParams};

pub const SIGNAL_VARIANCE_RANGE: (f64, f64) = (1e-4, 10.0);
pub const LENGTH_SCALE_RANGE: (f64, f64) = (1e-2, 1.0); // times the box diameter
pub const NOISE_VARIANCE_RANGE: (f64, f64) = (1e-8, 1.0);

/// Budget of the multi-start search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperSearch {
    pub starts: usize,
    /// Objective evaluations spent by the pattern search from each start.
    pub evals_per_start: usize,
    pub seed: u64,
}

impl Default for HyperSearch {
    fn default() -> Self {
        HyperSearch {
            starts: 8,
            evals_per_start: 24,
            seed: 0,
        }
    }
}

struct LogBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LogBox {
    fn new(ranges: &[(f64, f64)]) -> Self {
        LogBox {
            lo: ranges.iter().map(|r| r.0.ln()).collect(),
            hi: ranges.iter().map(|r| r.1.ln()).collect(),
        }
    }

    fn clamp(&self, z: &mut [f64]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    fn starts(&self, warm: Option<Vec<f64>>, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let first = warm.unwrap_or_else(|| {
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| 0.5 * (l + h))
                .collect()
        });
        out.push(first);
        while out.len() < count {
            out.push(
                self.lo
                    .iter()
                    .zip(&self.hi)
                    .map(|(l, h)| rng.random_range(*l..=*h))
                    .collect(),
            );
        }
        for z in &mut out {
            self.clamp(z);
        }
        out
    }
}

/// Maximizes `objective` from each start by compass search with step
/// halving. Returns the best point and value, ties going to the earliest.
fn multistart_max<F>(bx: &LogBox, starts: &[Vec<f64>], budget: usize, mut objective: F) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let Some(mut value) = objective(start) else {
            continue;
        };
        let mut z = start.clone();
        let mut steps: Vec<f64> = bx.lo.iter().zip(&bx.hi).map(|(l, h)| 0.25 * (h - l)).collect();
        let mut used = 1;
        'search: while used < budget {
            let mut improved = false;
            for axis in 0..z.len() {
                for sign in [1.0, -1.0] {
                    if used >= budget {
                        break 'search;
                    }
                    let mut cand = z.clone();
                    cand[axis] += sign * steps[axis];
                    bx.clamp(&mut cand);
                    if cand[axis] == z[axis] {
                        continue;
                    }
                    used += 1;
                    if let Some(v) = objective(&cand) {
                        if v > value {
                            value = v;
                            z = cand;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                for s in &mut steps {
                    *s *= 0.5;
                }
                if steps.iter().all(|s| *s < 1e-3) {
                    break;
                }
            }
        }
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((z, value));
        }
    }
    best
}

fn gaussian_params(z: &[f64]) -> KernelParams {
    KernelParams {
        signal_variance: z[0].exp(),
        length_scale: z[1].exp(),
        noise_variance: z[2].exp(),
    }
}

/// Fits a Gaussian GP to `targets`, choosing hyperparameters that maximize
/// the log marginal likelihood.
pub fn fit_gaussian(
    data: &Dataset,
    targets: &[f64],
    diameter: f64,
    search: &HyperSearch,
    warm: Option<&KernelParams>,
) -> Result<GPModel> {
    let bx = LogBox::new(&[
        SIGNAL_VARIANCE_RANGE,
        (LENGTH_SCALE_RANGE.0 * diameter, LENGTH_SCALE_RANGE.1 * diameter),
        NOISE_VARIANCE_RANGE,
    ]);
    let warm = warm.map(|p| {
        vec![
            p.signal_variance.ln(),
            p.length_scale.ln(),
            p.noise_variance.max(NOISE_VARIANCE_RANGE.0).ln(),
        ]
    });
    let starts = bx.starts(warm, search.starts.max(1), search.seed);
    let (z, _) = multistart_max(&bx, &starts, search.evals_per_start.max(1), |z| {
        gp_fit(data, &gaussian_params(z), targets)
            .ok()
            .map(|m| m.log_marginal())
            .filter(|v| v.is_finite())
    })
    .ok_or_else(|| {
        Error::Numerical("no hyperparameter candidate produced a finite Gaussian evidence".into())
    })?;
    gp_fit(data, &gaussian_params(&z), targets)
}

fn latent_params(z: &[f64]) -> KernelParams {
    KernelParams {
        signal_variance: z[0].exp(),
        length_scale: z[1].exp(),
        noise_variance: 0.0,
    }
}

/// Fits the Laplace binomial GP, choosing hyperparameters that maximize the
/// Laplace evidence. `warm` carries the previous fit's parameters and
/// `K⁻¹f̂`; a shorter vector is zero-padded to the current data size.
pub fn fit_laplace(
    data: &Dataset,
    diameter: f64,
    search: &HyperSearch,
    warm: Option<(&KernelParams, &DVector<f64>)>,
) -> Result<LaplaceModel> {
    let bx = LogBox::new(&[
        SIGNAL_VARIANCE_RANGE,
        (LENGTH_SCALE_RANGE.0 * diameter, LENGTH_SCALE_RANGE.1 * diameter),
    ]);
    let n = data.len();
    let mut alpha = DVector::zeros(n);
    if let Some((_, a)) = warm {
        for i in 0..a.len().min(n) {
            alpha[i] = a[i];
        }
    }
    let warm_z = warm.map(|(p, _)| vec![p.signal_variance.ln(), p.length_scale.ln()]);
    let starts = bx.starts(warm_z, search.starts.max(1), search.seed);
    let best = multistart_max(&bx, &starts, search.evals_per_start.max(1), |z| {
        let m = laplace_fit_warm(data, &latent_params(z), Some(&alpha)).ok()?;
        if !m.converged() {
            return None;
        }
        let v = m.log_marginal().ok().filter(|v| v.is_finite())?;
        alpha = m.alpha().clone();
        Some(v)
    });
    match best {
        Some((z, _)) => laplace_fit_warm(data, &latent_params(&z), Some(&alpha)),
        // every candidate failed; hand back the unconverged fit so the caller
        // sees the diagnostic
        None => laplace_fit_warm(data, &latent_params(&starts[0]), None),
    }
}
