//! Shared data types: kernel hyperparameters, observations and the search box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the squared-exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, length_scale: f64, noise_variance: f64) -> Result<Self> {
        let p = KernelParams {
            signal_variance,
            length_scale,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.signal_variance.is_finite()
            && self.length_scale.is_finite()
            && self.noise_variance.is_finite();
        if !finite || self.signal_variance <= 0.0 || self.length_scale <= 0.0 {
            return Err(Error::invalid(format!(
                "kernel parameters must be finite with positive signal variance and length-scale, got {self:?}"
            )));
        }
        if self.noise_variance < 0.0 {
            return Err(Error::invalid(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// Copy with the noise term zeroed, as used for a latent-function prior.
    pub fn noise_free(&self) -> Self {
        KernelParams {
            noise_variance: 0.0,
            ..*self
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-sq / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// `σ_f² · exp(−‖a−b‖² / 2θ²)`. Observation noise is not part of this value;
/// it only enters on the Gram diagonal.
pub fn kernel_eval(params: &KernelParams, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "kernel arguments have different dimensions ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(params.eval_unchecked(a, b))
}

/// Noise-free Gram matrix `K(X, X)`.
pub fn gram_matrix(params: &KernelParams, xs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.signal_variance;
        for j in 0..i {
            let v = params.eval_unchecked(&xs[i], &xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance vector `K(X, x*)`.
pub fn cross_cov(params: &KernelParams, xs: &[Vec<f64>], x_star: &[f64]) -> DVector<f64> {
    DVector::from_iterator(xs.len(), xs.iter().map(|x| params.eval_unchecked(x, x_star)))
}

/// A design point with a binomial outcome: `successes` out of `trials`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub successes: u32,
    pub trials: u32,
}

impl Observation {
    pub fn new(x: Vec<f64>, successes: u32, trials: u32) -> Result<Self> {
        if trials == 0 {
            return Err(Error::invalid("trial count must be at least 1"));
        }
        if successes > trials {
            return Err(Error::invalid(format!(
                "successes ({successes}) exceed trials ({trials})"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation coordinates must be finite"));
        }
        Ok(Observation {
            x,
            successes,
            trials,
        })
    }

    pub fn fraction(&self) -> f64 {
        f64::from(self.successes) / f64::from(self.trials)
    }
}

/// Ordered collection of observations sharing one input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    points: Vec<Observation>,
}

impl Dataset {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        Ok(Dataset {
            dim,
            points: Vec::new(),
        })
    }

    pub fn from_observations(dim: usize, points: Vec<Observation>) -> Result<Self> {
        let mut d = Dataset::new(dim)?;
        for p in points {
            d.push(p)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if obs.x.len() != self.dim {
            return Err(Error::invalid(format!(
                "observation has dimension {}, dataset expects {}",
                obs.x.len(),
                self.dim
            )));
        }
        if obs.trials == 0 || obs.successes > obs.trials {
            return Err(Error::invalid("observation counts violate 0 <= y <= N, N >= 1"));
        }
        self.points.push(obs);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }

    pub fn xs(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.x.clone()).collect()
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.points.iter().map(Observation::fraction).collect()
    }

    /// Index of the first observation whose location is within `tol`
    /// (Euclidean) of `x`.
    pub fn find_near(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.points.iter().position(|p| {
            p.x.iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                <= tol
        })
    }

    /// Adds extra draws to an existing observation.
    pub fn merge_into(&mut self, index: usize, successes: u32, trials: u32) -> Result<()> {
        let p = self
            .points
            .get_mut(index)
            .ok_or_else(|| Error::invalid(format!("no observation at index {index}")))?;
        if successes > trials {
            return Err(Error::invalid("merged successes exceed merged trials"));
        }
        p.successes += successes;
        p.trials += trials;
        Ok(())
    }

    pub fn with_flipped_labels(&self) -> Dataset {
        Dataset {
            dim: self.dim,
            points: self
                .points
                .iter()
                .map(|p| Observation {
                    x: p.x.clone(),
                    successes: p.trials - p.successes,
                    trials: p.trials,
                })
                .collect(),
        }
    }
}

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("bounds need matching, non-empty lower/upper"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::invalid(format!(
                    "bounds are degenerate on axis {i}: [{l}, {u}]"
                )));
            }
        }
        Ok(Bounds { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Bounds::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.width(i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, t)| self.lower[i] + t * self.width(i))
            .collect()
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has dimension {}, box has {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.contains(x) {
            return Err(Error::invalid(format!("point {x:?} lies outside the box")));
        }
        Ok(())
    }
}
