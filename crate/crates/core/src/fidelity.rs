//! Two-fidelity continuation rule.
//!
//! A point is first evaluated with `n_low` trials. Under a uniform prior the
//! success probability then has a `Beta(1 + y_low, 1 + n_low − y_low)`
//! posterior, and the probability that it beats the incumbent is that Beta
//! CDF evaluated at `y_min`. The point is topped up to `n_high` trials when
//! that probability reaches the threshold `lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::reg_inc_beta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityConfig {
    pub n_low: u32,
    pub n_high: u32,
    pub lambda: f64,
}

impl FidelityConfig {
    pub fn new(n_low: u32, n_high: u32, lambda: f64) -> Result<Self> {
        let cfg = FidelityConfig {
            n_low,
            n_high,
            lambda,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n_high` trials with `n_low = n_high / 2`.
    pub fn halved(n_high: u32, lambda: f64) -> Result<Self> {
        FidelityConfig::new(n_high / 2, n_high, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_low == 0 || self.n_low >= self.n_high {
            return Err(Error::invalid(format!(
                "fidelities must satisfy 0 < n_low < n_high (got {} and {})",
                self.n_low, self.n_high
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::invalid(format!(
                "threshold lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Posterior of a success probability after `y_low` successes in `n_low`
/// trials, starting from a uniform prior.
pub fn beta_posterior(y_low: u32, n_low: u32) -> Result<BetaParams> {
    if y_low > n_low {
        return Err(Error::invalid(format!(
            "low-fidelity successes ({y_low}) exceed trials ({n_low})"
        )));
    }
    Ok(BetaParams {
        alpha: 1.0 + f64::from(y_low),
        beta: 1.0 + f64::from(n_low - y_low),
    })
}

/// `P(X ≤ t)` for `X ~ Beta(alpha, beta)`.
pub fn beta_cdf(p: &BetaParams, t: f64) -> Result<f64> {
    reg_inc_beta(p.alpha, p.beta, t)
}

/// Probability that the point's success rate is below `y_min`.
pub fn improvement_probability(y_low: u32, n_low: u32, y_min: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y_min) {
        return Err(Error::invalid(format!("incumbent {y_min} is outside [0, 1]")));
    }
    beta_cdf(&beta_posterior(y_low, n_low)?, y_min)
}

/// `true` when the high-fidelity top-up should be paid for.
pub fn decide_continue(y_low: u32, cfg: &FidelityConfig, y_min: f64) -> Result<bool> {
    Ok(improvement_probability(y_low, cfg.n_low, y_min)? >= cfg.lambda)
}
