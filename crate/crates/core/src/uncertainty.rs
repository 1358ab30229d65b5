//! Sample-count planning: averaging `N` independent measurements divides the
//! noise standard deviation by `sqrt(N)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviation left after averaging `n` measurements.
pub fn effective_sigma(sigma: f64, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    Ok(sigma / (n as f64).sqrt())
}

/// Smallest `N` with `sigma / sqrt(N) <= sigma_crit` (at least 1).
pub fn required_samples(sigma: f64, sigma_crit: f64) -> Result<usize> {
    if !(sigma_crit > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "critical sigma must be positive, got {sigma_crit}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be finite and non-negative, got {sigma}"
        )));
    }
    let ratio = sigma / sigma_crit;
    let mut n = (ratio * ratio).ceil().max(1.0) as usize;
    // ceil of a rounded square can land one short or one long
    while n > 1 && sigma / ((n - 1) as f64).sqrt() <= sigma_crit {
        n -= 1;
    }
    while sigma / (n as f64).sqrt() > sigma_crit {
        n += 1;
    }
    Ok(n)
}

/// Step size of the equivalent plain SGD, `eta / beta`.
pub fn effective_lr(eta: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    Ok(eta / beta)
}

/// A physical noise level, the sampling it needs, and what that sampling
/// achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyPlan {
    pub sigma_phys: f64,
    pub n_samples: usize,
    pub sigma_act: f64,
    pub sigma_crit: f64,
}

impl UncertaintyPlan {
    pub fn new(sigma_phys: f64, sigma_crit: f64) -> Result<Self> {
        let n_samples = required_samples(sigma_phys, sigma_crit)?;
        Ok(Self {
            sigma_phys,
            n_samples,
            sigma_act: effective_sigma(sigma_phys, n_samples)?,
            sigma_crit,
        })
    }
}
