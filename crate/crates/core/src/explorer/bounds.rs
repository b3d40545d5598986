use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error model and discrepancy witnesses for the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub eps_rel: f64,
    pub eps_abs: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// `1 - eps_rel * eta2 / eta1`.
    pub gamma: f64,
    /// `eps_abs * eta2 / gamma`.
    pub r_eps: f64,
}

impl ConvergenceParams {
    pub fn new(eps_rel: f64, eps_abs: f64, eta1: f64, eta2: f64) -> Result<Self> {
        if !(eps_rel >= 0.0 && eps_abs >= 0.0) || !(eta1 > 0.0 && eta2 >= eta1) {
            return Err(Error::input("need eps >= 0 and 0 < eta1 <= eta2"));
        }
        let gamma = 1.0 - eps_rel * eta2 / eta1;
        if !(gamma > 0.0) {
            return Err(Error::input(format!("gamma = {gamma} is not positive; eps_rel is too large")));
        }
        Ok(Self { eps_rel, eps_abs, eta1, eta2, gamma, r_eps: eps_abs * eta2 / gamma })
    }

    /// Parameters given directly by `gamma` and `r_eps`.
    pub fn from_gamma(gamma: f64, r_eps: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) || !(r_eps >= 0.0) {
            return Err(Error::input("need gamma in (0, 1] and r_eps >= 0"));
        }
        Ok(Self { eps_rel: f64::NAN, eps_abs: f64::NAN, eta1: f64::NAN, eta2: f64::NAN, gamma, r_eps })
    }

    /// An error-free approximator.
    pub fn exact() -> Self {
        Self { eps_rel: 0.0, eps_abs: 0.0, eta1: 1.0, eta2: 1.0, gamma: 1.0, r_eps: 0.0 }
    }
}

fn contraction(s: f64, p: usize, cp: &ConvergenceParams) -> Result<f64> {
    let rate = s * p as f64 * cp.gamma;
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::input(format!("s*p*gamma = {rate} must lie in (0, 1]")));
    }
    Ok(1.0 - rate)
}

/// Distance bound after `k` corrections: `(1 - s p gamma)^k d_init + r_eps / s`.
pub fn convergence_bound(d_init: f64, s: f64, p: usize, cp: &ConvergenceParams, k: usize) -> Result<f64> {
    let c = contraction(s, p, cp)?;
    Ok(c.powi(k as i32) * d_init + cp.r_eps / s)
}

/// Smallest `k` whose bound is at most `delta`.
pub fn k_star(d_init: f64, delta: f64, s: f64, p: usize, cp: &ConvergenceParams) -> Result<usize> {
    let floor = cp.r_eps / s;
    if delta <= floor {
        return Err(Error::NoTerminationGuarantee { delta, floor });
    }
    let c = contraction(s, p, cp)?;
    let target = (delta - floor) / d_init;
    if target >= 1.0 {
        return Ok(0);
    }
    if c == 0.0 {
        return Ok(1);
    }
    Ok((target.ln() / c.ln()).ceil() as usize)
}
