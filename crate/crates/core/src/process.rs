//! The Gaussian Markov driver: closed-form variance, autocovariance and decay
//! weights of the mean-reverting process dx = -gamma*x dt + sigma dW started
//! at x(0) = 0, plus the log-normal moment identity for occupation-weighted
//! exponentials that underpins the explicit bond solution.

use crate::error::{Error, Result};
use crate::math::em1_over;

/// Below this value of gamma * t_n a model is routed through the exact
/// zero-mean-reversion formulas (coefficient recursion, unit decay weights).
pub const GAMMA_ZERO_THRESHOLD: f64 = 1e-12;

/// Volatility and mean-reversion rate of the driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessSpec {
    pub sigma: f64,
    pub gamma: f64,
}

impl ProcessSpec {
    pub fn new(sigma: f64, gamma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma}, must be >= 0")));
        }
        if !(gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma}, must be >= 0")));
        }
        Ok(ProcessSpec { sigma, gamma })
    }

    /// Whether the model is in the exact zero-mean-reversion regime out to
    /// horizon `t_max`.
    pub fn gamma_is_zero(&self, t_max: f64) -> bool {
        self.gamma * t_max < GAMMA_ZERO_THRESHOLD
    }
}

/// Uniform tenor grid t_i = i * tau for i = 0..=n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TenorGrid {
    pub n: usize,
    pub tau: f64,
}

impl TenorGrid {
    pub fn new(n: usize, tau: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter(format!("n = {n}, need at least one period")));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau = {tau}, must be > 0")));
        }
        Ok(TenorGrid { n, tau })
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n)
    }
}

/// Variance G(t) = sigma^2/(2 gamma) (1 - e^{-2 gamma t}), continuous through
/// gamma = 0 where it equals sigma^2 t.
pub fn variance_g(spec: &ProcessSpec, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    Ok(spec.sigma * spec.sigma * t * em1_over(2.0 * spec.gamma * t))
}

/// Autocovariance X(t1,t2) = sigma^2/(2 gamma) (e^{-gamma|t1-t2|} - e^{-gamma(t1+t2)}).
/// Evaluated as e^{-gamma|t1-t2|} G(min(t1,t2)), which is exact at gamma = 0
/// (sigma^2 min(t1,t2)) with no cancellation for small gamma.
pub fn covariance_x(spec: &ProcessSpec, t1: f64, t2: f64) -> Result<f64> {
    if t1 < 0.0 {
        return Err(Error::NegativeTime(t1));
    }
    if t2 < 0.0 {
        return Err(Error::NegativeTime(t2));
    }
    let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
    Ok((-spec.gamma * (hi - lo)).exp() * variance_g(spec, lo)?)
}

/// w^steps with w = e^{-gamma tau}; 1 at gamma = 0 or steps = 0.
pub fn decay_weight(spec: &ProcessSpec, tau: f64, steps: usize) -> f64 {
    (-spec.gamma * tau * steps as f64).exp()
}

/// Conditional transition mean of the driver over a step dt from state x.
pub fn transition_mean(spec: &ProcessSpec, x: f64, dt: f64) -> f64 {
    (-spec.gamma * dt).exp() * x
}

/// Conditional transition variance over a step dt (same closed form as G).
pub fn transition_var(spec: &ProcessSpec, dt: f64) -> Result<f64> {
    variance_g(spec, dt)
}

/// Log of E[ prod_k exp(n_k (x_k - G_k/2)) | x(t) = x_t ] for a 0/1 occupation
/// vector over grid dates strictly after the conditioning time:
///
///   x_t S - G(t) S^2 / 2 + (1/2) sum_{j != k} X_{jk} n_j n_k,
///
/// with S = sum_k n_k e^{-gamma (t_k - t)} and X the unconditional
/// autocovariance. This is the conditional-covariance form rewritten using
/// n^2 = n; at t = 0 it reduces to the unconditional identity
/// exp((1/2) sum_{j != k} X_{jk} n_j n_k).
pub fn gaussian_moment_identity(
    spec: &ProcessSpec,
    grid: &TenorGrid,
    occupations: &[u8],
    condition_time: f64,
    condition_state: f64,
) -> Result<f64> {
    if condition_time < 0.0 {
        return Err(Error::NegativeTime(condition_time));
    }
    if occupations.len() != grid.n + 1 {
        return Err(Error::InvalidParameter(format!(
            "occupation vector has {} entries for a grid with {} dates",
            occupations.len(),
            grid.n + 1
        )));
    }
    let mut occupied = Vec::new();
    for (k, &nk) in occupations.iter().enumerate() {
        match nk {
            0 => {}
            1 => {
                if grid.time(k) <= condition_time {
                    return Err(Error::InvalidParameter(format!(
                        "occupied date t_{k} = {} is not strictly after the conditioning time {}",
                        grid.time(k),
                        condition_time
                    )));
                }
                occupied.push(k);
            }
            v => return Err(Error::InvalidOccupation { site: k, value: v }),
        }
    }
    let s: f64 = occupied
        .iter()
        .map(|&k| (-spec.gamma * (grid.time(k) - condition_time)).exp())
        .sum();
    let g_t = variance_g(spec, condition_time)?;
    let mut pairs = 0.0;
    for (a, &j) in occupied.iter().enumerate() {
        for &k in &occupied[a + 1..] {
            pairs += covariance_x(spec, grid.time(j), grid.time(k))?;
        }
    }
    Ok(condition_state * s - 0.5 * g_t * s * s + pairs)
}
