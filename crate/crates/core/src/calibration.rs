//! Terminal-measure calibration and post-calibration analytics.
//!
//! Calibration bootstraps the convexity-adjusted Libors L~_i backward from
//! the final period: each L~_i is the input forward discounted by the
//! convexity factor N_i(1), which only involves already-calibrated dates
//! t_{i+1}..t_{n-1}. The construction telescopes, so the zero-coupon curve
//! is reproduced by design and the i-th step needs one partition evaluation.
//!
//! Two exact evaluation routes are used: Gray-code enumeration of the gas
//! subsystem for gamma > 0 (capped at the enumeration limit), and the
//! cluster-coefficient recursion for gamma = 0, which has no site cap.
//! The sampled engine is deliberately rejected here: a noisy N_i(1) would
//! contaminate every later fugacity, and the stochastic engine is reserved
//! for evaluating expectations on an already-calibrated model.

use crate::bdt::{append_site, bdt_coefficients, bdt_log_n};
use crate::curve::YieldCurve;
use crate::error::{Error, Result};
use crate::exec;
use crate::gas::{
    build_subsystem, enumerate_log_partition_with_cap, GasSubsystem, Method, PartitionValue,
    DEFAULT_ENUMERATION_CAP,
};
use crate::process::{decay_weight, variance_g, ProcessSpec, TenorGrid};
use crate::sampler::{estimate_lnz_thermodynamic, ChainConfig, CouplingPath};

/// Evaluation backend for partition sums.
#[derive(Debug, Clone)]
pub enum Engine {
    /// Gray-code enumeration, rejected above `cap` sites.
    Exact { cap: usize },
    /// Metropolis chains with thermodynamic integration over `lambda_nodes`
    /// Gauss-Legendre coupling nodes.
    Sampled { chains: ChainConfig, lambda_nodes: usize },
}

impl Default for Engine {
    fn default() -> Self {
        Engine::Exact { cap: DEFAULT_ENUMERATION_CAP }
    }
}

/// Result of the backward bootstrap. Dates below `lowest` are left
/// uncalibrated when a partial bootstrap was requested; accessors guard
/// against touching them.
#[derive(Debug, Clone)]
pub struct CalibratedModel {
    grid: TenorGrid,
    spec: ProcessSpec,
    curve: YieldCurve,
    libors: Vec<f64>,
    ln_libors: Vec<f64>,
    ln_n1s: Vec<f64>,
    lowest: usize,
}

impl CalibratedModel {
    pub fn grid(&self) -> &TenorGrid {
        &self.grid
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn curve(&self) -> &YieldCurve {
        &self.curve
    }

    /// Smallest calibrated period index (0 after a full bootstrap).
    pub fn lowest_calibrated(&self) -> usize {
        self.lowest
    }

    fn check(&self, i: usize, need: usize) -> Result<()> {
        if i >= self.grid.n {
            return Err(Error::IndexOutOfRange { index: i, what: "tenor grid".into() });
        }
        if need < self.lowest {
            return Err(Error::NotCalibrated { index: i, lowest: self.lowest });
        }
        Ok(())
    }

    /// Convexity-adjusted Libor L~_i.
    pub fn libor(&self, i: usize) -> Result<f64> {
        self.check(i, i)?;
        Ok(self.libors[i])
    }

    pub fn ln_libor(&self, i: usize) -> Result<f64> {
        self.check(i, i)?;
        Ok(self.ln_libors[i])
    }

    /// ln N_i(1) as produced during the bootstrap. Reusing the stored value
    /// makes the first Libor moment reproduce the input forward exactly.
    pub fn ln_n1(&self, i: usize) -> Result<f64> {
        self.check(i, i)?;
        Ok(self.ln_n1s[i])
    }

    /// Adjusted Libors for the dates after t_i, in natural units.
    pub fn tail_libors(&self, i: usize) -> Result<Vec<f64>> {
        self.check(i, i + 1)?;
        Ok(self.libors[i + 1..].to_vec())
    }

    /// Gas subsystem anchored at period i. Only needs the tail, so it is
    /// available one index below the calibrated range.
    pub fn subsystem(&self, i: usize) -> Result<GasSubsystem> {
        self.check(i, i + 1)?;
        build_subsystem(&self.libors[i + 1..], &self.grid, &self.spec, i)
    }
}

/// Full backward bootstrap over all periods.
pub fn calibrate(
    grid: &TenorGrid,
    spec: &ProcessSpec,
    curve: &YieldCurve,
    engine: &Engine,
) -> Result<CalibratedModel> {
    calibrate_down_to(grid, spec, curve, engine, 0)
}

/// Bootstrap the periods `lowest..n` only. The partition sum at anchor i
/// involves m = n - 1 - i sites, so a partial bootstrap keeps long grids
/// inside the enumeration cap when only the tail is needed.
pub fn calibrate_down_to(
    grid: &TenorGrid,
    spec: &ProcessSpec,
    curve: &YieldCurve,
    engine: &Engine,
    lowest: usize,
) -> Result<CalibratedModel> {
    if curve.periods() != grid.n {
        return Err(Error::InvalidParameter(format!(
            "curve has {} accrual periods, grid has {}",
            curve.periods(),
            grid.n
        )));
    }
    if lowest >= grid.n {
        return Err(Error::IndexOutOfRange { index: lowest, what: "tenor grid".into() });
    }
    let cap = match engine {
        Engine::Exact { cap } => *cap,
        Engine::Sampled { .. } => return Err(Error::SampledCalibration),
    };
    let n = grid.n;
    let tau = grid.tau;
    let zero_gamma = spec.gamma_is_zero(grid.horizon());
    let mut libors = vec![f64::NAN; n];
    let mut ln_libors = vec![f64::NAN; n];
    let mut ln_n1s = vec![f64::NAN; n];
    // Cluster coefficients of the tail gas, grown one site per step on the
    // gamma = 0 route.
    let mut ln_c = vec![0.0f64];
    for i in (lowest..n).rev() {
        let fwd = curve.forward(i, tau);
        if !(fwd > 0.0) {
            return Err(Error::NonpositiveForward { index: i, value: fwd });
        }
        let ln_n1 = if zero_gamma {
            bdt_log_n(&ln_c, spec, grid, i, 1.0)
        } else {
            let m = n - 1 - i;
            if m > cap {
                return Err(Error::EnumerationCapExceeded { m, cap });
            }
            let sub = build_subsystem(&libors[i + 1..], grid, spec, i)?;
            enumerate_log_partition_with_cap(&sub, 1.0, cap)?.log_value
        };
        if !ln_n1.is_finite() {
            return Err(Error::NonfiniteN { index: i });
        }
        let ln_libor = curve.ln_phat(i + 1) + fwd.ln() - ln_n1;
        if !ln_libor.is_finite() {
            return Err(Error::NonfiniteN { index: i });
        }
        ln_n1s[i] = ln_n1;
        ln_libors[i] = ln_libor;
        libors[i] = ln_libor.exp();
        if zero_gamma && i > lowest {
            let s2t = spec.sigma * spec.sigma * grid.time(i);
            ln_c = append_site(&ln_c, ln_libor + tau.ln(), s2t);
        }
    }
    Ok(CalibratedModel {
        grid: *grid,
        spec: *spec,
        curve: curve.clone(),
        libors,
        ln_libors,
        ln_n1s,
        lowest,
    })
}

/// Exact ln N_i(phi), routed through the recursion at gamma = 0 and through
/// enumeration otherwise.
fn exact_log_n(model: &CalibratedModel, i: usize, phi: f64, cap: usize) -> Result<f64> {
    if model.spec.gamma_is_zero(model.grid.horizon()) {
        let tail = model.tail_libors(i)?;
        let ln_c = bdt_coefficients(&tail, &model.grid, &model.spec, i)?;
        Ok(bdt_log_n(&ln_c, &model.spec, &model.grid, i, phi))
    } else {
        let sub = model.subsystem(i)?;
        Ok(enumerate_log_partition_with_cap(&sub, phi, cap)?.log_value)
    }
}

/// ln N_i(phi) = ln E[e^{phi x_i - phi^2 G_i / 2} P^_{i,i+1}] under the
/// selected engine.
pub fn convexity_expectation_n(
    model: &CalibratedModel,
    i: usize,
    phi: f64,
    engine: &Engine,
) -> Result<PartitionValue> {
    match engine {
        Engine::Exact { cap } => Ok(PartitionValue {
            log_value: exact_log_n(model, i, phi, *cap)?,
            method: Method::Exact,
            stderr: 0.0,
        }),
        Engine::Sampled { chains, lambda_nodes } => {
            let sub = model.subsystem(i)?;
            let path = CouplingPath::gauss_legendre(*lambda_nodes)?;
            estimate_lnz_thermodynamic(&sub, phi, &path, chains)
        }
    }
}

/// j-th moment E[L_i^j] of the terminal-measure Libor. The j = 1 case reuses
/// the stored ln N_i(1) and therefore reproduces the input forward exactly.
pub fn libor_moment(model: &CalibratedModel, i: usize, j: u32) -> Result<f64> {
    model.check(i, i)?;
    let jf = f64::from(j);
    let g_i = variance_g(&model.spec, model.grid.time(i))?;
    let ln_n = if j == 1 {
        model.ln_n1s[i]
    } else {
        exact_log_n(model, i, jf, DEFAULT_ENUMERATION_CAP)?
    };
    let ln_m = -model.curve.ln_phat(i + 1)
        + jf * model.ln_libors[i]
        + 0.5 * (jf * jf - jf) * g_i
        + ln_n;
    if !(ln_m < f64::MAX.ln()) {
        return Err(Error::MomentOverflow { log_value: ln_m });
    }
    Ok(ln_m.exp())
}

/// Implied at-the-money lognormal volatility sqrt(G_i / t_i) for the caplet
/// on period i. Undefined at i = 0 where the fixing time is zero.
pub fn atm_lognormal_vol(model: &CalibratedModel, i: usize) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidParameter(
            "period 0 fixes at t = 0 and has no implied volatility".into(),
        ));
    }
    model.check(i, i)?;
    let t_i = model.grid.time(i);
    Ok((variance_g(&model.spec, t_i)? / t_i).sqrt())
}

/// First-order expansion of N_i(phi) in the tail Libors:
/// 1 + sum_{j>i} L_j^fwd tau e^{phi w^{j-i} G_i}. Useful as a sanity scale at
/// small volatility; the quadratic-in-L terms it drops are O((L tau)^2 m^2 / 2)
/// and dominate its error long before the couplings matter.
pub fn linearized_n(
    grid: &TenorGrid,
    spec: &ProcessSpec,
    curve: &YieldCurve,
    i: usize,
    phi: f64,
) -> Result<f64> {
    if curve.periods() != grid.n {
        return Err(Error::InvalidParameter(format!(
            "curve has {} accrual periods, grid has {}",
            curve.periods(),
            grid.n
        )));
    }
    if i >= grid.n {
        return Err(Error::IndexOutOfRange { index: i, what: "tenor grid".into() });
    }
    let g_i = variance_g(spec, grid.time(i))?;
    let mut sum = 1.0;
    for j in i + 1..grid.n {
        let fwd = curve.forward(j, grid.tau);
        let w = decay_weight(spec, grid.tau, j - i);
        sum += fwd * grid.tau * (phi * w * g_i).exp();
    }
    Ok(sum)
}

/// Location of a detected convexity explosion on a volatility grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalVol {
    /// Grid point with the sharpest upward curvature.
    pub sigma_cr: f64,
    /// Grid resolution; the detection cannot localize better than one step.
    pub uncertainty: f64,
    /// Peak second difference of ln N over the grid.
    pub peak_curvature: f64,
    /// Median absolute second difference away from the peak scale.
    pub median_curvature: f64,
}

fn uniform_step(sigmas: &[f64]) -> Result<f64> {
    if sigmas.len() < 20 {
        return Err(Error::InvalidParameter(format!(
            "volatility grid has {} points, need at least 20 to resolve a kink",
            sigmas.len()
        )));
    }
    let step = sigmas[1] - sigmas[0];
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("volatility grid must be increasing".into()));
    }
    for k in 1..sigmas.len() {
        let d = sigmas[k] - sigmas[k - 1];
        if (d - step).abs() > 1e-6 * step.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "volatility grid is not uniform near index {k}"
            )));
        }
    }
    Ok(step)
}

/// Locate the volatility where ln N(sigma) turns from flat to explosive.
///
/// The discrete curvature D_k = y_{k+1} - 2 y_k + y_{k-1} is computed on the
/// uniform grid; a transition is reported at the curvature peak when the peak
/// is positive and at least ten times the median |D| (a smooth curve keeps
/// that ratio small, a kink concentrates curvature in one cell). Failing the
/// separation test returns [`Error::NoTransition`].
pub fn detect_critical_volatility(sigmas: &[f64], ln_n: &[f64]) -> Result<CriticalVol> {
    if sigmas.len() != ln_n.len() {
        return Err(Error::InvalidParameter(format!(
            "{} grid points but {} values",
            sigmas.len(),
            ln_n.len()
        )));
    }
    let step = uniform_step(sigmas)?;
    if ln_n.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidParameter("convexity values must be finite".into()));
    }
    let d: Vec<f64> = (1..ln_n.len() - 1)
        .map(|k| ln_n[k + 1] - 2.0 * ln_n[k] + ln_n[k - 1])
        .collect();
    let mut abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let median = abs[abs.len() / 2];
    let (kmax, &peak) = d
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least 18 curvature cells");
    if !(peak > 0.0) || peak < 10.0 * median {
        return Err(Error::NoTransition);
    }
    Ok(CriticalVol {
        sigma_cr: sigmas[kmax + 1],
        uncertainty: step,
        peak_curvature: peak,
        median_curvature: median,
    })
}

/// Calibrate at every sigma on the grid, evaluate ln N_index(1), and locate
/// the transition. Calibration is truncated at `index`: nothing below the
/// anchor period affects its convexity factor.
pub fn critical_volatility(
    grid: &TenorGrid,
    gamma: f64,
    curve: &YieldCurve,
    index: usize,
    sigmas: &[f64],
    engine: &Engine,
) -> Result<CriticalVol> {
    if index >= grid.n {
        return Err(Error::IndexOutOfRange { index, what: "tenor grid".into() });
    }
    uniform_step(sigmas)?;
    let values = exec::map_indexed(sigmas.len(), |k| -> Result<f64> {
        let spec = ProcessSpec::new(sigmas[k], gamma)?;
        let model = calibrate_down_to(grid, &spec, curve, engine, index)?;
        Ok(convexity_expectation_n(&model, index, 1.0, engine)?.log_value)
    });
    let ln_n = values.into_iter().collect::<Result<Vec<f64>>>()?;
    detect_critical_volatility(sigmas, &ln_n)
}
