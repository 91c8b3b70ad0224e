//! Brute-force path simulation of the driving process.
//!
//! This is the verification oracle for the closed-form machinery: bond values
//! and convexity factors are estimated as raw expectations over exact AR(1)
//! paths of the driver, with no reference to the gas solution. Transitions
//! are sampled from the exact conditional law (mean e^{-gamma dt} x, variance
//! G(dt)), so any systematic disagreement implicates the formulas under test
//! rather than discretization error.
//!
//! An optional truncation clips every state to |x(t)| <= c sigma sqrt(t),
//! emulating the bounded state space of a finite-difference grid. Clipping
//! discards the far tail that funds the convexity factor at large volatility,
//! which is exactly the artifact the truncated estimates are meant to exhibit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calibration::CalibratedModel;
use crate::error::{Error, Result};
use crate::exec;
use crate::process::{transition_mean, transition_var, variance_g, ProcessSpec, TenorGrid};

/// Paths per RNG stream; blocks are generated independently and reduced in
/// block order, so results do not depend on the thread count.
const BLOCK: usize = 8192;

/// Driver states at the grid dates t_1..t_n (t_0 = 0 is identically zero),
/// row-major: path p occupies `values[p * steps .. (p + 1) * steps]`.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub count: usize,
    pub steps: usize,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl PathBatch {
    /// State of `path` at date t_k, k in 1..=steps.
    pub fn state(&self, path: usize, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.steps, "date index {k} outside 1..={}", self.steps);
        self.values[path * self.steps + k - 1]
    }
}

/// Mean estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

fn check_truncation(truncation: Option<f64>) -> Result<()> {
    if let Some(c) = truncation {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation multiple must be positive, got {c}"
            )));
        }
    }
    Ok(())
}

/// Per-date clipping bounds c sigma sqrt(t_k) for k = 1..=n, or +inf when no
/// truncation was requested.
fn clip_bounds(spec: &ProcessSpec, grid: &TenorGrid, truncation: Option<f64>) -> Vec<f64> {
    (1..=grid.n)
        .map(|k| match truncation {
            Some(c) => c * spec.sigma * grid.time(k).sqrt(),
            None => f64::INFINITY,
        })
        .collect()
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// Simulate `count` exact AR(1) paths on the grid.
pub fn simulate_paths(
    spec: &ProcessSpec,
    grid: &TenorGrid,
    count: usize,
    seed: u64,
    truncation: Option<f64>,
) -> Result<PathBatch> {
    if count == 0 {
        return Err(Error::InvalidParameter("path count must be at least 1".into()));
    }
    check_truncation(truncation)?;
    let steps = grid.n;
    let sd = transition_var(spec, grid.tau)?.sqrt();
    let bounds = clip_bounds(spec, grid, truncation);
    let blocks = count.div_ceil(BLOCK);
    let chunks = exec::map_indexed(blocks, |b| {
        let lo = b * BLOCK;
        let hi = count.min(lo + BLOCK);
        let mut rng = block_rng(seed, b);
        let mut out = Vec::with_capacity((hi - lo) * steps);
        for _ in lo..hi {
            let mut x = 0.0;
            for &bound in &bounds {
                let z: f64 = rng.sample(StandardNormal);
                x = transition_mean(spec, x, grid.tau) + sd * z;
                x = x.clamp(-bound, bound);
                out.push(x);
            }
        }
        out
    });
    let mut values = Vec::with_capacity(count * steps);
    for chunk in chunks {
        values.extend_from_slice(&chunk);
    }
    Ok(PathBatch { count, steps, values, seed })
}

/// Accumulate (count, sum, sum of squares) over blocks and convert to a mean
/// with standard error. Blocks are folded in index order.
fn pool_blocks(chunks: Vec<(usize, f64, f64)>) -> Result<McEstimate> {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for (c, s, s2) in chunks {
        count += c;
        sum += s;
        sumsq += s2;
    }
    if count < 2 {
        return Err(Error::InvalidParameter(
            "estimates need at least 2 paths for a standard error".into(),
        ));
    }
    let mean = sum / count as f64;
    let var = ((sumsq - count as f64 * mean * mean) / (count as f64 - 1.0)).max(0.0);
    Ok(McEstimate { mean, stderr: (var / count as f64).sqrt(), count })
}

/// Per-site data for evaluating the bond product along a path.
struct BondTerms {
    /// (fugacity L~_k tau, G_k / 2) for k = i+1..n-1.
    terms: Vec<(f64, f64)>,
}

impl BondTerms {
    fn new(model: &CalibratedModel, i: usize) -> Result<Self> {
        let tail = model.tail_libors(i)?;
        let grid = model.grid();
        let terms = tail
            .iter()
            .enumerate()
            .map(|(s, &l)| {
                let g = variance_g(model.spec(), grid.time(i + 1 + s))?;
                Ok((l * grid.tau, 0.5 * g))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }
}

/// Estimate the forward bond value P^_{i,i+1}(x_i) by restarting the process
/// at (t_i, x_i) and averaging the product of period factors along each path.
/// The Markov property makes the restart exact, no bridge weighting needed.
pub fn mc_bond_value(
    model: &CalibratedModel,
    i: usize,
    x_i: f64,
    count: usize,
    seed: u64,
) -> Result<McEstimate> {
    let bond = BondTerms::new(model, i)?;
    let spec = *model.spec();
    let tau = model.grid().tau;
    let sd = transition_var(&spec, tau)?.sqrt();
    let blocks = count.div_ceil(BLOCK);
    let chunks = exec::map_indexed(blocks, |b| {
        let lo = b * BLOCK;
        let hi = count.min(lo + BLOCK);
        let mut rng = block_rng(seed, b);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in lo..hi {
            let mut x = x_i;
            let mut v = 1.0;
            for &(fug, half_g) in &bond.terms {
                let z: f64 = rng.sample(StandardNormal);
                x = transition_mean(&spec, x, tau) + sd * z;
                v *= 1.0 + fug * (x - half_g).exp();
            }
            sum += v;
            sumsq += v * v;
        }
        (hi - lo, sum, sumsq)
    });
    pool_blocks(chunks)
}

/// Estimate N_i(phi) = E[e^{phi x_i - phi^2 G_i / 2} P^_{i,i+1}(x_i)] as a raw
/// expectation over full paths started at x(0) = 0, optionally clipped to the
/// truncated state space.
pub fn mc_convexity_n(
    model: &CalibratedModel,
    i: usize,
    phi: f64,
    count: usize,
    seed: u64,
    truncation: Option<f64>,
) -> Result<McEstimate> {
    check_truncation(truncation)?;
    let bond = BondTerms::new(model, i)?;
    let spec = *model.spec();
    let grid = *model.grid();
    let sd = transition_var(&spec, grid.tau)?.sqrt();
    let bounds = clip_bounds(&spec, &grid, truncation);
    let g_i = variance_g(&spec, grid.time(i))?;
    let anchor_shift = -0.5 * phi * phi * g_i;
    let blocks = count.div_ceil(BLOCK);
    let chunks = exec::map_indexed(blocks, |b| {
        let lo = b * BLOCK;
        let hi = count.min(lo + BLOCK);
        let mut rng = block_rng(seed, b);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in lo..hi {
            let mut x = 0.0;
            let mut x_anchor = 0.0;
            let mut v = 1.0;
            // Dates t_1..t_{n-1}; x_n never enters any payoff.
            for k in 1..grid.n {
                let z: f64 = rng.sample(StandardNormal);
                x = transition_mean(&spec, x, grid.tau) + sd * z;
                x = x.clamp(-bounds[k - 1], bounds[k - 1]);
                if k == i {
                    x_anchor = x;
                }
                if k > i {
                    let (fug, half_g) = bond.terms[k - 1 - i];
                    v *= 1.0 + fug * (x - half_g).exp();
                }
            }
            let val = v * (phi * x_anchor + anchor_shift).exp();
            sum += val;
            sumsq += val * val;
        }
        (hi - lo, sum, sumsq)
    });
    pool_blocks(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, Engine};
    use crate::curve::YieldCurve;
    use crate::gas::bond_value_at_state;
    use crate::process::covariance_x;

    fn model(n: usize, sigma: f64, gamma: f64) -> CalibratedModel {
        let grid = TenorGrid::new(n, 0.25).unwrap();
        let spec = ProcessSpec::new(sigma, gamma).unwrap();
        let curve = YieldCurve::flat_forward(n, 0.25, 0.05).unwrap();
        calibrate(&grid, &spec, &curve, &Engine::default()).unwrap()
    }

    #[test]
    fn zero_volatility_paths_vanish() {
        let spec = ProcessSpec::new(0.0, 0.1).unwrap();
        let grid = TenorGrid::new(5, 0.5).unwrap();
        let batch = simulate_paths(&spec, &grid, 300, 1, None).unwrap();
        assert!(batch.values.iter().all(|&x| x == 0.0));
    }

    /// Exact transition sampling: the marginal variance at t = 1 and the lag
    /// covariance between t = 1 and t = 2 must match the closed forms.
    #[test]
    fn marginal_moments_match_closed_forms() {
        let spec = ProcessSpec::new(0.2, 0.1).unwrap();
        let grid = TenorGrid::new(8, 0.25).unwrap();
        let count = 1_000_000;
        let batch = simulate_paths(&spec, &grid, count, 42, None).unwrap();
        let (k1, k2) = (4, 8); // t = 1 and t = 2
        let mut s1 = 0.0;
        let mut s11 = 0.0;
        let mut s12 = 0.0;
        let mut s2 = 0.0;
        for p in 0..count {
            let a = batch.state(p, k1);
            let b = batch.state(p, k2);
            s1 += a;
            s2 += b;
            s11 += a * a;
            s12 += a * b;
        }
        let nf = count as f64;
        let var = s11 / nf - (s1 / nf).powi(2);
        let cov = s12 / nf - s1 / nf * (s2 / nf);
        let g = variance_g(&spec, 1.0).unwrap();
        let x12 = covariance_x(&spec, 1.0, 2.0).unwrap();
        // s.e. of a variance estimate is roughly G sqrt(2/N).
        let se_var = g * (2.0 / nf).sqrt();
        assert!((var - g).abs() < 3.0 * se_var, "var {var} vs {g}");
        assert!((cov - x12).abs() < 4.0 * se_var, "cov {cov} vs {x12}");
        assert!((s1 / nf).abs() < 4.0 * (g / nf).sqrt());
    }

    #[test]
    fn truncation_clips_to_the_stated_envelope() {
        let spec = ProcessSpec::new(0.3, 0.0).unwrap();
        let grid = TenorGrid::new(6, 0.5).unwrap();
        let c = 1.0;
        let batch = simulate_paths(&spec, &grid, 20_000, 7, Some(c)).unwrap();
        for p in 0..batch.count {
            for k in 1..=batch.steps {
                let bound = c * spec.sigma * grid.time(k).sqrt();
                assert!(batch.state(p, k).abs() <= bound + 1e-12);
            }
        }
        // The clipped ensemble must lose variance relative to the free one.
        let free = simulate_paths(&spec, &grid, 20_000, 7, None).unwrap();
        let var =
            |b: &PathBatch| b.values.iter().map(|x| x * x).sum::<f64>() / b.values.len() as f64;
        assert!(var(&batch) < var(&free));
        assert!(simulate_paths(&spec, &grid, 10, 7, Some(-1.0)).is_err());
    }

    #[test]
    fn identical_seeds_reproduce_estimates_bitwise() {
        let m = model(6, 0.3, 0.05);
        let a = mc_bond_value(&m, 1, 0.2, 30_000, 9).unwrap();
        let b = mc_bond_value(&m, 1, 0.2, 30_000, 9).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let c = mc_bond_value(&m, 1, 0.2, 30_000, 10).unwrap();
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn bond_estimate_is_exact_in_degenerate_cases() {
        let m = model(6, 0.3, 0.05);
        let last = mc_bond_value(&m, 5, 0.4, 100, 3).unwrap();
        assert_eq!(last.mean, 1.0);
        assert_eq!(last.stderr, 0.0);

        let frozen = model(6, 0.0, 0.05);
        let est = mc_bond_value(&frozen, 2, 0.0, 100, 3).unwrap();
        let exact: f64 = (3..6)
            .map(|k| 1.0 + frozen.libor(k).unwrap() * 0.25)
            .product();
        // All paths produce the identical product; the only spread left is
        // accumulation rounding in the streaming variance.
        assert!((est.mean - exact).abs() < 1e-14);
        assert!(est.stderr < 1e-7, "stderr {}", est.stderr);
    }

    #[test]
    fn bond_estimate_agrees_with_enumeration() {
        let m = model(6, 0.3, 0.05);
        let sub = m.subsystem(2).unwrap();
        let exact = bond_value_at_state(&sub, 0.1).unwrap();
        let est = mc_bond_value(&m, 2, 0.1, 400_000, 17).unwrap();
        let z = (est.mean - exact) / est.stderr;
        assert!(z.abs() < 4.0, "z = {z}, est {} vs exact {exact}", est.mean);
    }

    /// phi = 0 turns the convexity factor into the plain bond expectation,
    /// which calibration pins to the discount ratio.
    #[test]
    fn zero_phi_recovers_the_curve() {
        let m = model(7, 0.25, 0.03);
        for i in [0, 3] {
            let est = mc_convexity_n(&m, i, 0.0, 400_000, 23, None).unwrap();
            let exact = m.curve().phat(i + 1);
            let z = (est.mean - exact) / est.stderr;
            assert!(z.abs() < 4.0, "i = {i}: z = {z}");
        }
    }

    #[test]
    fn convexity_estimate_agrees_with_enumeration() {
        let m = model(6, 0.3, 0.05);
        let i = 2;
        let exact = crate::gas::enumerate_log_partition(&m.subsystem(i).unwrap(), 1.0)
            .unwrap()
            .log_value
            .exp();
        let est = mc_convexity_n(&m, i, 1.0, 400_000, 31, None).unwrap();
        let z = (est.mean - exact) / est.stderr;
        assert!(z.abs() < 4.0, "z = {z}, est {} vs exact {exact}", est.mean);
    }

    #[test]
    fn estimates_need_two_paths() {
        let m = model(4, 0.2, 0.01);
        assert!(mc_bond_value(&m, 1, 0.0, 1, 5).is_err());
        assert!(simulate_paths(m.spec(), m.grid(), 0, 5, None).is_err());
    }
}
